#pragma once

#include <filesystem>

#include <Eigen/Dense>

namespace koopman {

/// M+1 consecutive state and input measurements, stored column-wise.
class SnapshotSet {
public:
    SnapshotSet() = default;
    /// Throws DimensionError on mismatched column counts (or fewer than two
    /// snapshots) and NonFiniteError on NaN/Inf entries.
    SnapshotSet(Eigen::MatrixXd X, Eigen::MatrixXd U);

    const Eigen::MatrixXd& X() const noexcept { return X_; }
    const Eigen::MatrixXd& U() const noexcept { return U_; }
    Eigen::Index n_state() const noexcept { return X_.rows(); }
    Eigen::Index n_input() const noexcept { return U_.rows(); }
    /// Number of snapshot pairs.
    Eigen::Index M() const noexcept { return X_.cols() - 1; }

    bool operator==(const SnapshotSet& other) const {
        return X_.rows() == other.X_.rows() && U_.rows() == other.U_.rows() && X_.cols() == other.X_.cols() &&
               X_ == other.X_ && U_ == other.U_;
    }

private:
    Eigen::MatrixXd X_;
    Eigen::MatrixXd U_;
};

/// CSV with header `m,x1..xN,u1..uN`; m counts from 1. Values are written
/// with 17 significant digits so a write/read cycle is exact.
void write_snapshots_csv(const SnapshotSet& s, const std::filesystem::path& path);
/// `n_state` splits the numeric columns; -1 infers it from the header names.
SnapshotSet read_snapshots_csv(const std::filesystem::path& path, Eigen::Index n_state = -1);

}  // namespace koopman
