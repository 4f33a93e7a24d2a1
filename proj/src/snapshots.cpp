#include "koopman/snapshots.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "koopman/errors.hpp"

namespace koopman {

SnapshotSet::SnapshotSet(Eigen::MatrixXd X, Eigen::MatrixXd U) : X_(std::move(X)), U_(std::move(U)) {
    if (X_.cols() != U_.cols())
        throw DimensionError("snapshots: X and U must have the same number of columns");
    if (X_.cols() < 2) throw DimensionError("snapshots: need at least two snapshots (M >= 1)");
    if (X_.rows() < 1) throw DimensionError("snapshots: empty state");
    if (!X_.allFinite() || !U_.allFinite()) throw NonFiniteError("snapshots: non-finite measurement");
}

void write_snapshots_csv(const SnapshotSet& s, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "m";
    for (Eigen::Index i = 0; i < s.n_state(); ++i) out << ",x" << i + 1;
    for (Eigen::Index i = 0; i < s.n_input(); ++i) out << ",u" << i + 1;
    out << '\n' << std::setprecision(17);
    for (Eigen::Index m = 0; m < s.X().cols(); ++m) {
        out << m + 1;
        for (Eigen::Index i = 0; i < s.n_state(); ++i) out << ',' << s.X()(i, m);
        for (Eigen::Index i = 0; i < s.n_input(); ++i) out << ',' << s.U()(i, m);
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

SnapshotSet read_snapshots_csv(const std::filesystem::path& path, Eigen::Index n_state) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty snapshot file: " + path.string());

    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    if (header.size() < 2 || header[0] != "m") throw IoError("snapshot csv: header must start with 'm'");
    const auto n_cols = static_cast<Eigen::Index>(header.size()) - 1;
    if (n_state < 0) {
        n_state = 0;
        for (std::size_t c = 1; c < header.size(); ++c)
            if (!header[c].empty() && header[c][0] == 'x') ++n_state;
    }
    if (n_state < 1 || n_state > n_cols) throw IoError("snapshot csv: cannot determine state columns");

    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw IoError("snapshot csv: bad number '" + cell + "' on line " + std::to_string(lineno));
            }
        }
        if (static_cast<Eigen::Index>(row.size()) != n_cols + 1)
            throw IoError("snapshot csv: wrong column count on line " + std::to_string(lineno));
        rows.push_back(std::move(row));
    }
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd X(n_state, n), U(n_cols - n_state, n);
    for (Eigen::Index m = 0; m < n; ++m) {
        const auto& r = rows[static_cast<std::size_t>(m)];
        for (Eigen::Index i = 0; i < n_state; ++i) X(i, m) = r[static_cast<std::size_t>(1 + i)];
        for (Eigen::Index i = 0; i < n_cols - n_state; ++i) U(i, m) = r[static_cast<std::size_t>(1 + n_state + i)];
    }
    return SnapshotSet(std::move(X), std::move(U));
}

}  // namespace koopman
