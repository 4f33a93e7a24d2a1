#pragma once

#include <cstdint>
#include <utility>

#include <Eigen/Dense>

#include "koopman/dictionary.hpp"
#include "koopman/snapshots.hpp"

namespace koopman {

struct EdmdOptions {
    /// Singular values below svd_tol * sigma_max are dropped from G^+.
    double svd_tol = 1e-10;
    /// Minimum admissible |lambda_j - lambda_q| for j != q.
    double degeneracy_tol = 1e-8;
    /// Accepted |imag| / (1 + |real|) when a prediction is projected to the reals.
    double imag_tol = 1e-8;
};

/// Eigen-triples of K sorted by descending |lambda|, complex-conjugate pairs
/// adjacent (positive imaginary part first). Columns of `left` satisfy
/// left.col(q).adjoint() * right.col(p) == delta_qp.
struct SpectralData {
    Eigen::VectorXcd eigvals;
    Eigen::MatrixXcd right;
    Eigen::MatrixXcd left;
};

/// Trained EDMD-with-control model. Immutable once built by fit_model().
struct KoopmanModel {
    Dictionary dict;
    Eigen::MatrixXd G;
    Eigen::MatrixXd A;
    Eigen::MatrixXd G_pinv;
    Eigen::MatrixXd K;
    SpectralData spectrum;
    /// Q x (n_state + n_input) recovery matrix, [x; u] = (Psi B)^T.
    Eigen::MatrixXd B;
    /// Q x (n_state + n_input) fast-prediction factor sum_q xi_q lambda_q w_q^* B.
    Eigen::MatrixXcd F;
    EdmdOptions options;
    std::uint64_t seed = 0;

    Eigen::Index Q() const noexcept { return K.rows(); }
    Eigen::Index n_state() const noexcept { return dict.n_state(); }
    Eigen::Index n_input() const noexcept { return dict.n_input(); }
};

/// Rows are Psi(x_m, u_m) for m = 1..M+1, i.e. an (M+1) x Q matrix.
Eigen::MatrixXd lift(const Dictionary& dict, const SnapshotSet& snapshots);

/// G = 1/M sum_{m<=M} Psi_m^* Psi_m and A = 1/M sum_{m<=M} Psi_m^* Psi_{m+1}.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> compute_g_a(const SnapshotSet& snapshots, const Dictionary& dict);
/// Same, starting from an already lifted (M+1) x Q matrix.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> compute_g_a(const Eigen::MatrixXd& lifted);

/// SVD pseudoinverse truncating singular values below svd_tol * sigma_max.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& G, double svd_tol);

/// K = G^+ A.
Eigen::MatrixXd estimate_koopman(const Eigen::MatrixXd& G, const Eigen::MatrixXd& A, double svd_tol);

/// Least-squares residual J(K) = 1/2 sum_m ||Psi_{m+1} - Psi_m K||^2.
double edmd_residual(const Eigen::MatrixXd& K, const Eigen::MatrixXd& lifted);

/// Biorthonormal eigendecomposition. Throws DegenerateSpectrum when two
/// eigenvalues are closer than `degeneracy_tol`.
SpectralData eigendecompose(const Eigen::MatrixXd& K, double degeneracy_tol = 1e-8);

/// Selector for dictionaries carrying identity observables for every [x; u] coordinate.
Eigen::MatrixXd compute_B(const Dictionary& dict);
/// Falls back to a least-squares fit over `lifted` training rows when the
/// dictionary lacks identity observables; rejects fits with residual above 1e-8.
Eigen::MatrixXd compute_B(const Dictionary& dict, const Eigen::MatrixXd& lifted, const SnapshotSet& snapshots);

Eigen::MatrixXcd compute_F(const SpectralData& spectrum, const Eigen::MatrixXd& B);
Eigen::MatrixXcd compute_F(const KoopmanModel& model);

/// Runs lift -> (G, A) -> K -> spectrum -> B -> F.
KoopmanModel fit_model(const SnapshotSet& snapshots, const Dictionary& dict, const EdmdOptions& options = {});

/// Full lifted-output prediction [x_{t+1}; u_{t+1}] = (Psi_t F)^T, complex.
Eigen::VectorXcd predict_lifted(const KoopmanModel& model, const Eigen::RowVectorXd& psi);
/// Same quantity through the explicit mode sum  sum_q v_q lambda_q phi_q(x, u).
Eigen::VectorXcd predict_mode_sum(const KoopmanModel& model, const Eigen::RowVectorXd& psi);

/// Real part of the first n_state entries of (Psi_t F)^T. Throws
/// ImaginaryResidue if any imaginary part exceeds imag_tol * (1 + |real|).
Eigen::VectorXd predict(const KoopmanModel& model, const VectorRef& x, const VectorRef& u);
Eigen::VectorXd predict_from_psi(const KoopmanModel& model, const Eigen::RowVectorXd& psi);

/// Drops the imaginary part of `v` after checking it against `imag_tol`.
Eigen::VectorXd real_part_checked(const Eigen::VectorXcd& v, double imag_tol, const char* what);

}  // namespace koopman
