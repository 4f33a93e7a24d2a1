#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "koopman/dictionary.hpp"
#include "koopman/edmd.hpp"
#include "koopman/noise.hpp"
#include "koopman/snapshots.hpp"

namespace koopman {

/// First-order change of G^+ along dG (Golub-Pereyra):
///   -G^+ dG G^+ + G^+ G^+* dG^* (I - G G^+) + (I - G^+ G) dG^* G^+* G^+.
/// Valid along directions that keep the rank of G fixed.
Eigen::MatrixXd pinv_derivative(const Eigen::MatrixXd& G, const Eigen::MatrixXd& G_pinv, const Eigen::MatrixXd& dG);

/// Lifted training data plus per-coordinate state derivatives of the lift.
struct LiftedSnapshots {
    /// (M+1) x Q, row m is Psi(x_m, u_m).
    Eigen::MatrixXd psi;
    /// n_state matrices of size (M+1) x Q; row m of entry i is (dPsi_m/dx_m) e_i.
    std::vector<Eigen::MatrixXd> dpsi;

    Eigen::Index M() const noexcept { return psi.rows() - 1; }
};

LiftedSnapshots lift_with_jacobians(const Dictionary& dict, const SnapshotSet& snapshots);

/// dG/dx_m^i and dA/dx_m^i for snapshot m (0-based, 0..M) and state coordinate i.
/// dG uses the symmetric form (dPsi_m^* Psi_m + Psi_m^* dPsi_m) / M and vanishes at m = M.
Eigen::MatrixXd partial_G(const LiftedSnapshots& data, Eigen::Index m, Eigen::Index i);
Eigen::MatrixXd partial_A(const LiftedSnapshots& data, Eigen::Index m, Eigen::Index i);
Eigen::MatrixXd partial_G(const SnapshotSet& snapshots, const Dictionary& dict, Eigen::Index m, Eigen::Index i);
Eigen::MatrixXd partial_A(const SnapshotSet& snapshots, const Dictionary& dict, Eigen::Index m, Eigen::Index i);

/// Delta K^i = sum_m (dG^+/dx_m^i A + G^+ dA/dx_m^i) Delta x_m^i for an explicit
/// n_state x (M+1) noise realization. The m-sum is accumulated inside dG and dA
/// before a single pseudoinverse derivative, which is exact because that
/// derivative is linear in dG.
std::vector<Eigen::MatrixXd> delta_K_realization(const LiftedSnapshots& data, const KoopmanModel& model,
                                                 const Eigen::MatrixXd& noise);
/// Same quantity summed term by term over snapshots (reference path, O(M Q^3)).
std::vector<Eigen::MatrixXd> delta_K_per_snapshot(const LiftedSnapshots& data, const KoopmanModel& model,
                                                  const Eigen::MatrixXd& noise);

/// Delta K^i from noise statistics: mean substitution or the seeded
/// resampling average selected by `noise.substitution`.
std::vector<Eigen::MatrixXd> delta_K(const SnapshotSet& snapshots, const Dictionary& dict, const KoopmanModel& model,
                                     const NoiseSpec& noise);
std::vector<Eigen::MatrixXd> delta_K(const LiftedSnapshots& data, const KoopmanModel& model, const NoiseSpec& noise);

/// Eigenvalue and eigenvector sensitivities of K with respect to its entries k_ab.
///
/// With W holding left eigenvectors normalised as w_q^* xi_q = 1:
///   c_lambda_q^{ab} = conj(w_q^a) xi_q^b
///   H_qj            = conj(w_q) xi_j^T / (lambda_j - lambda_q),  q != j
///   c_xi_q^{ab}     = sum_{j != q} h_jq^{ab} xi_j        (d xi_q / d k_ab)
///   c_w_q^{ab}      = -sum_{j != q} h_qj^{ab} w_j^*      (d w_q^* / d k_ab)
/// The dense Q^4 tensors are kept in factored O(Q^3) form and expanded on access.
struct EigenSensitivity {
    /// inv_gap(q, j) = 1 / (lambda_j - lambda_q), zero on the diagonal.
    Eigen::MatrixXcd inv_gap;
    /// c_lambda[q](a, b).
    std::vector<Eigen::MatrixXcd> c_lambda;
    /// xi_factor[q].col(a) = sum_{j != q} conj(w_j^a) xi_j / (lambda_q - lambda_j).
    std::vector<Eigen::MatrixXcd> xi_factor;
    /// w_factor[q].row(b) = sum_{j != q} xi_j^b w_j^* / (lambda_j - lambda_q).
    std::vector<Eigen::MatrixXcd> w_factor;
    /// Copy of the spectral data the factors were built from.
    SpectralData spectrum;

    Eigen::Index Q() const noexcept { return inv_gap.rows(); }
    Eigen::MatrixXcd H(Eigen::Index q, Eigen::Index j) const;
    std::complex<double> h(Eigen::Index q, Eigen::Index j, Eigen::Index a, Eigen::Index b) const;
    std::complex<double> c_lam(Eigen::Index q, Eigen::Index a, Eigen::Index b) const { return c_lambda[q](a, b); }
    Eigen::VectorXcd c_xi(Eigen::Index q, Eigen::Index a, Eigen::Index b) const;
    Eigen::RowVectorXcd c_w(Eigen::Index q, Eigen::Index a, Eigen::Index b) const;
};

/// Throws DegenerateSpectrum if two eigenvalues are closer than the model's degeneracy_tol.
EigenSensitivity eigen_sensitivities(const KoopmanModel& model);

/// All offline sensitivity data for one trained model.
struct KoopmanSensitivity {
    std::vector<Eigen::MatrixXd> delta_K;
    EigenSensitivity eigen;
    /// Fingerprint of the model K these tensors belong to.
    std::uint64_t model_fingerprint = 0;

    Eigen::MatrixXd delta_K_total() const;
};

/// FNV-1a hash over the bytes of K, used to tie sensitivities to a model.
std::uint64_t model_fingerprint(const KoopmanModel& model);

KoopmanSensitivity compute_sensitivity(const LiftedSnapshots& data, const KoopmanModel& model,
                                       const NoiseSpec& noise);

/// sum_q d(v_q lambda_q phi_q)/d k_ab at observation psi, a vector of length n_state + n_input.
Eigen::VectorXcd mode_term_derivative(const KoopmanModel& model, const EigenSensitivity& sens,
                                      const Eigen::RowVectorXd& psi, Eigen::Index a, Eigen::Index b);

/// Full Q x Q grid of mode_term_derivative; entry [a * Q + b] holds the (a, b) vector.
std::vector<Eigen::VectorXcd> mode_term_matrix(const KoopmanModel& model, const EigenSensitivity& sens,
                                               const Eigen::RowVectorXd& psi);

/// e^T ( [mode-term derivatives]_{QxQ} .* sum_i Delta K^i ) e, complex, length n_state + n_input.
Eigen::VectorXcd prediction_error_lifted(const KoopmanModel& model, const KoopmanSensitivity& sens,
                                         const Eigen::RowVectorXd& psi);

/// Delta x_{t+1} = R * prediction_error_lifted, R = [I, 0] selecting the state block.
Eigen::VectorXd prediction_error(const KoopmanModel& model, const KoopmanSensitivity& sens,
                                 const Eigen::RowVectorXd& psi);

/// prediction_error_lifted is linear in psi; row k of the returned Q x (n_state + n_input)
/// matrix is its value at the k-th unit observation, so the online estimate is psi * kernel.
Eigen::MatrixXcd prediction_error_kernel(const KoopmanModel& model, const KoopmanSensitivity& sens);

}  // namespace koopman
