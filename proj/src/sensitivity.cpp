#include "koopman/sensitivity.hpp"

#include <cstring>
#include <random>
#include <sstream>

#include "koopman/errors.hpp"

namespace koopman {

using cd = std::complex<double>;

Eigen::MatrixXd pinv_derivative(const Eigen::MatrixXd& G, const Eigen::MatrixXd& G_pinv, const Eigen::MatrixXd& dG) {
    if (G.rows() != dG.rows() || G.cols() != dG.cols() || G_pinv.rows() != G.cols() || G_pinv.cols() != G.rows())
        throw DimensionError("pinv_derivative: shape mismatch");
    const Eigen::MatrixXd dGt = dG.transpose();
    const Eigen::MatrixXd left_proj = Eigen::MatrixXd::Identity(G.rows(), G.rows()) - G * G_pinv;
    const Eigen::MatrixXd right_proj = Eigen::MatrixXd::Identity(G.cols(), G.cols()) - G_pinv * G;
    return -G_pinv * dG * G_pinv + G_pinv * G_pinv.transpose() * dGt * left_proj +
           right_proj * dGt * G_pinv.transpose() * G_pinv;
}

LiftedSnapshots lift_with_jacobians(const Dictionary& dict, const SnapshotSet& snapshots) {
    LiftedSnapshots out;
    out.psi = lift(dict, snapshots);
    const Eigen::Index n = snapshots.X().cols();
    const Eigen::Index nx = dict.n_state();
    out.dpsi.assign(static_cast<std::size_t>(nx), Eigen::MatrixXd(n, dict.size()));
    for (Eigen::Index m = 0; m < n; ++m) {
        const Eigen::MatrixXd jac = dict.jacobian_state(snapshots.X().col(m), snapshots.U().col(m));
        for (Eigen::Index i = 0; i < nx; ++i) out.dpsi[static_cast<std::size_t>(i)].row(m) = jac.col(i).transpose();
    }
    return out;
}

namespace {

void check_index(const LiftedSnapshots& data, Eigen::Index m, Eigen::Index i) {
    if (m < 0 || m > data.M() || i < 0 || i >= static_cast<Eigen::Index>(data.dpsi.size())) {
        std::ostringstream os;
        os << "partial derivative index (m=" << m << ", i=" << i << ") out of range";
        throw DimensionError(os.str());
    }
}

}  // namespace

Eigen::MatrixXd partial_G(const LiftedSnapshots& data, Eigen::Index m, Eigen::Index i) {
    check_index(data, m, i);
    const Eigen::Index Q = data.psi.cols();
    if (m == data.M()) return Eigen::MatrixXd::Zero(Q, Q);
    const auto psi = data.psi.row(m);
    const auto dpsi = data.dpsi[static_cast<std::size_t>(i)].row(m);
    const double scale = 1.0 / static_cast<double>(data.M());
    return scale * (dpsi.transpose() * psi + psi.transpose() * dpsi);
}

Eigen::MatrixXd partial_A(const LiftedSnapshots& data, Eigen::Index m, Eigen::Index i) {
    check_index(data, m, i);
    const Eigen::Index Q = data.psi.cols();
    const auto dpsi = data.dpsi[static_cast<std::size_t>(i)].row(m);
    const double scale = 1.0 / static_cast<double>(data.M());
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(Q, Q);
    // x_m enters A as the left factor of pair (m, m+1) and the right factor of pair (m-1, m).
    if (m < data.M()) out += dpsi.transpose() * data.psi.row(m + 1);
    if (m > 0) out += data.psi.row(m - 1).transpose() * dpsi;
    return scale * out;
}

Eigen::MatrixXd partial_G(const SnapshotSet& snapshots, const Dictionary& dict, Eigen::Index m, Eigen::Index i) {
    return partial_G(lift_with_jacobians(dict, snapshots), m, i);
}

Eigen::MatrixXd partial_A(const SnapshotSet& snapshots, const Dictionary& dict, Eigen::Index m, Eigen::Index i) {
    return partial_A(lift_with_jacobians(dict, snapshots), m, i);
}

namespace {

void check_noise_shape(const LiftedSnapshots& data, const KoopmanModel& model, const Eigen::MatrixXd& noise) {
    if (noise.rows() != static_cast<Eigen::Index>(data.dpsi.size()) || noise.cols() != data.psi.rows())
        throw DimensionError("delta_K: noise realization must be n_state x (M+1)");
    if (data.psi.cols() != model.Q()) throw DimensionError("delta_K: lifted data and model disagree on Q");
}

}  // namespace

std::vector<Eigen::MatrixXd> delta_K_realization(const LiftedSnapshots& data, const KoopmanModel& model,
                                                 const Eigen::MatrixXd& noise) {
    check_noise_shape(data, model, noise);
    const Eigen::Index M = data.M();
    const Eigen::Index Q = model.Q();
    const double scale = 1.0 / static_cast<double>(M);
    std::vector<Eigen::MatrixXd> out;
    out.reserve(data.dpsi.size());
    for (std::size_t i = 0; i < data.dpsi.size(); ++i) {
        const Eigen::RowVectorXd row = noise.row(static_cast<Eigen::Index>(i));
        if (row.isZero(0.0)) {
            out.push_back(Eigen::MatrixXd::Zero(Q, Q));
            continue;
        }
        // D.row(m) = Delta x_m^i * (dPsi_m/dx_m) e_i
        const Eigen::MatrixXd D = row.transpose().asDiagonal() * data.dpsi[i];
        const auto P_head = data.psi.topRows(M);
        const auto P_tail = data.psi.bottomRows(M);
        const auto D_head = D.topRows(M);
        const auto D_tail = D.bottomRows(M);
        const Eigen::MatrixXd dG = scale * (D_head.transpose() * P_head + P_head.transpose() * D_head);
        const Eigen::MatrixXd dA = scale * (D_head.transpose() * P_tail + P_head.transpose() * D_tail);
        out.push_back(pinv_derivative(model.G, model.G_pinv, dG) * model.A + model.G_pinv * dA);
    }
    return out;
}

std::vector<Eigen::MatrixXd> delta_K_per_snapshot(const LiftedSnapshots& data, const KoopmanModel& model,
                                                  const Eigen::MatrixXd& noise) {
    check_noise_shape(data, model, noise);
    const Eigen::Index Q = model.Q();
    std::vector<Eigen::MatrixXd> out(data.dpsi.size(), Eigen::MatrixXd::Zero(Q, Q));
    for (std::size_t i = 0; i < data.dpsi.size(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        for (Eigen::Index m = 0; m <= data.M(); ++m) {
            const double dx = noise(ii, m);
            if (dx == 0.0) continue;
            const Eigen::MatrixXd dG = partial_G(data, m, ii);
            const Eigen::MatrixXd dA = partial_A(data, m, ii);
            out[i] += (pinv_derivative(model.G, model.G_pinv, dG) * model.A + model.G_pinv * dA) * dx;
        }
    }
    return out;
}

std::vector<Eigen::MatrixXd> delta_K(const LiftedSnapshots& data, const KoopmanModel& model, const NoiseSpec& noise) {
    noise.validate();
    const auto nx = static_cast<Eigen::Index>(data.dpsi.size());
    if (noise.n_state() != nx) throw DimensionError("delta_K: noise spec has wrong number of state coordinates");
    const Eigen::Index cols = data.psi.rows();
    if (noise.is_zero()) return std::vector<Eigen::MatrixXd>(data.dpsi.size(), Eigen::MatrixXd::Zero(model.Q(), model.Q()));

    if (noise.substitution == NoiseSubstitution::mean) {
        const Eigen::MatrixXd realization = noise.expectation().replicate(1, cols);
        return delta_K_realization(data, model, realization);
    }

    std::mt19937_64 rng = make_rng(noise.seed, 2);
    std::vector<Eigen::MatrixXd> acc(data.dpsi.size(), Eigen::MatrixXd::Zero(model.Q(), model.Q()));
    for (int s = 0; s < noise.n_samples; ++s) {
        const Eigen::MatrixXd realization = sample_noise(noise, cols, rng);
        const auto dk = delta_K_realization(data, model, realization);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += dk[i];
    }
    for (auto& m : acc) m /= static_cast<double>(noise.n_samples);
    return acc;
}

std::vector<Eigen::MatrixXd> delta_K(const SnapshotSet& snapshots, const Dictionary& dict, const KoopmanModel& model,
                                     const NoiseSpec& noise) {
    return delta_K(lift_with_jacobians(dict, snapshots), model, noise);
}

Eigen::MatrixXcd EigenSensitivity::H(Eigen::Index q, Eigen::Index j) const {
    if (q == j) throw DimensionError("H is defined only for q != j");
    return inv_gap(q, j) * (spectrum.left.col(q).conjugate() * spectrum.right.col(j).transpose());
}

cd EigenSensitivity::h(Eigen::Index q, Eigen::Index j, Eigen::Index a, Eigen::Index b) const {
    if (q == j) throw DimensionError("H is defined only for q != j");
    return inv_gap(q, j) * std::conj(spectrum.left(a, q)) * spectrum.right(b, j);
}

Eigen::VectorXcd EigenSensitivity::c_xi(Eigen::Index q, Eigen::Index a, Eigen::Index b) const {
    return spectrum.right(b, q) * xi_factor[static_cast<std::size_t>(q)].col(a);
}

Eigen::RowVectorXcd EigenSensitivity::c_w(Eigen::Index q, Eigen::Index a, Eigen::Index b) const {
    return -std::conj(spectrum.left(a, q)) * w_factor[static_cast<std::size_t>(q)].row(b);
}

EigenSensitivity eigen_sensitivities(const KoopmanModel& model) {
    const auto& sp = model.spectrum;
    const Eigen::Index Q = sp.eigvals.size();
    EigenSensitivity out;
    out.spectrum = sp;
    out.inv_gap = Eigen::MatrixXcd::Zero(Q, Q);
    for (Eigen::Index q = 0; q < Q; ++q)
        for (Eigen::Index j = 0; j < Q; ++j) {
            if (q == j) continue;
            const cd gap = sp.eigvals[j] - sp.eigvals[q];
            if (std::abs(gap) < model.options.degeneracy_tol) {
                std::ostringstream os;
                os << "eigen_sensitivities: |lambda_" << j << " - lambda_" << q << "| = " << std::abs(gap)
                   << " below degeneracy tolerance";
                throw DegenerateSpectrum(os.str());
            }
            out.inv_gap(q, j) = 1.0 / gap;
        }

    const Eigen::MatrixXcd W_adj = sp.left.adjoint();  // row j is w_j^*
    out.c_lambda.reserve(static_cast<std::size_t>(Q));
    out.xi_factor.reserve(static_cast<std::size_t>(Q));
    out.w_factor.reserve(static_cast<std::size_t>(Q));
    for (Eigen::Index q = 0; q < Q; ++q) {
        out.c_lambda.push_back(sp.left.col(q).conjugate() * sp.right.col(q).transpose());
        // inv_gap(j, q) = 1/(lambda_q - lambda_j) weights column j for xi; inv_gap(q, j) for w.
        out.xi_factor.push_back(sp.right * out.inv_gap.col(q).asDiagonal() * W_adj);
        out.w_factor.push_back(sp.right * out.inv_gap.row(q).transpose().asDiagonal() * W_adj);
    }
    return out;
}

Eigen::MatrixXd KoopmanSensitivity::delta_K_total() const {
    if (delta_K.empty()) return {};
    Eigen::MatrixXd total = Eigen::MatrixXd::Zero(delta_K.front().rows(), delta_K.front().cols());
    for (const auto& dk : delta_K) total += dk;
    return total;
}

std::uint64_t model_fingerprint(const KoopmanModel& model) {
    std::uint64_t h = 1469598103934665603ULL;
    const auto* bytes = reinterpret_cast<const unsigned char*>(model.K.data());
    const auto n = static_cast<std::size_t>(model.K.size()) * sizeof(double);
    for (std::size_t k = 0; k < n; ++k) {
        h ^= bytes[k];
        h *= 1099511628211ULL;
    }
    return h;
}

KoopmanSensitivity compute_sensitivity(const LiftedSnapshots& data, const KoopmanModel& model,
                                       const NoiseSpec& noise) {
    KoopmanSensitivity out;
    out.delta_K = delta_K(data, model, noise);
    out.eigen = eigen_sensitivities(model);
    out.model_fingerprint = model_fingerprint(model);
    return out;
}

namespace {

// Per-observation quantities shared by every (a, b) of the mode-term grid.
struct ModeTermContext {
    Eigen::VectorXcd phi;                  // phi_q = psi xi_q
    Eigen::MatrixXcd modes;                // column q is v_q = (w_q^* B)^T
    Eigen::MatrixXcd psi_xi_factor;        // row q: psi * xi_factor[q], indexed by a
    std::vector<Eigen::MatrixXcd> w_fac_B;  // w_factor[q] * B, indexed by b
    const std::vector<Eigen::MatrixXcd>* c_lambda = nullptr;
};

ModeTermContext make_context(const KoopmanModel& model, const EigenSensitivity& sens, const Eigen::RowVectorXd& psi) {
    const Eigen::Index Q = model.Q();
    if (psi.size() != Q) throw DimensionError("mode term: observation has wrong length");
    if (sens.Q() != Q) throw DimensionError("mode term: sensitivity and model disagree on Q");
    const auto& sp = model.spectrum;
    const Eigen::MatrixXcd Bc = model.B.cast<cd>();
    const Eigen::RowVectorXcd psic = psi.cast<cd>();
    ModeTermContext ctx;
    ctx.c_lambda = &sens.c_lambda;
    ctx.phi = (psic * sp.right).transpose();
    ctx.modes = (sp.left.adjoint() * Bc).transpose();
    ctx.psi_xi_factor.resize(Q, Q);
    ctx.w_fac_B.reserve(static_cast<std::size_t>(Q));
    for (Eigen::Index q = 0; q < Q; ++q) {
        ctx.psi_xi_factor.row(q) = psic * sens.xi_factor[static_cast<std::size_t>(q)];
        ctx.w_fac_B.push_back(sens.w_factor[static_cast<std::size_t>(q)] * Bc);
    }
    return ctx;
}

// Three-term product rule for one (a, b):
//   d v_q/dk_ab lambda_q phi_q + v_q dlambda_q/dk_ab phi_q + v_q lambda_q psi dxi_q/dk_ab
Eigen::VectorXcd mode_term(const KoopmanModel& model, const ModeTermContext& ctx, Eigen::Index a, Eigen::Index b) {
    const auto& sp = model.spectrum;
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(model.B.cols());
    for (Eigen::Index q = 0; q < model.Q(); ++q) {
        const cd wa = std::conj(sp.left(a, q));
        const cd xb = sp.right(b, q);
        const cd lam = sp.eigvals[q];
        // c_w B = -conj(w_q^a) (w_factor[q] B).row(b)
        out -= (wa * lam * ctx.phi[q]) * ctx.w_fac_B[static_cast<std::size_t>(q)].row(b).transpose();
        // psi c_xi = xi_q^b (psi xi_factor[q])_a
        const cd c_lam = (*ctx.c_lambda)[static_cast<std::size_t>(q)](a, b);
        out += (c_lam * ctx.phi[q] + lam * xb * ctx.psi_xi_factor(q, a)) * ctx.modes.col(q);
    }
    return out;
}

}  // namespace

Eigen::VectorXcd mode_term_derivative(const KoopmanModel& model, const EigenSensitivity& sens,
                                      const Eigen::RowVectorXd& psi, Eigen::Index a, Eigen::Index b) {
    if (a < 0 || b < 0 || a >= model.Q() || b >= model.Q()) throw DimensionError("mode term: index out of range");
    return mode_term(model, make_context(model, sens, psi), a, b);
}

std::vector<Eigen::VectorXcd> mode_term_matrix(const KoopmanModel& model, const EigenSensitivity& sens,
                                               const Eigen::RowVectorXd& psi) {
    const ModeTermContext ctx = make_context(model, sens, psi);
    const Eigen::Index Q = model.Q();
    std::vector<Eigen::VectorXcd> grid;
    grid.reserve(static_cast<std::size_t>(Q * Q));
    for (Eigen::Index a = 0; a < Q; ++a)
        for (Eigen::Index b = 0; b < Q; ++b) grid.push_back(mode_term(model, ctx, a, b));
    return grid;
}

Eigen::VectorXcd prediction_error_lifted(const KoopmanModel& model, const KoopmanSensitivity& sens,
                                         const Eigen::RowVectorXd& psi) {
    if (sens.model_fingerprint != model_fingerprint(model))
        throw KoopmanError("prediction_error: sensitivity was computed for a different model");
    const Eigen::Index Q = model.Q();
    const Eigen::MatrixXd dK = sens.delta_K_total();
    const auto grid = mode_term_matrix(model, sens.eigen, psi);
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(model.B.cols());
    for (Eigen::Index a = 0; a < Q; ++a)
        for (Eigen::Index b = 0; b < Q; ++b) {
            const double w = dK(a, b);
            if (w != 0.0) out += grid[static_cast<std::size_t>(a * Q + b)] * w;
        }
    return out;
}

Eigen::VectorXd prediction_error(const KoopmanModel& model, const KoopmanSensitivity& sens,
                                 const Eigen::RowVectorXd& psi) {
    const Eigen::VectorXcd full = prediction_error_lifted(model, sens, psi);
    return real_part_checked(full.head(model.n_state()), model.options.imag_tol, "prediction_error");
}

Eigen::MatrixXcd prediction_error_kernel(const KoopmanModel& model, const KoopmanSensitivity& sens) {
    const Eigen::Index Q = model.Q();
    Eigen::MatrixXcd kernel(Q, model.B.cols());
    Eigen::RowVectorXd unit = Eigen::RowVectorXd::Zero(Q);
    for (Eigen::Index k = 0; k < Q; ++k) {
        unit[k] = 1.0;
        kernel.row(k) = prediction_error_lifted(model, sens, unit).transpose();
        unit[k] = 0.0;
    }
    return kernel;
}

}  // namespace koopman
