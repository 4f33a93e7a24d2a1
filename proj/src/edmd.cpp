#include "koopman/edmd.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "koopman/errors.hpp"

namespace koopman {

Eigen::MatrixXd lift(const Dictionary& dict, const SnapshotSet& snapshots) {
    if (snapshots.n_state() != dict.n_state() || snapshots.n_input() != dict.n_input())
        throw DimensionError("lift: snapshot dimensions do not match the dictionary");
    const Eigen::Index n = snapshots.X().cols();
    Eigen::MatrixXd lifted(n, dict.size());
    Eigen::RowVectorXd row(dict.size());
    for (Eigen::Index m = 0; m < n; ++m) {
        dict.evaluate_into(snapshots.X().col(m), snapshots.U().col(m), row);
        lifted.row(m) = row;
    }
    return lifted;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> compute_g_a(const Eigen::MatrixXd& lifted) {
    const Eigen::Index M = lifted.rows() - 1;
    if (M < 1) throw DimensionError("compute_g_a: need at least two lifted snapshots");
    if (!lifted.allFinite()) throw NonFiniteError("compute_g_a: non-finite lifted snapshot");
    if (M < lifted.cols())
        std::clog << "warning: M=" << M << " snapshot pairs < Q=" << lifted.cols()
                  << " observables; G is rank deficient\n";
    const auto head = lifted.topRows(M);
    const auto tail = lifted.bottomRows(M);
    const double scale = 1.0 / static_cast<double>(M);
    Eigen::MatrixXd G = scale * (head.transpose() * head);
    Eigen::MatrixXd A = scale * (head.transpose() * tail);
    // Exact symmetry; the product above is symmetric only up to rounding.
    G = 0.5 * (G + G.transpose()).eval();
    return {std::move(G), std::move(A)};
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> compute_g_a(const SnapshotSet& snapshots, const Dictionary& dict) {
    return compute_g_a(lift(dict, snapshots));
}

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& G, double svd_tol) {
    if (G.size() == 0) throw DimensionError("pseudo_inverse: empty matrix");
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(G, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s[0] == 0.0) throw KoopmanError("pseudo_inverse: matrix is identically zero (no data)");
    const double cutoff = svd_tol * s[0];
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
    for (Eigen::Index k = 0; k < s.size(); ++k)
        if (s[k] > cutoff) inv[k] = 1.0 / s[k];
    return svd.matrixV().leftCols(s.size()) * inv.asDiagonal() * svd.matrixU().leftCols(s.size()).transpose();
}

Eigen::MatrixXd estimate_koopman(const Eigen::MatrixXd& G, const Eigen::MatrixXd& A, double svd_tol) {
    if (G.rows() != G.cols() || A.rows() != A.cols() || G.rows() != A.rows())
        throw DimensionError("estimate_koopman: G and A must be square and of equal size");
    return pseudo_inverse(G, svd_tol) * A;
}

double edmd_residual(const Eigen::MatrixXd& K, const Eigen::MatrixXd& lifted) {
    const Eigen::Index M = lifted.rows() - 1;
    return 0.5 * (lifted.bottomRows(M) - lifted.topRows(M) * K).squaredNorm();
}

namespace {

// Deterministic phase: unit norm, largest-magnitude entry real and positive.
void normalize_phase(Eigen::Ref<Eigen::VectorXcd> v) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index k = 0; k < v.size(); ++k) {
        const double a = std::abs(v[k]);
        if (a > best * (1.0 + 1e-12)) {
            best = a;
            arg = k;
        }
    }
    const std::complex<double> phase = std::conj(v[arg]) / std::abs(v[arg]);
    v *= phase / v.norm();
}

}  // namespace

SpectralData eigendecompose(const Eigen::MatrixXd& K, double degeneracy_tol) {
    if (K.rows() != K.cols() || K.rows() == 0) throw DimensionError("eigendecompose: K must be square");
    if (!K.allFinite()) throw NonFiniteError("eigendecompose: K is not finite");
    const Eigen::Index Q = K.rows();

    Eigen::EigenSolver<Eigen::MatrixXd> solver(K, true);
    if (solver.info() != Eigen::Success) throw KoopmanError("eigendecompose: eigen-solver failed to converge");
    const Eigen::VectorXcd raw_vals = solver.eigenvalues();
    const Eigen::MatrixXcd raw_vecs = solver.eigenvectors();

    for (Eigen::Index j = 0; j < Q; ++j)
        for (Eigen::Index q = j + 1; q < Q; ++q)
            if (std::abs(raw_vals[j] - raw_vals[q]) < degeneracy_tol) {
                std::ostringstream os;
                os << "eigendecompose: eigenvalues " << raw_vals[j] << " and " << raw_vals[q] << " are closer than "
                   << degeneracy_tol;
                throw DegenerateSpectrum(os.str());
            }

    std::vector<Eigen::Index> sorted(static_cast<std::size_t>(Q));
    std::iota(sorted.begin(), sorted.end(), Eigen::Index{0});
    std::stable_sort(sorted.begin(), sorted.end(), [&](Eigen::Index a, Eigen::Index b) {
        const double ma = std::abs(raw_vals[a]), mb = std::abs(raw_vals[b]);
        if (ma != mb) return ma > mb;
        return raw_vals[a].imag() > raw_vals[b].imag();
    });

    // Walk the sorted order, placing each conjugate partner right after its
    // positive-imaginary member.
    std::vector<Eigen::Index> order;
    std::vector<bool> used(static_cast<std::size_t>(Q), false);
    std::vector<bool> pair_head(static_cast<std::size_t>(Q), false);
    for (Eigen::Index idx : sorted) {
        if (used[static_cast<std::size_t>(idx)]) continue;
        used[static_cast<std::size_t>(idx)] = true;
        order.push_back(idx);
        if (raw_vals[idx].imag() == 0.0) continue;
        Eigen::Index partner = -1;
        double best = 0.0;
        for (Eigen::Index j : sorted) {
            if (used[static_cast<std::size_t>(j)]) continue;
            const double d = std::abs(raw_vals[j] - std::conj(raw_vals[idx]));
            if (partner < 0 || d < best) {
                partner = j;
                best = d;
            }
        }
        if (partner < 0) throw KoopmanError("eigendecompose: unpaired complex eigenvalue");
        used[static_cast<std::size_t>(partner)] = true;
        pair_head[order.size() - 1] = true;
        order.push_back(partner);
    }

    SpectralData out;
    out.eigvals.resize(Q);
    out.right.resize(Q, Q);
    for (Eigen::Index q = 0; q < Q; ++q) {
        const Eigen::Index src = order[static_cast<std::size_t>(q)];
        if (q > 0 && pair_head[static_cast<std::size_t>(q - 1)]) {
            out.eigvals[q] = std::conj(out.eigvals[q - 1]);
            out.right.col(q) = out.right.col(q - 1).conjugate();
            continue;
        }
        out.eigvals[q] = raw_vals[src];
        out.right.col(q) = raw_vecs.col(src);
        if (raw_vals[src].imag() == 0.0) {
            out.eigvals[q] = {raw_vals[src].real(), 0.0};
            out.right.col(q) = raw_vecs.col(src).real().cast<std::complex<double>>();
        }
        normalize_phase(out.right.col(q));
    }

    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(out.right);
    const Eigen::MatrixXcd inv = lu.inverse();
    if (!inv.allFinite()) throw DegenerateSpectrum("eigendecompose: eigenvector matrix is singular");
    out.left = inv.adjoint();
    for (Eigen::Index q = 0; q + 1 < Q; ++q) {
        if (pair_head[static_cast<std::size_t>(q)]) out.left.col(q + 1) = out.left.col(q).conjugate();
        if (out.eigvals[q].imag() == 0.0) out.left.col(q) = out.left.col(q).real().cast<std::complex<double>>();
    }
    if (out.eigvals[Q - 1].imag() == 0.0)
        out.left.col(Q - 1) = out.left.col(Q - 1).real().cast<std::complex<double>>();
    return out;
}

Eigen::MatrixXd compute_B(const Dictionary& dict) {
    const Eigen::Index n = dict.n_state() + dict.n_input();
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(dict.size(), n);
    std::vector<bool> found(static_cast<std::size_t>(n), false);
    for (Eigen::Index q = 0; q < dict.size(); ++q) {
        const auto& tag = dict[q].identity_of;
        if (!tag || *tag < 0 || *tag >= n || found[static_cast<std::size_t>(*tag)]) continue;
        B(q, *tag) = 1.0;
        found[static_cast<std::size_t>(*tag)] = true;
    }
    if (std::find(found.begin(), found.end(), false) != found.end())
        throw KoopmanError("compute_B: dictionary lacks identity observables; use the least-squares overload");
    return B;
}

Eigen::MatrixXd compute_B(const Dictionary& dict, const Eigen::MatrixXd& lifted, const SnapshotSet& snapshots) {
    try {
        return compute_B(dict);
    } catch (const KoopmanError&) {
    }
    const Eigen::Index n = dict.n_state() + dict.n_input();
    Eigen::MatrixXd target(lifted.rows(), n);
    target.leftCols(dict.n_state()) = snapshots.X().transpose();
    target.rightCols(dict.n_input()) = snapshots.U().transpose();
    const Eigen::MatrixXd B = lifted.completeOrthogonalDecomposition().solve(target);
    const double residual = (lifted * B - target).cwiseAbs().maxCoeff();
    const double scale = 1.0 + target.cwiseAbs().maxCoeff();
    if (residual > 1e-8 * scale) {
        std::ostringstream os;
        os << "compute_B: least-squares state recovery residual " << residual << " exceeds 1e-8";
        throw KoopmanError(os.str());
    }
    return B;
}

Eigen::MatrixXcd compute_F(const SpectralData& spectrum, const Eigen::MatrixXd& B) {
    // sum_q xi_q lambda_q w_q^* B = V diag(lambda) W^* B
    return spectrum.right * spectrum.eigvals.asDiagonal() * (spectrum.left.adjoint() * B.cast<std::complex<double>>());
}

Eigen::MatrixXcd compute_F(const KoopmanModel& model) { return compute_F(model.spectrum, model.B); }

KoopmanModel fit_model(const SnapshotSet& snapshots, const Dictionary& dict, const EdmdOptions& options) {
    const Eigen::MatrixXd lifted = lift(dict, snapshots);
    auto [G, A] = compute_g_a(lifted);
    Eigen::MatrixXd G_pinv = pseudo_inverse(G, options.svd_tol);
    Eigen::MatrixXd K = G_pinv * A;
    SpectralData spectrum = eigendecompose(K, options.degeneracy_tol);
    Eigen::MatrixXd B = compute_B(dict, lifted, snapshots);
    Eigen::MatrixXcd F = compute_F(spectrum, B);
    return KoopmanModel{dict,
                        std::move(G),
                        std::move(A),
                        std::move(G_pinv),
                        std::move(K),
                        std::move(spectrum),
                        std::move(B),
                        std::move(F),
                        options,
                        0};
}

Eigen::VectorXcd predict_lifted(const KoopmanModel& model, const Eigen::RowVectorXd& psi) {
    if (psi.size() != model.Q()) throw DimensionError("predict: observation has wrong length");
    return (psi.cast<std::complex<double>>() * model.F).transpose();
}

Eigen::VectorXcd predict_mode_sum(const KoopmanModel& model, const Eigen::RowVectorXd& psi) {
    if (psi.size() != model.Q()) throw DimensionError("predict: observation has wrong length");
    const auto& sp = model.spectrum;
    const Eigen::MatrixXcd Bc = model.B.cast<std::complex<double>>();
    const Eigen::RowVectorXcd psic = psi.cast<std::complex<double>>();
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(model.B.cols());
    for (Eigen::Index q = 0; q < model.Q(); ++q) {
        const Eigen::VectorXcd mode = (sp.left.col(q).adjoint() * Bc).transpose();  // v_q
        const std::complex<double> phi = (psic * sp.right.col(q)).value();  // Psi_t xi_q
        out += mode * (sp.eigvals[q] * phi);
    }
    return out;
}

Eigen::VectorXd real_part_checked(const Eigen::VectorXcd& v, double imag_tol, const char* what) {
    Eigen::VectorXd re = v.real();
    for (Eigen::Index k = 0; k < v.size(); ++k) {
        if (std::abs(v[k].imag()) > imag_tol * (1.0 + std::abs(re[k]))) {
            std::ostringstream os;
            os << what << ": imaginary residue " << v[k].imag() << " in component " << k;
            throw ImaginaryResidue(os.str());
        }
    }
    return re;
}

Eigen::VectorXd predict_from_psi(const KoopmanModel& model, const Eigen::RowVectorXd& psi) {
    const Eigen::VectorXcd full = predict_lifted(model, psi);
    return real_part_checked(full.head(model.n_state()), model.options.imag_tol, "predict");
}

Eigen::VectorXd predict(const KoopmanModel& model, const VectorRef& x, const VectorRef& u) {
    return predict_from_psi(model, model.dict.evaluate(x, u));
}

}  // namespace koopman
