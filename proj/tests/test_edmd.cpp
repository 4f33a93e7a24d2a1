#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "koopman/edmd.hpp"
#include "koopman/errors.hpp"
#include "koopman/noise.hpp"
#include "koopman/snapshots.hpp"
#include "koopman/systems.hpp"
#include "oracles.hpp"

using namespace koopman;

namespace {

// x+ = a x + b u with i.i.d. uniform inputs, dictionary [x, u].
SnapshotSet scalar_linear(double a, double b, Eigen::Index M, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Eigen::MatrixXd U = oracle::uniform_matrix(1, M + 1, rng);
    Eigen::MatrixXd X(1, M + 1);
    X(0, 0) = 0.7;
    for (Eigen::Index m = 0; m < M; ++m) X(0, m + 1) = a * X(0, m) + b * U(0, m);
    return SnapshotSet(X, U);
}

Dictionary identity_dictionary(Eigen::Index nx, Eigen::Index nu) {
    std::vector<Observable> obs;
    for (Eigen::Index k = 0; k < nx + nu; ++k) {
        std::vector<int> e(static_cast<std::size_t>(nx + nu), 0);
        e[static_cast<std::size_t>(k)] = 1;
        obs.push_back(make_monomial(e, nx));
    }
    return Dictionary(std::move(obs), nx, nu);
}

}  // namespace

TEST_CASE("G and A from a single snapshot pair") {
    Eigen::MatrixXd lifted(2, 2);
    lifted << 1, 0, 0, 1;
    const auto [G, A] = compute_g_a(lifted);
    Eigen::MatrixXd G_ref(2, 2), A_ref(2, 2);
    G_ref << 1, 0, 0, 0;
    A_ref << 0, 1, 0, 0;
    CHECK(G == G_ref);
    CHECK(A == A_ref);
}

TEST_CASE("G is symmetric positive semidefinite") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 10; ++trial) {
        const SnapshotSet s = oracle::random_snapshots(rng, 30);
        const auto [G, A] = compute_g_a(s, build_poly_dictionary(2, 1, 3));
        CHECK(G == G.transpose());
        const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(G).eigenvalues();
        CHECK(ev.minCoeff() >= -1e-12);
    }
}

TEST_CASE("G and A match a brute-force double loop") {
    std::mt19937_64 rng(2);
    const SnapshotSet s = oracle::random_snapshots(rng, 20);
    const Dictionary d = build_poly_dictionary(2, 1, 1);
    REQUIRE(d.size() == 4);
    const auto [G, A] = compute_g_a(s, d);
    const auto [Gb, Ab] = oracle::brute_g_a(s, d);
    CHECK((G - Gb).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((A - Ab).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("identity Gram gives K = A") {
    std::mt19937_64 rng(3);
    const Eigen::MatrixXd A = oracle::uniform_matrix(5, 5, rng);
    CHECK((estimate_koopman(Eigen::MatrixXd::Identity(5, 5), A, 1e-10) - A).norm() <= 1e-14);
}

TEST_CASE("all-zero G is rejected") {
    CHECK_THROWS_AS(estimate_koopman(Eigen::MatrixXd::Zero(3, 3), Eigen::MatrixXd::Zero(3, 3), 1e-10), KoopmanError);
}

TEST_CASE("x+ = 0.9 x with dictionary [x] recovers K = 0.9") {
    Eigen::MatrixXd X(1, 31);
    X(0, 0) = 1.3;
    for (int m = 0; m < 30; ++m) X(0, m + 1) = 0.9 * X(0, m);
    const SnapshotSet s(X, Eigen::MatrixXd(0, 31));
    const KoopmanModel model = fit_model(s, identity_dictionary(1, 0));
    REQUIRE(model.Q() == 1);
    CHECK(std::abs(model.K(0, 0) - 0.9) <= 1e-10);
}

TEST_CASE("x+ = 0.9 x + 0.1 u predicts 0.95 at (1, 0.5)") {
    const KoopmanModel model = fit_model(scalar_linear(0.9, 0.1, 200, 4), identity_dictionary(1, 1));
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 1.0), u = Eigen::VectorXd::Constant(1, 0.5);
    CHECK(std::abs(predict(model, x, u)[0] - 0.95) <= 1e-8);
}

TEST_CASE("singular G: null rows vanish and K is a local minimizer") {
    // x1 appears twice, so G has a one-dimensional null space
    std::vector<Observable> obs{make_monomial({1, 0, 0}, 2), make_monomial({0, 1, 0}, 2), make_monomial({0, 0, 1}, 2),
                                make_monomial({0, 0, 0}, 2), make_monomial({1, 0, 0}, 2), make_monomial({1, 1, 0}, 2)};
    const Dictionary d(std::move(obs), 2, 1);
    std::mt19937_64 rng(6);
    const SnapshotSet s = oracle::random_snapshots(rng, 60);
    const Eigen::MatrixXd lifted = lift(d, s);
    const auto [G, A] = compute_g_a(lifted);
    const Eigen::MatrixXd K = estimate_koopman(G, A, 1e-10);
    Eigen::VectorXd null = Eigen::VectorXd::Zero(6);
    null[0] = 1.0 / std::sqrt(2.0);
    null[4] = -1.0 / std::sqrt(2.0);
    CHECK((G * null).norm() <= 1e-12);
    CHECK((null.transpose() * K).norm() <= 1e-10);
    const double J = edmd_residual(K, lifted);
    int worse_or_equal = 0;
    for (int k = 0; k < 100; ++k) {
        const Eigen::MatrixXd dK = 1e-3 * oracle::uniform_matrix(6, 6, rng);
        if (edmd_residual(K + dK, lifted) >= J - 1e-12) ++worse_or_equal;
    }
    CHECK(worse_or_equal == 100);
}

TEST_CASE("2x2 upper-triangular eigen-triples") {
    Eigen::MatrixXd K(2, 2);
    K << 2, 1, 0, 3;
    const SpectralData s = eigendecompose(K);
    CHECK(std::abs(s.eigvals[0] - 3.0) <= 1e-12);
    CHECK(std::abs(s.eigvals[1] - 2.0) <= 1e-12);
    // lambda = 2
    const Eigen::VectorXcd xi2 = s.right.col(1), w2 = s.left.col(1);
    CHECK(std::abs(xi2[1]) <= 1e-12 * std::abs(xi2[0]));
    CHECK(std::abs(w2[1] / w2[0] + 1.0) <= 1e-12);
    CHECK(std::abs(w2.dot(xi2) - 1.0) <= 1e-12);
    CHECK(std::abs(w2[0] * std::conj(xi2[0]) - 1.0) <= 1e-12);  // w = [1, -1] when xi = [1, 0]
    // lambda = 3
    const Eigen::VectorXcd xi3 = s.right.col(0), w3 = s.left.col(0);
    CHECK(std::abs(xi3[1] / xi3[0] - 1.0) <= 1e-12);
    CHECK(std::abs(w3[0]) <= 1e-12 * std::abs(w3[1]));
    CHECK(std::abs(w3.dot(xi3) - 1.0) <= 1e-12);
}

TEST_CASE("repeated eigenvalue raises DegenerateSpectrum") {
    CHECK_THROWS_AS(eigendecompose(Eigen::MatrixXd::Identity(3, 3)), DegenerateSpectrum);
}

TEST_CASE("spectral resolution, ordering, biorthogonality and conjugate pairs") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::MatrixXd K = oracle::random_diagonalizable(rng, 6);
        const SpectralData s = eigendecompose(K);
        const Eigen::MatrixXcd R = s.right * s.eigvals.asDiagonal() * s.left.adjoint();
        CHECK((R - K.cast<std::complex<double>>()).norm() <= 1e-10);
        const Eigen::MatrixXcd gram = s.left.adjoint() * s.right;
        CHECK((gram - Eigen::MatrixXcd::Identity(6, 6)).cwiseAbs().maxCoeff() <= 1e-8);
        for (Eigen::Index q = 0; q + 1 < 6; ++q) CHECK(std::abs(s.eigvals[q]) >= std::abs(s.eigvals[q + 1]) - 1e-12);
        for (Eigen::Index q = 0; q < 6; ++q) {
            if (s.eigvals[q].imag() <= 0.0) continue;
            REQUIRE(q + 1 < 6);
            CHECK(std::abs(s.eigvals[q + 1] - std::conj(s.eigvals[q])) <= 1e-12);
            CHECK((s.right.col(q + 1) - s.right.col(q).conjugate()).norm() <= 1e-12);
            CHECK((s.left.col(q + 1) - s.left.col(q).conjugate()).norm() <= 1e-12);
        }
    }
}

TEST_CASE("B selects the identity observables") {
    const Eigen::MatrixXd B = compute_B(build_poly_dictionary(2, 1, 1));
    Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(4, 3);
    ref.topRows(3) = Eigen::MatrixXd::Identity(3, 3);
    CHECK(B == ref);

    std::mt19937_64 rng(8);
    const Dictionary d = build_poly_dictionary(2, 2, 3);
    const Eigen::MatrixXd Bd = compute_B(d);
    for (int k = 0; k < 10; ++k) {
        const Eigen::VectorXd x = oracle::uniform_matrix(2, 1, rng), u = oracle::uniform_matrix(2, 1, rng);
        Eigen::VectorXd z(4);
        z << x, u;
        CHECK((d.evaluate(x, u) * Bd).transpose() == z);
    }
}

TEST_CASE("B for a shuffled dictionary puts ones at the identity positions") {
    // [1, x1^2, u1, x2, x1]
    std::vector<Observable> obs{make_monomial({0, 0, 0}, 2), make_monomial({2, 0, 0}, 2), make_monomial({0, 0, 1}, 2),
                                make_monomial({0, 1, 0}, 2), make_monomial({1, 0, 0}, 2)};
    const Dictionary d(std::move(obs), 2, 1);
    CHECK_FALSE(d.identity_prefix());
    const Eigen::MatrixXd B = compute_B(d);
    Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(5, 3);
    ref(4, 0) = 1;
    ref(3, 1) = 1;
    ref(2, 2) = 1;
    CHECK(B == ref);
}

TEST_CASE("B by least squares for a dictionary without identity observables") {
    auto linear = [](double a, double b, const std::string& name) {
        Observable o;
        o.name = name;
        o.eval = [a, b](const VectorRef& x, const VectorRef&) { return a * x[0] + b * x[1]; };
        o.grad_state = [a, b](const VectorRef&, const VectorRef&, Eigen::Ref<Eigen::RowVectorXd> g) { g << a, b; };
        return o;
    };
    std::vector<Observable> obs{linear(1, 1, "x1+x2"), linear(1, -1, "x1-x2"), make_monomial({0, 0, 1}, 2),
                                make_monomial({0, 0, 0}, 2)};
    const Dictionary d(obs, 2, 1);
    std::mt19937_64 rng(9);
    const SnapshotSet s = oracle::random_snapshots(rng, 40);
    const Eigen::MatrixXd lifted = lift(d, s);
    CHECK_THROWS_AS(compute_B(d), KoopmanError);
    const Eigen::MatrixXd B = compute_B(d, lifted, s);
    CHECK(std::abs(B(0, 0) - 0.5) <= 1e-10);
    CHECK(std::abs(B(1, 0) - 0.5) <= 1e-10);
    CHECK(std::abs(B(0, 1) - 0.5) <= 1e-10);
    CHECK(std::abs(B(1, 1) + 0.5) <= 1e-10);

    // x1 and x2 cannot be separated from squares
    std::vector<Observable> lossy{make_monomial({2, 0, 0}, 2), make_monomial({0, 2, 0}, 2), make_monomial({0, 0, 1}, 2),
                                  make_monomial({0, 0, 0}, 2)};
    const Dictionary dl(lossy, 2, 1);
    CHECK_THROWS_AS(compute_B(dl, lift(dl, s), s), KoopmanError);
}

TEST_CASE("F = K B for real diagonalizable K") {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::MatrixXd D = Eigen::MatrixXd::Zero(4, 4);
        for (int k = 0; k < 4; ++k) D(k, k) = 0.2 + 0.3 * k;
        const Eigen::MatrixXd P = oracle::uniform_matrix(4, 4, rng) + 2 * Eigen::MatrixXd::Identity(4, 4);
        const Eigen::MatrixXd K = P * D * P.inverse();
        const Eigen::MatrixXd B = compute_B(build_poly_dictionary(2, 1, 1));
        const Eigen::MatrixXcd F = compute_F(eigendecompose(K), B);
        CHECK((F.real() - K * B).norm() <= 1e-10);
        CHECK(F.imag().cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("zero spectrum gives F = 0") {
    // K = 0 is degenerate for eigendecompose, so build its triples directly
    SpectralData s{Eigen::VectorXcd::Zero(4), Eigen::MatrixXcd::Identity(4, 4), Eigen::MatrixXcd::Identity(4, 4)};
    CHECK(compute_F(s, compute_B(build_poly_dictionary(2, 1, 1))).isZero(0));
}

TEST_CASE("F-form and mode-sum predictions agree on trained models") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        const SnapshotSet s = oracle::random_snapshots(rng, 80);
        const KoopmanModel model = fit_model(s, oracle::small_dictionary());
        for (int k = 0; k < 5; ++k) {
            const Eigen::RowVectorXd psi =
                model.dict.evaluate(oracle::uniform_matrix(2, 1, rng), oracle::uniform_matrix(1, 1, rng));
            CHECK((predict_lifted(model, psi) - predict_mode_sum(model, psi)).cwiseAbs().maxCoeff() <= 1e-12);
        }
    }
}

TEST_CASE("predict rejects a broken conjugate pairing") {
    std::mt19937_64 rng(13);
    KoopmanModel model = fit_model(oracle::random_snapshots(rng, 80), oracle::small_dictionary());
    model.F(0, 0) += std::complex<double>(0.0, 1.0);
    const Eigen::VectorXd x = Eigen::VectorXd::Ones(2), u = Eigen::VectorXd::Ones(1);
    CHECK_THROWS_AS(predict(model, x, u), ImaginaryResidue);
}

TEST_CASE("Van der Pol noiseless degree 3: one-step error below 1e-3") {
    TrainingConfig cfg;
    cfg.M = 20000;
    cfg.Ts = 0.01;
    cfg.x0 = Eigen::Vector2d(0.5, 0.5);
    cfg.input = InputPolicy{InputPolicyKind::uniform, Eigen::VectorXd::Constant(1, -1), Eigen::VectorXd::Constant(1, 1), 1};
    cfg.noise = zero_noise(2);
    cfg.seed = 21;
    const ContinuousSystem vdp = van_der_pol();
    const TrainingData data = generate_training_data(vdp, cfg);
    const KoopmanModel model = fit_model(data.clean, build_poly_dictionary(2, 1, 3));
    auto rng = make_rng(99, 3);
    Eigen::VectorXd x = data.clean.X().col(data.clean.M());
    double worst = 0.0;
    std::uniform_real_distribution<double> ud(-1, 1);
    for (int k = 0; k < 50; ++k) {
        const Eigen::VectorXd u = Eigen::VectorXd::Constant(1, ud(rng));
        const Eigen::VectorXd truth = rk4_step(vdp, x, u, cfg.Ts);
        worst = std::max(worst, (predict(model, x, u) - truth).cwiseAbs().maxCoeff());
        x = truth;
    }
    MESSAGE("worst one-step error " << worst);
    CHECK(worst <= 1e-3);
}

TEST_CASE("EDMD is exact for systems linear in the lifted coordinates") {
    // x1+ = 0.8 x1 + 0.1 u, x2+ = 0.5 x2 + 0.3 x1^2 is linear in [x1, x2, x1^2, u]
    std::mt19937_64 rng(14);
    const Eigen::Index M = 200;
    Eigen::MatrixXd X(2, M + 1), U = oracle::uniform_matrix(1, M + 1, rng);
    X.col(0) << 0.4, -0.2;
    for (Eigen::Index m = 0; m < M; ++m)
        X.col(m + 1) << 0.8 * X(0, m) + 0.1 * U(0, m), 0.5 * X(1, m) + 0.3 * X(0, m) * X(0, m);
    const KoopmanModel model = fit_model(SnapshotSet(X, U), build_poly_dictionary(2, 1, 2));
    for (int k = 0; k < 20; ++k) {
        const Eigen::VectorXd x = oracle::uniform_matrix(2, 1, rng), u = oracle::uniform_matrix(1, 1, rng);
        const Eigen::Vector2d truth(0.8 * x[0] + 0.1 * u[0], 0.5 * x[1] + 0.3 * x[0] * x[0]);
        CHECK((predict(model, x, u) - truth).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("snapshot CSV round trip is exact") {
    std::mt19937_64 rng(15);
    const SnapshotSet s(oracle::uniform_matrix(3, 12, rng, -1e3, 1e3), oracle::uniform_matrix(2, 12, rng));
    const auto path = std::filesystem::temp_directory_path() / "koopman_snapshots_roundtrip.csv";
    write_snapshots_csv(s, path);
    CHECK(read_snapshots_csv(path) == s);
    CHECK(read_snapshots_csv(path, 3) == s);
    std::filesystem::remove(path);
}

TEST_CASE("snapshot validation") {
    CHECK_THROWS_AS(SnapshotSet(Eigen::MatrixXd::Zero(2, 5), Eigen::MatrixXd::Zero(1, 4)), DimensionError);
    CHECK_THROWS_AS(SnapshotSet(Eigen::MatrixXd::Zero(2, 1), Eigen::MatrixXd::Zero(1, 1)), DimensionError);
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(2, 5);
    X(1, 3) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(SnapshotSet(X, Eigen::MatrixXd::Zero(1, 5)), NonFiniteError);
    CHECK_THROWS_AS(read_snapshots_csv("/nonexistent/snapshots.csv"), IoError);
}
