#include "koopman/systems.hpp"

#include <cmath>

#include "koopman/errors.hpp"

namespace koopman {

Eigen::VectorXd vdp_derivative(const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    if (x.size() != 2 || u.size() != 1) throw DimensionError("van der pol: expects x in R^2, u in R^1");
    Eigen::VectorXd dx(2);
    dx[0] = 2.0 * x[1];
    dx[1] = -0.8 * x[0] + 2.0 * x[1] - 10.0 * x[0] * x[0] * x[1] + u[0];
    return dx;
}

ContinuousSystem van_der_pol() { return {"van_der_pol", 2, 1, vdp_derivative}; }

Eigen::VectorXd unicycle_derivative(const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    if (x.size() != 3 || u.size() != 2) throw DimensionError("unicycle: expects x in R^3, u in R^2");
    Eigen::VectorXd dx(3);
    dx[0] = u[0] * std::cos(x[2]);
    dx[1] = u[0] * std::sin(x[2]);
    dx[2] = u[1];
    return dx;
}

ContinuousSystem unicycle() { return {"unicycle", 3, 2, unicycle_derivative}; }

Eigen::VectorXd rk4_step(const ContinuousSystem& system, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                         double Ts) {
    if (!(Ts > 0.0)) throw ConfigError("rk4_step: Ts must be positive");
    const auto& f = system.derivative;
    const Eigen::VectorXd k1 = f(x, u);
    const Eigen::VectorXd k2 = f(x + 0.5 * Ts * k1, u);
    const Eigen::VectorXd k3 = f(x + 0.5 * Ts * k2, u);
    const Eigen::VectorXd k4 = f(x + Ts * k3, u);
    Eigen::VectorXd next = x + (Ts / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!next.allFinite()) throw NonFiniteError("rk4_step: " + system.name + " state diverged");
    return next;
}

Eigen::MatrixXd generate_inputs(const InputPolicy& policy, Eigen::Index n_steps, std::mt19937_64& rng) {
    if (policy.lo.size() != policy.hi.size()) throw ConfigError("input policy: lo/hi size mismatch");
    if (policy.hold < 1) throw ConfigError("input policy: hold must be >= 1");
    const Eigen::Index n = policy.lo.size();
    const int hold = policy.kind == InputPolicyKind::chattering ? policy.hold : 1;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::MatrixXd U(n, n_steps);
    Eigen::VectorXd current(n);
    for (Eigen::Index m = 0; m < n_steps; ++m) {
        if (m % hold == 0)
            for (Eigen::Index i = 0; i < n; ++i) current[i] = policy.lo[i] + (policy.hi[i] - policy.lo[i]) * unit(rng);
        U.col(m) = current;
    }
    return U;
}

void TrainingConfig::validate(const ContinuousSystem& system) const {
    if (M < 1) throw ConfigError("training config: M must be >= 1");
    if (!(Ts > 0.0)) throw ConfigError("training config: Ts must be positive");
    if (x0.size() != system.dim_state) throw ConfigError("training config: x0 has wrong dimension");
    if (input.lo.size() != system.dim_input) throw ConfigError("training config: input bounds have wrong dimension");
    if (noise.n_state() != system.dim_state) throw ConfigError("training config: noise has wrong dimension");
    noise.validate();
}

TrainingData generate_training_data(const ContinuousSystem& system, const TrainingConfig& config) {
    config.validate(system);
    const Eigen::Index n = config.M + 1;
    // Independent streams for inputs and noise so the clean trajectory does not
    // depend on the noise level.
    std::mt19937_64 input_rng = make_rng(config.seed, 0);
    std::mt19937_64 noise_rng = make_rng(config.seed, 1);

    Eigen::MatrixXd U = generate_inputs(config.input, n, input_rng);
    Eigen::MatrixXd X(system.dim_state, n);
    X.col(0) = config.x0;
    for (Eigen::Index m = 0; m + 1 < n; ++m) X.col(m + 1) = rk4_step(system, X.col(m), U.col(m), config.Ts);

    Eigen::MatrixXd noise = sample_noise(config.noise, n, noise_rng);
    Eigen::MatrixXd noisy_X = X + noise;
    return {SnapshotSet(X, U), SnapshotSet(std::move(noisy_X), U), std::move(noise)};
}

}  // namespace koopman
