#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "koopman/noise.hpp"
#include "koopman/snapshots.hpp"

namespace koopman {

/// Continuous-time plant x_dot = f(x, u).
struct ContinuousSystem {
    std::string name;
    Eigen::Index dim_state = 0;
    Eigen::Index dim_input = 0;
    std::function<Eigen::VectorXd(const Eigen::VectorXd& x, const Eigen::VectorXd& u)> derivative;
};

/// Forced Van der Pol oscillator:
///   x1' = 2 x2,  x2' = -0.8 x1 + 2 x2 - 10 x1^2 x2 + u.
Eigen::VectorXd vdp_derivative(const Eigen::VectorXd& x, const Eigen::VectorXd& u);
ContinuousSystem van_der_pol();

/// Differential-drive kinematics on [x, y, theta] with input [u_x, u_z]
/// (forward speed, yaw rate).
Eigen::VectorXd unicycle_derivative(const Eigen::VectorXd& x, const Eigen::VectorXd& u);
ContinuousSystem unicycle();

/// One classical RK4 step with the input held over [t, t + Ts].
/// Throws NonFiniteError if the state diverges.
Eigen::VectorXd rk4_step(const ContinuousSystem& system, const Eigen::VectorXd& x, const Eigen::VectorXd& u, double Ts);

enum class InputPolicyKind {
    uniform,     ///< fresh uniform draw in [lo, hi] every step
    chattering,  ///< uniform draw held for `hold` consecutive steps
};

struct InputPolicy {
    InputPolicyKind kind = InputPolicyKind::uniform;
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;
    int hold = 1;
};

/// dim_input x n_steps input sequence.
Eigen::MatrixXd generate_inputs(const InputPolicy& policy, Eigen::Index n_steps, std::mt19937_64& rng);

struct TrainingConfig {
    Eigen::Index M = 2000;
    double Ts = 0.01;
    Eigen::VectorXd x0;
    InputPolicy input;
    /// Noise added to the state measurements of the noisy copy.
    NoiseSpec noise;
    std::uint64_t seed = 0;

    void validate(const ContinuousSystem& system) const;
};

struct TrainingData {
    SnapshotSet clean;
    SnapshotSet noisy;
    /// The realized n_state x (M+1) noise, noisy.X() - clean.X().
    Eigen::MatrixXd noise;
};

/// Simulates M steps from x0 and returns exact and noise-corrupted snapshot
/// sets with identical inputs. Pure function of (system, config).
TrainingData generate_training_data(const ContinuousSystem& system, const TrainingConfig& config);

}  // namespace koopman
