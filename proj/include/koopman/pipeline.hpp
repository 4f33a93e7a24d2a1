#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "koopman/dictionary.hpp"
#include "koopman/edmd.hpp"
#include "koopman/noise.hpp"
#include "koopman/sensitivity.hpp"
#include "koopman/snapshots.hpp"
#include "koopman/systems.hpp"

namespace koopman {

struct TrainingMetadata {
    Eigen::Index M = 0;
    std::uint64_t seed = 0;
    DictionarySpec dict_spec;
    /// Wall-clock seconds per offline stage, in execution order.
    std::vector<std::pair<std::string, double>> stage_seconds;
};

/// Everything the online phase needs; produced once by train_offline().
struct TrainedArtifacts {
    KoopmanModel model;
    KoopmanSensitivity sens;
    NoiseSpec noise;
    TrainingMetadata meta;
    /// Q x (n_state + n_input); the error estimate at observation psi is psi * error_kernel.
    Eigen::MatrixXcd error_kernel;
};

/// Offline phase: lift -> (G, A) -> K -> spectrum -> B -> F -> Delta K -> eigen
/// sensitivities -> error kernel. Errors are rethrown as StageError naming the stage.
TrainedArtifacts train_offline(const SnapshotSet& snapshots, const Dictionary& dict, const NoiseSpec& noise,
                               const EdmdOptions& options = {});

struct StepResult {
    Eigen::VectorXd x_pred;
    Eigen::VectorXd delta_x_pred;
};

/// Online phase for one time step: evaluates Psi(x_t, u_t) once and returns the
/// fast prediction (Psi_t F) and the first-order noise-induced error estimate.
StepResult step_online(const TrainedArtifacts& artifacts, const VectorRef& x, const VectorRef& u);

/// What a controller sees at each closed-loop step.
struct ControlContext {
    double t = 0.0;
    Eigen::VectorXd x;
    Eigen::VectorXd reference;
    Eigen::VectorXd reference_next;
    /// Error estimate produced at the previous step (zero at the first step).
    Eigen::VectorXd delta_prev;
    /// One-step model prediction and error estimate for a candidate input.
    std::function<StepResult(const Eigen::VectorXd& u)> step;
};

using Controller = std::function<Eigen::VectorXd(const ControlContext&)>;
using Reference = std::function<Eigen::VectorXd(double t)>;

struct TrajectoryLog {
    std::vector<Eigen::Index> step;
    std::vector<double> t;
    std::vector<Eigen::VectorXd> x;
    std::vector<Eigen::VectorXd> u;
    std::vector<Eigen::VectorXd> x_pred;
    std::vector<Eigen::VectorXd> delta_x_pred;
    std::vector<Eigen::VectorXd> reference;
    Eigen::VectorXd final_state;

    std::size_t size() const noexcept { return step.size(); }
};

ControlContext make_control_context(const TrainedArtifacts& artifacts, const Reference& reference, double t, double Ts,
                                    const Eigen::VectorXd& x, const Eigen::VectorXd& delta_prev);

/// Feedback loop: controller -> plant (RK4) -> online prediction and error estimate.
TrajectoryLog run_closed_loop(const TrainedArtifacts& artifacts, const ContinuousSystem& system,
                              const Controller& controller, const Reference& reference, const Eigen::VectorXd& x0,
                              Eigen::Index steps, double Ts);

/// CSV columns: step,t,x1..,u1..,x_pred1..,delta_x_pred1..,reference1..
void write_trajectory_csv(const TrajectoryLog& log, const std::filesystem::path& path);

}  // namespace koopman
