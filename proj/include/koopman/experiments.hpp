#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "koopman/noise.hpp"
#include "koopman/pipeline.hpp"

namespace koopman {

enum class StudyKind { vdp, tracking };

struct StudyConfig {
    StudyKind kind = StudyKind::vdp;
    std::vector<Eigen::Index> M_list;
    /// Noise amplitude as a fraction of the per-coordinate scale (x0 for
    /// Van der Pol, max of the reference for tracking).
    std::vector<double> noise_levels;
    int trials = 5;
    /// Evaluation steps (Van der Pol). Tracking runs for half a reference period.
    int horizon = 50;
    /// Van der Pol evaluation starts at x0 instead of the last training state.
    bool eval_from_x0 = false;
    int degree = 3;
    std::uint64_t seed = 20240601;
    std::filesystem::path outdir = "results";
    double Ts = 0.01;
    Eigen::VectorXd x0;
    /// Magnitudes drawn from [0, level * scale]; with random_sign each entry is
    /// negated with probability 1/2.
    bool one_sided = true;
    NoiseSubstitution substitution = NoiseSubstitution::resample;
    int n_samples = 5;
    /// Reference period for tracking (seconds).
    double period = 40.0;
    /// Training input ranges; hold > 1 gives a chattering signal.
    Eigen::VectorXd input_lo;
    Eigen::VectorXd input_hi;
    int input_hold = 1;
    /// 0 = one worker per hardware thread.
    int threads = 0;
    /// Single worker and no wall-clock output, so cases.csv is byte-stable.
    bool deterministic = false;

    static StudyConfig vdp_defaults();
    static StudyConfig tracking_defaults();
    /// Throws ConfigError on empty lists, counts < 1 or levels outside [0, 2].
    void validate() const;
};

/// Reads a JSON config on top of `defaults`. Unknown keys are rejected.
StudyConfig load_study_config(const std::filesystem::path& path, StudyConfig defaults);

/// One (case, trial) evaluation.
struct TrialResult {
    int trial = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    /// Same order as CaseResult::metric_names.
    std::vector<double> metrics;
    double seconds = 0.0;
    /// Per-step series kept for plotting (trial 0 only).
    std::vector<std::vector<double>> series;
};

struct CaseResult {
    StudyKind kind = StudyKind::vdp;
    Eigen::Index M = 0;
    double level = 0.0;
    std::vector<std::string> metric_names;
    std::vector<std::string> series_names;
    std::vector<TrialResult> trials;

    std::string id() const;
    bool all_ok() const;
    /// Mean / population standard deviation of one metric over successful trials.
    double mean(std::size_t metric) const;
    double stddev(std::size_t metric) const;
};

struct VdpTrialMetrics {
    double D_abs = 0.0;
    double D_r = 0.0;
    int excluded_steps = 0;
    double sign_match = 0.0;
};

/// D_abs, D_r over a horizon from per-step predicted and true errors of one
/// coordinate. Steps with |true| < 1e-12 are left out of D_r and counted.
VdpTrialMetrics error_discrepancy(const std::vector<double>& predicted, const std::vector<double>& truth);

/// Semicircle of radius 1 traversed in `period` seconds: [sin wt, 1 - cos wt, wt].
Eigen::VectorXd semicircle_reference(double t, double period);

struct TrackingGains {
    double k_x = 1.0;
    double k_y = 4.0;
    double k_theta = 2.0;
    /// Weight of the look-ahead command computed from the model prediction.
    double correction = 0.5;
    /// Actuator limits; match the training input ranges.
    Eigen::Vector2d u_min{0.0, -1.0};
    Eigen::Vector2d u_max{0.5, 1.0};
};

/// Kinematic feedback in the robot frame, pre-corrected by the same law applied
/// to the model's one-step prediction of the next state.
/// With `compensate` the previous step's error estimate is subtracted from the
/// model prediction before the correction is computed.
Eigen::VectorXd tracking_command(const ControlContext& ctx, double period, bool compensate,
                                 const TrackingGains& gains = {});

/// Trajectory MSE (1/n) sum ||p - p_ref||^2 over the planar position.
double trajectory_mse(const TrajectoryLog& log);

std::vector<CaseResult> run_vdp_study(const StudyConfig& config);
std::vector<CaseResult> run_tracking_study(const StudyConfig& config);
std::vector<CaseResult> run_study(const StudyConfig& config);

/// Writes cases.csv, summary.csv, the study's SVG figures and (unless
/// deterministic) timings.csv into outdir. Throws before writing anything if
/// there is nothing to report.
void emit_outputs(const std::vector<CaseResult>& results, const std::filesystem::path& outdir,
                  bool deterministic);

std::string to_string(StudyKind kind);

}  // namespace koopman
