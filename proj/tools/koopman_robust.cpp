#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "koopman/artifact_io.hpp"
#include "koopman/errors.hpp"
#include "koopman/experiments.hpp"
#include "koopman/pipeline.hpp"

using namespace koopman;

namespace {

void print_summary(const std::vector<CaseResult>& results) {
    std::cout << std::setprecision(6);
    for (const auto& c : results) {
        std::cout << c.id();
        for (std::size_t i = 0; i < c.metric_names.size(); ++i)
            std::cout << "  " << c.metric_names[i] << "=" << c.mean(i) << "±" << c.stddev(i);
        std::cout << '\n';
        for (const auto& t : c.trials)
            if (!t.ok) std::cout << "  trial " << t.trial << " failed: " << t.error << '\n';
    }
}

int run_study_command(StudyConfig defaults, const std::string& config_path, bool deterministic, bool full_grid,
                      const std::string& outdir, int threads) {
    StudyConfig cfg = load_study_config(config_path, std::move(defaults));
    if (deterministic) cfg.deterministic = true;
    if (full_grid) cfg.M_list = {2000, 10000, 20000, 200000};
    if (!outdir.empty()) cfg.outdir = outdir;
    if (threads > 0) cfg.threads = threads;
    const auto results = run_study(cfg);
    emit_outputs(results, cfg.outdir, cfg.deterministic);
    print_summary(results);
    std::cout << "outputs written to " << cfg.outdir.string() << '\n';
    const bool all_ok = std::all_of(results.begin(), results.end(), [](const auto& c) { return c.all_ok(); });
    return all_ok ? 0 : 1;
}

std::string format_vector(const Eigen::VectorXd& v) {
    std::ostringstream s;
    s << std::setprecision(17) << '[';
    for (Eigen::Index i = 0; i < v.size(); ++i) s << (i ? ", " : "") << v[i];
    s << ']';
    return s.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Koopman EDMDc models with first-order noise sensitivity"};
    app.require_subcommand(1);

    std::string config_path, outdir;
    bool deterministic = false, full_grid = false;
    int threads = 0;

    auto* vdp = app.add_subcommand("vdp-study", "Van der Pol parametric study");
    vdp->add_option("--config", config_path, "JSON study config")->required()->check(CLI::ExistingFile);
    vdp->add_flag("--deterministic", deterministic, "single worker, no timing output");
    vdp->add_flag("--full-grid", full_grid, "M in {2e3, 1e4, 2e4, 2e5}");
    vdp->add_option("--out", outdir, "output directory (overrides config)");
    vdp->add_option("--threads", threads, "worker threads (0 = all cores)");

    auto* track = app.add_subcommand("tracking-study", "unicycle semicircle tracking study");
    track->add_option("--config", config_path, "JSON study config")->required()->check(CLI::ExistingFile);
    track->add_flag("--deterministic", deterministic, "single worker, no timing output");
    track->add_option("--out", outdir, "output directory (overrides config)");
    track->add_option("--threads", threads, "worker threads (0 = all cores)");

    std::string data_path, artifact_out;
    int degree = 3;
    std::vector<double> noise_hi, noise_mean, noise_std;
    bool one_sided = false;
    std::string family = "uniform", substitution = "resample";
    int n_samples = 5;
    std::uint64_t seed = 0;
    auto* train = app.add_subcommand("train", "train artifacts from a snapshot CSV");
    train->add_option("--data", data_path, "CSV with columns m,x1..,u1..")->required()->check(CLI::ExistingFile);
    train->add_option("--out", artifact_out, "artifact file to write")->required();
    train->add_option("--degree", degree, "polynomial dictionary degree")->check(CLI::PositiveNumber);
    train->add_option("--noise-family", family, "uniform or gaussian")->check(CLI::IsMember({"uniform", "gaussian"}));
    train->add_option("--noise-hi", noise_hi, "uniform noise amplitude bound per state coordinate")->delimiter(',');
    train->add_flag("--one-sided", one_sided, "uniform noise magnitudes without random sign");
    train->add_option("--noise-mean", noise_mean, "gaussian noise mean per state coordinate")->delimiter(',');
    train->add_option("--noise-std", noise_std, "gaussian noise stddev per state coordinate")->delimiter(',');
    train->add_option("--substitution", substitution, "mean or resample")->check(CLI::IsMember({"mean", "resample"}));
    train->add_option("--n-samples", n_samples, "resampling count")->check(CLI::PositiveNumber);
    train->add_option("--seed", seed, "noise resampling seed");

    std::string artifact_in;
    std::vector<double> state, input;
    auto* pred = app.add_subcommand("predict", "one-step prediction and noise-induced error estimate");
    pred->add_option("--artifact", artifact_in, "trained artifact file")->required()->check(CLI::ExistingFile);
    pred->add_option("--state", state, "current state")->required()->delimiter(',');
    pred->add_option("--input", input, "current input")->required()->delimiter(',');

    CLI11_PARSE(app, argc, argv);

    try {
        if (*vdp)
            return run_study_command(StudyConfig::vdp_defaults(), config_path, deterministic, full_grid, outdir,
                                     threads);
        if (*track)
            return run_study_command(StudyConfig::tracking_defaults(), config_path, deterministic, false, outdir,
                                     threads);
        if (*train) {
            const SnapshotSet data = read_snapshots_csv(data_path);
            const Dictionary dict = build_poly_dictionary(data.n_state(), data.n_input(), degree);
            NoiseSpec noise;
            if (family == "gaussian") {
                noise = gaussian_noise(noise_mean, noise_std, seed);
            } else if (noise_hi.empty()) {
                noise = zero_noise(data.n_state());
                noise.seed = seed;
            } else {
                noise = uniform_amplitude_noise(noise_hi, one_sided, seed);
            }
            noise.substitution = noise_substitution_from_string(substitution);
            noise.n_samples = n_samples;
            const TrainedArtifacts art = train_offline(data, dict, noise);
            save_artifacts(art, artifact_out);
            std::cout << "trained Q=" << dict.size() << " on M=" << data.M() << " snapshot pairs\n";
            for (const auto& [stage, secs] : art.meta.stage_seconds) std::cout << "  " << stage << ": " << secs << " s\n";
            std::cout << "artifact written to " << artifact_out << '\n';
            return 0;
        }
        if (*pred) {
            const TrainedArtifacts art = load_artifacts(artifact_in);
            const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(state.data(), static_cast<Eigen::Index>(state.size()));
            const Eigen::VectorXd u = Eigen::Map<const Eigen::VectorXd>(input.data(), static_cast<Eigen::Index>(input.size()));
            const StepResult r = step_online(art, x, u);
            std::cout << "x_pred: " << format_vector(r.x_pred) << '\n'
                      << "delta_x_pred: " << format_vector(r.delta_x_pred) << '\n';
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
