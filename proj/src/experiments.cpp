#include "koopman/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "koopman/errors.hpp"
#include "koopman/svg_plot.hpp"
#include "koopman/systems.hpp"

namespace koopman {

namespace {

constexpr double kTinyError = 1e-12;

double wrap_angle(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

std::string level_label(double level) {
    std::ostringstream s;
    s << level * 100.0 << '%';
    return s.str();
}

// Seeds are shared across noise levels (same training trajectory and the same
// uniform draws, scaled), so levels are compared on paired data.
std::uint64_t trial_seed(std::uint64_t master, std::uint64_t group, int trial) {
    auto rng = make_rng(master, 1 + group * 1000 + static_cast<std::uint64_t>(trial));
    return rng();
}

NoiseSpec level_noise(const StudyConfig& cfg, const Eigen::VectorXd& scale, double level, std::uint64_t seed) {
    if (level == 0.0) {
        NoiseSpec z = zero_noise(scale.size());
        z.seed = seed;
        return z;
    }
    std::vector<double> hi(static_cast<std::size_t>(scale.size()));
    for (Eigen::Index i = 0; i < scale.size(); ++i) hi[static_cast<std::size_t>(i)] = level * std::abs(scale[i]);
    NoiseSpec n = uniform_amplitude_noise(std::move(hi), cfg.one_sided, seed);
    n.substitution = cfg.substitution;
    n.n_samples = cfg.n_samples;
    return n;
}

TrainingConfig training_config(const StudyConfig& cfg, Eigen::Index M, const NoiseSpec& noise, std::uint64_t seed) {
    TrainingConfig t;
    t.M = M;
    t.Ts = cfg.Ts;
    t.x0 = cfg.x0;
    t.input.kind = cfg.input_hold > 1 ? InputPolicyKind::chattering : InputPolicyKind::uniform;
    t.input.lo = cfg.input_lo;
    t.input.hi = cfg.input_hi;
    t.input.hold = cfg.input_hold;
    t.noise = noise;
    t.seed = seed;
    return t;
}

const std::vector<std::string> kVdpMetrics = {"D_abs", "D_r", "excluded_steps", "sign_match", "D_abs_x1", "D_r_x1"};
const std::vector<std::string> kVdpSeries = {"predicted_dx2", "true_dx2"};

const std::vector<std::string> kTrackingMetrics = {"mse_nominal", "mse_noisy", "mse_proposed", "input_mse",
                                                   "input_mse_rel"};
const std::vector<std::string> kTrackingSeries = {"ref_x",   "ref_y",   "nominal_x",  "nominal_y",
                                                  "noisy_x", "noisy_y", "proposed_x", "proposed_y"};

TrialResult vdp_trial(const StudyConfig& cfg, Eigen::Index M, double level, int trial, std::uint64_t seed) {
    TrialResult r;
    r.trial = trial;
    r.seed = seed;
    const ContinuousSystem sys = van_der_pol();
    const NoiseSpec noise = level_noise(cfg, cfg.x0, level, seed);
    const TrainingData data = generate_training_data(sys, training_config(cfg, M, noise, seed));
    const Dictionary dict = build_poly_dictionary(sys.dim_state, sys.dim_input, cfg.degree);

    const TrainedArtifacts noisy = train_offline(data.noisy, dict, noise);
    const KoopmanModel clean = fit_model(data.clean, dict);

    // One-step predictions along the true trajectory under a fresh random
    // input sequence, starting where training ended or at x0.
    auto rng = make_rng(seed, 3);
    InputPolicy policy{InputPolicyKind::uniform, cfg.input_lo, cfg.input_hi, 1};
    const Eigen::MatrixXd inputs = generate_inputs(policy, cfg.horizon, rng);
    Eigen::VectorXd x = cfg.eval_from_x0 ? cfg.x0 : Eigen::VectorXd(data.clean.X().col(M));
    std::vector<double> pred2, true2, pred1, true1;
    for (int t = 0; t < cfg.horizon; ++t) {
        const Eigen::VectorXd u = inputs.col(t);
        const StepResult step = step_online(noisy, x, u);
        const Eigen::VectorXd truth = step.x_pred - predict(clean, x, u);
        pred1.push_back(step.delta_x_pred[0]);
        true1.push_back(truth[0]);
        pred2.push_back(step.delta_x_pred[1]);
        true2.push_back(truth[1]);
        x = rk4_step(sys, x, u, cfg.Ts);
    }
    const VdpTrialMetrics m2 = error_discrepancy(pred2, true2);
    const VdpTrialMetrics m1 = error_discrepancy(pred1, true1);
    r.metrics = {m2.D_abs, m2.D_r, static_cast<double>(m2.excluded_steps), m2.sign_match, m1.D_abs, m1.D_r};
    if (trial == 0) r.series = {pred2, true2};
    r.ok = true;
    return r;
}

TrialResult tracking_trial(const StudyConfig& cfg, Eigen::Index M, double level, int trial, std::uint64_t seed) {
    TrialResult r;
    r.trial = trial;
    r.seed = seed;
    const ContinuousSystem sys = unicycle();
    const double period = cfg.period;
    const Reference reference = [period](double t) { return semicircle_reference(t, period); };
    const auto steps = static_cast<Eigen::Index>(std::lround(0.5 * period / cfg.Ts));

    // Noise scale: the largest magnitude each position coordinate of the
    // reference reaches over the run; heading is not perturbed.
    Eigen::VectorXd scale = Eigen::VectorXd::Zero(3);
    for (Eigen::Index k = 0; k <= steps; ++k) {
        const Eigen::VectorXd ref = reference(static_cast<double>(k) * cfg.Ts);
        scale[0] = std::max(scale[0], std::abs(ref[0]));
        scale[1] = std::max(scale[1], std::abs(ref[1]));
    }
    const NoiseSpec noise = level_noise(cfg, scale, level, seed);
    const TrainingData data = generate_training_data(sys, training_config(cfg, M, noise, seed));
    const Dictionary dict = build_poly_dictionary(sys.dim_state, sys.dim_input, cfg.degree);

    NoiseSpec none = zero_noise(3);
    none.seed = seed;
    const TrainedArtifacts nominal = train_offline(data.clean, dict, none);
    const TrainedArtifacts noisy = train_offline(data.noisy, dict, noise);

    const Controller plain = [period](const ControlContext& c) { return tracking_command(c, period, false); };
    const Controller compensated = [period](const ControlContext& c) { return tracking_command(c, period, true); };
    const Eigen::VectorXd x0 = reference(0.0);

    const TrajectoryLog log_nominal = run_closed_loop(nominal, sys, plain, reference, x0, steps, cfg.Ts);
    const TrajectoryLog log_noisy = run_closed_loop(noisy, sys, plain, reference, x0, steps, cfg.Ts);
    const TrajectoryLog log_proposed = run_closed_loop(noisy, sys, compensated, reference, x0, steps, cfg.Ts);

    // Input prediction: at each state of the Proposed run, the noise-induced
    // input change u(K_n) - u(K) against the change predicted by compensation.
    double sq_err = 0.0, sq_true = 0.0;
    for (std::size_t k = 0; k < log_proposed.size(); ++k) {
        const double t = log_proposed.t[k];
        const Eigen::VectorXd& x = log_proposed.x[k];
        const Eigen::VectorXd delta_prev = k > 0 ? log_proposed.delta_x_pred[k - 1] : Eigen::VectorXd::Zero(3);
        const Eigen::VectorXd u_nom = plain(make_control_context(nominal, reference, t, cfg.Ts, x, delta_prev));
        const Eigen::VectorXd u_noisy = plain(make_control_context(noisy, reference, t, cfg.Ts, x, delta_prev));
        const Eigen::VectorXd u_prop = compensated(make_control_context(noisy, reference, t, cfg.Ts, x, delta_prev));
        const Eigen::VectorXd predicted = u_noisy - u_prop;
        const Eigen::VectorXd truth = u_noisy - u_nom;
        sq_err += (predicted - truth).squaredNorm();
        sq_true += truth.squaredNorm();
    }
    const double n = static_cast<double>(log_proposed.size());
    r.metrics = {trajectory_mse(log_nominal), trajectory_mse(log_noisy), trajectory_mse(log_proposed), sq_err / n,
                 sq_true > 0.0 ? sq_err / sq_true : 0.0};
    if (trial == 0) {
        r.series.assign(kTrackingSeries.size(), {});
        const TrajectoryLog* logs[] = {&log_nominal, &log_noisy, &log_proposed};
        for (std::size_t k = 0; k < log_nominal.size(); ++k) {
            r.series[0].push_back(log_nominal.reference[k][0]);
            r.series[1].push_back(log_nominal.reference[k][1]);
            for (std::size_t j = 0; j < 3; ++j) {
                r.series[2 + 2 * j].push_back(logs[j]->x[k][0]);
                r.series[3 + 2 * j].push_back(logs[j]->x[k][1]);
            }
        }
    }
    r.ok = true;
    return r;
}

using TrialFn = TrialResult (*)(const StudyConfig&, Eigen::Index, double, int, std::uint64_t);

std::vector<CaseResult> run_cases(const StudyConfig& cfg, TrialFn fn, const std::vector<std::string>& metrics,
                                  const std::vector<std::string>& series) {
    cfg.validate();
    std::vector<CaseResult> cases;
    struct Job {
        std::size_t case_index;
        int trial;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (std::size_t mi = 0; mi < cfg.M_list.size(); ++mi) {
        for (double level : cfg.noise_levels) {
            CaseResult c;
            c.kind = cfg.kind;
            c.M = cfg.M_list[mi];
            c.level = level;
            c.metric_names = metrics;
            c.series_names = series;
            c.trials.resize(static_cast<std::size_t>(cfg.trials));
            for (int t = 0; t < cfg.trials; ++t) jobs.push_back({cases.size(), t, trial_seed(cfg.seed, mi, t)});
            cases.push_back(std::move(c));
        }
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) {
            const Job& job = jobs[j];
            CaseResult& c = cases[job.case_index];
            const auto start = std::chrono::steady_clock::now();
            TrialResult r;
            try {
                r = fn(cfg, c.M, c.level, job.trial, job.seed);
            } catch (const std::exception& e) {
                r = TrialResult{};
                r.trial = job.trial;
                r.seed = job.seed;
                r.ok = false;
                r.error = e.what();
            }
            r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            c.trials[static_cast<std::size_t>(job.trial)] = std::move(r);
        }
    };
    unsigned n_threads = cfg.deterministic ? 1u
                         : cfg.threads > 0 ? static_cast<unsigned>(cfg.threads)
                                           : std::max(1u, std::thread::hardware_concurrency());
    n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(jobs.size()));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    }
    return cases;
}

std::vector<double> parse_levels(const nlohmann::json& j) {
    std::vector<double> out;
    for (const auto& v : j) {
        if (v.is_string()) {
            std::string s = v.get<std::string>();
            const bool pct = !s.empty() && s.back() == '%';
            if (pct) s.pop_back();
            try {
                out.push_back(std::stod(s) / (pct ? 100.0 : 1.0));
            } catch (const std::exception&) {
                throw ConfigError("noise_levels: cannot parse '" + v.get<std::string>() + "'");
            }
        } else {
            out.push_back(v.get<double>());
        }
    }
    return out;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void write_csv_number(std::ostream& out, double v) {
    if (std::isfinite(v))
        out << v;
    else
        out << "nan";
}

std::string csv_text(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

void write_cases_csv(const std::vector<CaseResult>& results, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << std::setprecision(17);
    out << "study,case,M,level,trial,seed,status";
    for (const auto& name : results.front().metric_names) out << ',' << name;
    out << ",error\n";
    for (const auto& c : results) {
        for (const auto& t : c.trials) {
            out << to_string(c.kind) << ',' << c.id() << ',' << c.M << ',' << c.level << ',' << t.trial << ','
                << t.seed << ',' << (t.ok ? "ok" : "failed");
            for (std::size_t i = 0; i < c.metric_names.size(); ++i) {
                out << ',';
                if (t.ok) write_csv_number(out, t.metrics[i]);
            }
            out << ',' << csv_text(t.error) << '\n';
        }
        for (const char* agg : {"mean", "std"}) {
            out << to_string(c.kind) << ',' << c.id() << ',' << c.M << ',' << c.level << ',' << agg << ",,aggregate";
            for (std::size_t i = 0; i < c.metric_names.size(); ++i) {
                out << ',';
                write_csv_number(out, agg[0] == 'm' ? c.mean(i) : c.stddev(i));
            }
            out << ",\n";
        }
    }
    if (!out) throw IoError("write failed: " + path.string());
}

void write_summary_csv(const std::vector<CaseResult>& results, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << std::setprecision(17);
    out << "study,case,M,level,n_trials,n_ok";
    for (const auto& name : results.front().metric_names) out << ',' << name << "_mean," << name << "_std";
    out << '\n';
    for (const auto& c : results) {
        const auto n_ok = std::count_if(c.trials.begin(), c.trials.end(), [](const auto& t) { return t.ok; });
        out << to_string(c.kind) << ',' << c.id() << ',' << c.M << ',' << c.level << ',' << c.trials.size() << ','
            << n_ok;
        for (std::size_t i = 0; i < c.metric_names.size(); ++i) {
            out << ',';
            write_csv_number(out, c.mean(i));
            out << ',';
            write_csv_number(out, c.stddev(i));
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

void write_timings_csv(const std::vector<CaseResult>& results, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "case,trial,seconds\n";
    for (const auto& c : results)
        for (const auto& t : c.trials) out << c.id() << ',' << t.trial << ',' << t.seconds << '\n';
}

const TrialResult* first_with_series(const CaseResult& c) {
    for (const auto& t : c.trials)
        if (t.ok && !t.series.empty()) return &t;
    return nullptr;
}

std::vector<double> iota_steps(std::size_t n) {
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = static_cast<double>(i);
    return s;
}

void vdp_figures(const std::vector<CaseResult>& results, const std::filesystem::path& outdir) {
    std::vector<Eigen::Index> Ms;
    std::vector<double> levels;
    for (const auto& c : results) {
        if (std::find(Ms.begin(), Ms.end(), c.M) == Ms.end()) Ms.push_back(c.M);
        if (std::find(levels.begin(), levels.end(), c.level) == levels.end()) levels.push_back(c.level);
    }

    // Predicted vs true per-step error for trial 0, one curve pair per level,
    // at the largest training size.
    std::vector<PlotSeries> series;
    for (const auto& c : results) {
        if (c.M != Ms.back()) continue;
        const TrialResult* t = first_with_series(c);
        if (!t) continue;
        const auto steps = iota_steps(t->series[0].size());
        series.push_back({"predicted " + level_label(c.level), steps, t->series[0], false});
        series.push_back({"true " + level_label(c.level), steps, t->series[1], true});
    }
    write_line_plot(outdir / "error_per_step.svg",
                    {"One-step error in x2, M = " + std::to_string(Ms.back()), "step", "error in x2"}, series);

    std::vector<std::string> categories;
    for (auto M : Ms) categories.push_back("M=" + std::to_string(M));
    for (const auto& [metric, file] : {std::pair{0, "d_abs_bars.svg"}, std::pair{1, "d_r_bars.svg"}}) {
        std::vector<BarGroup> groups;
        for (double level : levels) {
            BarGroup g{level_label(level), {}};
            for (auto M : Ms) {
                double v = std::nan("");
                for (const auto& c : results)
                    if (c.M == M && c.level == level) v = c.mean(static_cast<std::size_t>(metric));
                g.values.push_back(v);
            }
            groups.push_back(std::move(g));
        }
        const std::string name = results.front().metric_names[static_cast<std::size_t>(metric)];
        write_bar_plot(outdir / file, {"Mean " + name + " over trials", "", name}, categories, groups);
    }
}

void tracking_figures(const std::vector<CaseResult>& results, const std::filesystem::path& outdir) {
    std::set<Eigen::Index> Ms;
    for (const auto& c : results) Ms.insert(c.M);
    std::vector<std::string> categories;
    BarGroup nominal{"Nominal", {}}, noisy{"Noisy", {}}, proposed{"Proposed", {}}, input_rel{"relative input MSE", {}};
    for (const auto& c : results) {
        categories.push_back(Ms.size() > 1 ? "M=" + std::to_string(c.M) + " " + level_label(c.level)
                                           : level_label(c.level));
        nominal.values.push_back(c.mean(0));
        noisy.values.push_back(c.mean(1));
        proposed.values.push_back(c.mean(2));
        input_rel.values.push_back(c.mean(4));

        const TrialResult* t = first_with_series(c);
        if (!t) continue;
        std::vector<PlotSeries> s = {{"reference", t->series[0], t->series[1], false},
                                     {"Nominal", t->series[2], t->series[3], false},
                                     {"Noisy", t->series[4], t->series[5], false},
                                     {"Proposed", t->series[6], t->series[7], false}};
        std::ostringstream name;
        name << "trajectories_M" << c.M << "_level" << std::lround(c.level * 100.0) << ".svg";
        write_line_plot(outdir / name.str(), {"Tracking, noise " + level_label(c.level), "x [m]", "y [m]"}, s, true);
    }
    write_bar_plot(outdir / "mse_bars.svg", {"Trajectory MSE", "noise level", "MSE [m^2]"}, categories,
                   {nominal, noisy, proposed});
    write_bar_plot(outdir / "input_mse_bars.svg", {"Input prediction MSE / true MSE", "noise level", "ratio"},
                   categories, {input_rel});
}

}  // namespace

std::string to_string(StudyKind kind) { return kind == StudyKind::vdp ? "vdp" : "tracking"; }

StudyConfig StudyConfig::vdp_defaults() {
    StudyConfig c;
    c.kind = StudyKind::vdp;
    c.M_list = {2000, 20000};
    c.noise_levels = {0.1, 0.2, 0.4};
    c.trials = 5;
    c.horizon = 50;
    c.degree = 3;
    c.Ts = 0.01;
    c.x0 = Eigen::Vector2d(0.5, 0.5);
    c.input_lo = Eigen::VectorXd::Constant(1, -1.0);
    c.input_hi = Eigen::VectorXd::Constant(1, 1.0);
    c.input_hold = 1;
    c.outdir = "results/vdp";
    return c;
}

StudyConfig StudyConfig::tracking_defaults() {
    StudyConfig c;
    c.kind = StudyKind::tracking;
    c.M_list = {2000};
    c.noise_levels = {0.25, 0.5, 0.75, 1.0};
    c.trials = 10;
    c.degree = 2;
    c.Ts = 0.05;
    c.period = 40.0;
    c.x0 = Eigen::Vector3d::Zero();
    c.input_lo = Eigen::Vector2d(0.0, -1.0);
    c.input_hi = Eigen::Vector2d(0.5, 1.0);
    c.input_hold = 10;
    c.outdir = "results/tracking";
    return c;
}

void StudyConfig::validate() const {
    if (M_list.empty()) throw ConfigError("study: M_list is empty");
    for (auto M : M_list)
        if (M < 2) throw ConfigError("study: every M must be >= 2");
    if (noise_levels.empty()) throw ConfigError("study: noise_levels is empty");
    for (double l : noise_levels)
        if (!(l >= 0.0 && l <= 2.0)) throw ConfigError("study: noise levels must lie in [0, 2]");
    if (trials < 1) throw ConfigError("study: trials must be >= 1");
    if (horizon < 1) throw ConfigError("study: horizon must be >= 1");
    if (degree < 1) throw ConfigError("study: degree must be >= 1");
    if (n_samples < 1) throw ConfigError("study: n_samples must be >= 1");
    if (!(Ts > 0.0)) throw ConfigError("study: Ts must be positive");
    if (input_hold < 1) throw ConfigError("study: input_hold must be >= 1");
    if (kind == StudyKind::tracking && !(period > 2.0 * Ts)) throw ConfigError("study: period too short");
    const Eigen::Index nx = kind == StudyKind::vdp ? 2 : 3;
    const Eigen::Index nu = kind == StudyKind::vdp ? 1 : 2;
    if (x0.size() != nx) throw ConfigError("study: x0 must have " + std::to_string(nx) + " entries");
    if (input_lo.size() != nu || input_hi.size() != nu)
        throw ConfigError("study: input ranges must have " + std::to_string(nu) + " entries");
    if (((input_hi - input_lo).array() < 0.0).any()) throw ConfigError("study: input_lo exceeds input_hi");
}

StudyConfig load_study_config(const std::filesystem::path& path, StudyConfig c) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "M_list") {
                c.M_list.clear();
                for (const auto& m : v) c.M_list.push_back(static_cast<Eigen::Index>(std::llround(m.get<double>())));
            } else if (key == "noise_levels") {
                c.noise_levels = parse_levels(v);
            } else if (key == "trials") {
                c.trials = v.get<int>();
            } else if (key == "horizon") {
                c.horizon = v.get<int>();
            } else if (key == "degree") {
                c.degree = v.get<int>();
            } else if (key == "dictionary") {
                if (v.value("type", std::string("poly")) != "poly")
                    throw ConfigError("config: only poly dictionaries are supported");
                c.degree = v.at("degree").get<int>();
            } else if (key == "seed") {
                c.seed = v.get<std::uint64_t>();
            } else if (key == "outdir") {
                c.outdir = v.get<std::string>();
            } else if (key == "Ts") {
                c.Ts = v.get<double>();
            } else if (key == "x0") {
                c.x0 = vector_from_json(v);
            } else if (key == "eval_start") {
                const auto e = v.get<std::string>();
                if (e != "x0" && e != "end_of_training")
                    throw ConfigError("config: eval_start must be 'x0' or 'end_of_training'");
                c.eval_from_x0 = e == "x0";
            } else if (key == "one_sided") {
                c.one_sided = v.get<bool>();
            } else if (key == "substitution") {
                c.substitution = noise_substitution_from_string(v.get<std::string>());
            } else if (key == "n_samples") {
                c.n_samples = v.get<int>();
            } else if (key == "period") {
                c.period = v.get<double>();
            } else if (key == "input_lo") {
                c.input_lo = vector_from_json(v);
            } else if (key == "input_hi") {
                c.input_hi = vector_from_json(v);
            } else if (key == "input_hold") {
                c.input_hold = v.get<int>();
            } else if (key == "threads") {
                c.threads = v.get<int>();
            } else if (key == "deterministic") {
                c.deterministic = v.get<bool>();
            } else if (key == "study") {
                const auto s = v.get<std::string>();
                if (s != to_string(c.kind)) throw ConfigError("config is for study '" + s + "'");
            } else {
                throw ConfigError("config: unknown key '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string CaseResult::id() const {
    std::ostringstream s;
    s << to_string(kind) << "_M" << M << "_L" << std::lround(level * 100.0);
    return s.str();
}

bool CaseResult::all_ok() const {
    return !trials.empty() && std::all_of(trials.begin(), trials.end(), [](const auto& t) { return t.ok; });
}

double CaseResult::mean(std::size_t metric) const {
    double sum = 0.0;
    int n = 0;
    for (const auto& t : trials)
        if (t.ok) sum += t.metrics[metric], ++n;
    return n ? sum / n : std::nan("");
}

double CaseResult::stddev(std::size_t metric) const {
    const double mu = mean(metric);
    double ss = 0.0;
    int n = 0;
    for (const auto& t : trials)
        if (t.ok) ss += (t.metrics[metric] - mu) * (t.metrics[metric] - mu), ++n;
    return n ? std::sqrt(ss / n) : std::nan("");
}

VdpTrialMetrics error_discrepancy(const std::vector<double>& predicted, const std::vector<double>& truth) {
    if (predicted.size() != truth.size() || predicted.empty())
        throw DimensionError("error_discrepancy: series must be nonempty and equally long");
    VdpTrialMetrics m;
    int matches = 0, counted = 0;
    for (std::size_t t = 0; t < truth.size(); ++t) {
        const double diff = std::abs(std::abs(predicted[t]) - std::abs(truth[t]));
        m.D_abs += diff;
        if (std::abs(truth[t]) < kTinyError) {
            ++m.excluded_steps;
            continue;
        }
        m.D_r += diff / std::abs(truth[t]);
        ++counted;
        if (predicted[t] * truth[t] > 0.0) ++matches;
    }
    m.sign_match = counted ? static_cast<double>(matches) / counted : 0.0;
    return m;
}

Eigen::VectorXd semicircle_reference(double t, double period) {
    const double w = 2.0 * std::numbers::pi / period;
    return Eigen::Vector3d(std::sin(w * t), 1.0 - std::cos(w * t), w * t);
}

Eigen::VectorXd tracking_command(const ControlContext& ctx, double period, bool compensate, const TrackingGains& g) {
    const double w = 2.0 * std::numbers::pi / period;
    const double v_ref = w;  // unit radius

    auto feedback = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& r) -> Eigen::Vector2d {
        const double c = std::cos(x[2]), s = std::sin(x[2]);
        const double dx = r[0] - x[0], dy = r[1] - x[1];
        const double e_x = c * dx + s * dy;
        const double e_y = -s * dx + c * dy;
        const double e_th = wrap_angle(r[2] - x[2]);
        const Eigen::Vector2d u(v_ref * std::cos(e_th) + g.k_x * e_x,
                                w + v_ref * (g.k_y * e_y + g.k_theta * std::sin(e_th)));
        return u.cwiseMax(g.u_min).cwiseMin(g.u_max);
    };

    // Look-ahead: apply the same law to the model's one-step prediction under
    // the current command and blend the two commands.
    const Eigen::Vector2d u_now = feedback(ctx.x, ctx.reference);
    const StepResult st = ctx.step(u_now);
    const Eigen::VectorXd x_next = compensate ? Eigen::VectorXd(st.x_pred - ctx.delta_prev) : st.x_pred;
    const Eigen::Vector2d u_ahead = feedback(x_next, ctx.reference_next);
    const Eigen::Vector2d u = (1.0 - g.correction) * u_now + g.correction * u_ahead;
    return u.cwiseMax(g.u_min).cwiseMin(g.u_max);
}

double trajectory_mse(const TrajectoryLog& log) {
    if (log.size() == 0) throw DimensionError("trajectory_mse: empty log");
    double sum = 0.0;
    for (std::size_t k = 0; k < log.size(); ++k) sum += (log.x[k].head<2>() - log.reference[k].head<2>()).squaredNorm();
    return sum / static_cast<double>(log.size());
}

std::vector<CaseResult> run_vdp_study(const StudyConfig& config) {
    if (config.kind != StudyKind::vdp) throw ConfigError("run_vdp_study: config is not a Van der Pol study");
    return run_cases(config, vdp_trial, kVdpMetrics, kVdpSeries);
}

std::vector<CaseResult> run_tracking_study(const StudyConfig& config) {
    if (config.kind != StudyKind::tracking) throw ConfigError("run_tracking_study: config is not a tracking study");
    return run_cases(config, tracking_trial, kTrackingMetrics, kTrackingSeries);
}

std::vector<CaseResult> run_study(const StudyConfig& config) {
    return config.kind == StudyKind::vdp ? run_vdp_study(config) : run_tracking_study(config);
}

void emit_outputs(const std::vector<CaseResult>& results, const std::filesystem::path& outdir, bool deterministic) {
    if (results.empty()) throw ConfigError("emit_outputs: no results");
    for (const auto& c : results)
        if (c.trials.empty()) throw ConfigError("emit_outputs: case " + c.id() + " has no trials");
    std::error_code ec;
    std::filesystem::create_directories(outdir, ec);
    if (ec) throw IoError("cannot create " + outdir.string() + ": " + ec.message());

    write_cases_csv(results, outdir / "cases.csv");
    write_summary_csv(results, outdir / "summary.csv");
    if (!deterministic) write_timings_csv(results, outdir / "timings.csv");
    if (results.front().kind == StudyKind::vdp)
        vdp_figures(results, outdir);
    else
        tracking_figures(results, outdir);
}

}  // namespace koopman
