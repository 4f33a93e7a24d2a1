#include "koopman/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>

#include "koopman/errors.hpp"

namespace koopman {

namespace {

template <typename Fn>
auto run_stage(TrainingMetadata& meta, const char* name, Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    try {
        if constexpr (std::is_void_v<decltype(fn())>) {
            fn();
            meta.stage_seconds.emplace_back(
                name, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        } else {
            auto result = fn();
            meta.stage_seconds.emplace_back(
                name, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
            return result;
        }
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

}  // namespace

TrainedArtifacts train_offline(const SnapshotSet& snapshots, const Dictionary& dict, const NoiseSpec& noise,
                               const EdmdOptions& options) {
    TrainingMetadata meta;
    meta.M = snapshots.M();
    meta.seed = noise.seed;
    meta.dict_spec = dict.spec();

    run_stage(meta, "validate", [&] {
        noise.validate();
        if (noise.n_state() != dict.n_state()) throw DimensionError("noise spec and dictionary disagree on n_state");
    });
    const LiftedSnapshots data = run_stage(meta, "lift", [&] { return lift_with_jacobians(dict, snapshots); });
    auto [G, A] = run_stage(meta, "compute_g_a", [&] { return compute_g_a(data.psi); });
    Eigen::MatrixXd G_pinv = run_stage(meta, "estimate_koopman", [&] { return pseudo_inverse(G, options.svd_tol); });
    Eigen::MatrixXd K = G_pinv * A;
    SpectralData spectrum =
        run_stage(meta, "eigendecompose", [&] { return eigendecompose(K, options.degeneracy_tol); });
    Eigen::MatrixXd B = run_stage(meta, "compute_B", [&] { return compute_B(dict, data.psi, snapshots); });
    Eigen::MatrixXcd F = run_stage(meta, "compute_F", [&] { return compute_F(spectrum, B); });

    KoopmanModel model{dict,
                       std::move(G),
                       std::move(A),
                       std::move(G_pinv),
                       std::move(K),
                       std::move(spectrum),
                       std::move(B),
                       std::move(F),
                       options,
                       noise.seed};

    KoopmanSensitivity sens;
    sens.delta_K = run_stage(meta, "delta_K", [&] { return delta_K(data, model, noise); });
    sens.eigen = run_stage(meta, "eigen_sensitivities", [&] { return eigen_sensitivities(model); });
    sens.model_fingerprint = model_fingerprint(model);
    Eigen::MatrixXcd kernel = run_stage(meta, "error_kernel", [&] { return prediction_error_kernel(model, sens); });

    return TrainedArtifacts{std::move(model), std::move(sens), noise, std::move(meta), std::move(kernel)};
}

StepResult step_online(const TrainedArtifacts& artifacts, const VectorRef& x, const VectorRef& u) {
    const KoopmanModel& model = artifacts.model;
    const Eigen::RowVectorXd psi = model.dict.evaluate(x, u);
    const Eigen::RowVectorXcd psic = psi.cast<std::complex<double>>();
    const Eigen::Index nx = model.n_state();
    const Eigen::VectorXcd pred = (psic * model.F.leftCols(nx)).transpose();
    const Eigen::VectorXcd err = (psic * artifacts.error_kernel.leftCols(nx)).transpose();
    return {real_part_checked(pred, model.options.imag_tol, "step_online prediction"),
            real_part_checked(err, model.options.imag_tol, "step_online error estimate")};
}

ControlContext make_control_context(const TrainedArtifacts& artifacts, const Reference& reference, double t, double Ts,
                                    const Eigen::VectorXd& x, const Eigen::VectorXd& delta_prev) {
    ControlContext ctx;
    ctx.t = t;
    ctx.x = x;
    ctx.reference = reference(t);
    ctx.reference_next = reference(t + Ts);
    ctx.delta_prev = delta_prev;
    ctx.step = [&artifacts, x](const Eigen::VectorXd& u) { return step_online(artifacts, x, u); };
    return ctx;
}

TrajectoryLog run_closed_loop(const TrainedArtifacts& artifacts, const ContinuousSystem& system,
                              const Controller& controller, const Reference& reference, const Eigen::VectorXd& x0,
                              Eigen::Index steps, double Ts) {
    if (x0.size() != system.dim_state) throw DimensionError("run_closed_loop: x0 has wrong dimension");
    TrajectoryLog log;
    Eigen::VectorXd x = x0;
    Eigen::VectorXd delta_prev = Eigen::VectorXd::Zero(system.dim_state);
    for (Eigen::Index k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * Ts;
        const ControlContext ctx = make_control_context(artifacts, reference, t, Ts, x, delta_prev);

        const Eigen::VectorXd u = controller(ctx);
        if (u.size() != system.dim_input || !u.allFinite())
            throw NonFiniteError("run_closed_loop: controller returned an invalid input");
        const StepResult step = step_online(artifacts, x, u);

        log.step.push_back(k);
        log.t.push_back(t);
        log.x.push_back(x);
        log.u.push_back(u);
        log.x_pred.push_back(step.x_pred);
        log.delta_x_pred.push_back(step.delta_x_pred);
        log.reference.push_back(ctx.reference);

        x = rk4_step(system, x, u, Ts);
        delta_prev = step.delta_x_pred;
    }
    log.final_state = x;
    return log;
}

void write_trajectory_csv(const TrajectoryLog& log, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    if (log.size() == 0) throw IoError("write_trajectory_csv: empty log");
    const auto nx = log.x.front().size();
    const auto nu = log.u.front().size();
    const auto nr = log.reference.front().size();
    out << "step,t";
    for (Eigen::Index i = 0; i < nx; ++i) out << ",x" << i + 1;
    for (Eigen::Index i = 0; i < nu; ++i) out << ",u" << i + 1;
    for (Eigen::Index i = 0; i < nx; ++i) out << ",x_pred" << i + 1;
    for (Eigen::Index i = 0; i < nx; ++i) out << ",delta_x_pred" << i + 1;
    for (Eigen::Index i = 0; i < nr; ++i) out << ",reference" << i + 1;
    out << '\n' << std::setprecision(17);
    for (std::size_t k = 0; k < log.size(); ++k) {
        out << log.step[k] << ',' << log.t[k];
        for (const auto* v : {&log.x[k], &log.u[k], &log.x_pred[k], &log.delta_x_pred[k], &log.reference[k]})
            for (Eigen::Index i = 0; i < v->size(); ++i) out << ',' << (*v)[i];
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace koopman
