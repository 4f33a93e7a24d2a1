#include "koopman/noise.hpp"

#include "koopman/errors.hpp"

namespace koopman {

Eigen::Index NoiseSpec::n_state() const {
    return static_cast<Eigen::Index>(family == NoiseFamily::gaussian ? mean.size() : hi.size());
}

void NoiseSpec::validate() const {
    if (n_samples < 1) throw ConfigError("noise: n_samples must be >= 1");
    if (family == NoiseFamily::gaussian) {
        if (mean.size() != stddev.size()) throw ConfigError("noise: mean/stddev length mismatch");
        for (double s : stddev)
            if (!(s >= 0.0)) throw ConfigError("noise: stddev must be >= 0");
    } else {
        if (lo.size() != hi.size()) throw ConfigError("noise: lo/hi length mismatch");
        for (std::size_t i = 0; i < lo.size(); ++i)
            if (!(lo[i] <= hi[i])) throw ConfigError("noise: interval requires lo <= hi");
    }
}

bool NoiseSpec::is_zero() const {
    if (family == NoiseFamily::gaussian) {
        for (std::size_t i = 0; i < mean.size(); ++i)
            if (mean[i] != 0.0 || stddev[i] != 0.0) return false;
        return true;
    }
    for (std::size_t i = 0; i < lo.size(); ++i)
        if (lo[i] != 0.0 || hi[i] != 0.0) return false;
    return true;
}

Eigen::VectorXd NoiseSpec::expectation() const {
    const Eigen::Index n = n_state();
    Eigen::VectorXd e(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (family == NoiseFamily::gaussian)
            e[i] = mean[k];
        else
            e[i] = random_sign ? 0.0 : 0.5 * (lo[k] + hi[k]);
    }
    return e;
}

NoiseSpec zero_noise(Eigen::Index n_state) {
    NoiseSpec spec;
    spec.family = NoiseFamily::uniform;
    spec.lo.assign(static_cast<std::size_t>(n_state), 0.0);
    spec.hi.assign(static_cast<std::size_t>(n_state), 0.0);
    return spec;
}

NoiseSpec gaussian_noise(std::vector<double> mean, std::vector<double> stddev, std::uint64_t seed) {
    NoiseSpec spec;
    spec.family = NoiseFamily::gaussian;
    spec.mean = std::move(mean);
    spec.stddev = std::move(stddev);
    spec.random_sign = false;
    spec.seed = seed;
    spec.validate();
    return spec;
}

NoiseSpec uniform_amplitude_noise(std::vector<double> hi, bool one_sided, std::uint64_t seed) {
    NoiseSpec spec;
    spec.family = NoiseFamily::uniform;
    spec.lo.assign(hi.size(), 0.0);
    spec.hi = std::move(hi);
    spec.random_sign = !one_sided;
    spec.seed = seed;
    spec.validate();
    return spec;
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

Eigen::MatrixXd sample_noise(const NoiseSpec& spec, Eigen::Index n_cols, std::mt19937_64& rng) {
    spec.validate();
    const Eigen::Index n = spec.n_state();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n_cols);
    if (spec.is_zero()) return out;
    // Column-major draw order: all coordinates of snapshot m before snapshot m+1.
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index m = 0; m < n_cols; ++m) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(i);
            double v;
            if (spec.family == NoiseFamily::gaussian) {
                v = spec.mean[k] + spec.stddev[k] * normal(rng);
            } else {
                v = spec.lo[k] + (spec.hi[k] - spec.lo[k]) * unit(rng);
                if (spec.random_sign && unit(rng) < 0.5) v = -v;
            }
            out(i, m) = v;
        }
    }
    return out;
}

std::string to_string(NoiseFamily f) { return f == NoiseFamily::gaussian ? "gaussian" : "uniform"; }

std::string to_string(NoiseSubstitution s) { return s == NoiseSubstitution::mean ? "mean" : "resample"; }

NoiseFamily noise_family_from_string(const std::string& s) {
    if (s == "gaussian") return NoiseFamily::gaussian;
    if (s == "uniform") return NoiseFamily::uniform;
    throw ConfigError("unknown noise family '" + s + "'");
}

NoiseSubstitution noise_substitution_from_string(const std::string& s) {
    if (s == "mean") return NoiseSubstitution::mean;
    if (s == "resample") return NoiseSubstitution::resample;
    throw ConfigError("unknown noise substitution '" + s + "'");
}

}  // namespace koopman
