#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace koopman {

enum class NoiseFamily { gaussian, uniform };

/// How delta_K turns noise statistics into per-snapshot perturbations.
enum class NoiseSubstitution {
    mean,      ///< every Delta x_m^i replaced by E(Delta x^i)
    resample,  ///< average of n_samples independently drawn noise matrices
};

/// Statistical description of state-measurement noise, one entry per state coordinate.
///
/// Gaussian: N(mean_i, stddev_i^2). Uniform: magnitude drawn from [lo_i, hi_i];
/// when `random_sign` is set each draw is negated with probability 1/2, so the
/// distribution is symmetric about zero.
struct NoiseSpec {
    NoiseFamily family = NoiseFamily::uniform;
    std::vector<double> mean;
    std::vector<double> stddev;
    std::vector<double> lo;
    std::vector<double> hi;
    bool random_sign = true;
    NoiseSubstitution substitution = NoiseSubstitution::resample;
    int n_samples = 5;
    std::uint64_t seed = 0;

    Eigen::Index n_state() const;
    /// Throws ConfigError unless stddev >= 0, lo <= hi, n_samples >= 1 and
    /// the parameter vectors have consistent lengths.
    void validate() const;
    /// True when every draw is identically zero.
    bool is_zero() const;
    /// E(Delta x^i) per coordinate.
    Eigen::VectorXd expectation() const;

    bool operator==(const NoiseSpec&) const = default;
};

NoiseSpec zero_noise(Eigen::Index n_state);
NoiseSpec gaussian_noise(std::vector<double> mean, std::vector<double> stddev, std::uint64_t seed = 0);
/// Magnitudes uniform on [0, hi_i], symmetric sign unless `one_sided`.
NoiseSpec uniform_amplitude_noise(std::vector<double> hi, bool one_sided, std::uint64_t seed = 0);

/// Engine for sub-stream `stream` of a 64-bit master seed.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0);

/// Draws an n_state x n_cols noise matrix.
Eigen::MatrixXd sample_noise(const NoiseSpec& spec, Eigen::Index n_cols, std::mt19937_64& rng);

std::string to_string(NoiseFamily f);
std::string to_string(NoiseSubstitution s);
NoiseFamily noise_family_from_string(const std::string& s);
NoiseSubstitution noise_substitution_from_string(const std::string& s);

}  // namespace koopman
