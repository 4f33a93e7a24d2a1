#pragma once

#include <stdexcept>
#include <string>

namespace koopman {

/// Base class for every error raised by the library.
class KoopmanError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public KoopmanError {
public:
    using KoopmanError::KoopmanError;
};

/// A dictionary, simulator or data file produced NaN/Inf.
class NonFiniteError : public KoopmanError {
public:
    using KoopmanError::KoopmanError;
};

/// Two eigenvalues of K are closer than the degeneracy tolerance.
class DegenerateSpectrum : public KoopmanError {
public:
    using KoopmanError::KoopmanError;
};

/// A quantity that must be real carried an imaginary part above tolerance.
class ImaginaryResidue : public KoopmanError {
public:
    using KoopmanError::KoopmanError;
};

class ConfigError : public KoopmanError {
public:
    using KoopmanError::KoopmanError;
};

class IoError : public KoopmanError {
public:
    using KoopmanError::KoopmanError;
};

/// Wraps an error raised inside a named training stage.
class StageError : public KoopmanError {
public:
    StageError(std::string stage, const std::string& what)
        : KoopmanError("[" + stage + "] " + what), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace koopman
