#pragma once

#include <stdexcept>
#include <string>

namespace pointmpm {

/// Base of every error raised by the library. `kind()` is a short stable
/// token used in machine-readable diagnostics (the CLI prints it verbatim).
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error("shape_mismatch", what) {}
};

class NonFiniteError : public Error {
public:
    explicit NonFiniteError(const std::string& what) : Error("non_finite", what) {}
};

class BindingError : public Error {
public:
    explicit BindingError(const std::string& what) : Error("unbound_leaf", what) {}
};

class ArgumentError : public Error {
public:
    explicit ArgumentError(const std::string& what) : Error("invalid_argument", what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("config", what) {}
};

class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error("format", what) {}
};

/// Raised by training loops when a loss or gradient stops being finite.
class TrainingAborted : public Error {
public:
    explicit TrainingAborted(const std::string& what) : Error("non_finite_loss", what) {}
};

} // namespace pointmpm
