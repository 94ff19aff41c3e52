#pragma once

#include <stdexcept>
#include <string>

namespace avpr {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration (zero viewpoints, bad hyper-parameters, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Malformed input file. The message carries line/field context.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Well-formed input that violates a model invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Bayes update whose pointwise product is identically zero.
class DegenerateBeliefError : public Error {
public:
    using Error::Error;
};

/// Operation called in the wrong lifecycle state (e.g. step after terminal).
class StateError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss during gradient training.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// Referenced artifact (weights, world) cannot be found.
class MissingArtifactError : public Error {
public:
    explicit MissingArtifactError(const std::string& path)
        : Error("missing artifact: " + path), path_(path) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

}  // namespace avpr
