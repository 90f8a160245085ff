#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace qflow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller-side contract violation: bad argument, bad file, bad config.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Reading or writing a file failed, or a file is malformed.
class IoError : public Error {
public:
    using Error::Error;
};

/// The numerics failed: overflow, solver stagnation, optimizer divergence.
/// `failure_class()` is a short stable tag (e.g. "overflow") that the CLI
/// reports on standard error.
class NumericalError : public Error {
public:
    NumericalError(std::string failure_class, const std::string& what)
        : Error(failure_class + ": " + what), class_(std::move(failure_class)) {}

    const std::string& failure_class() const noexcept { return class_; }

private:
    std::string class_;
};

}  // namespace qflow
