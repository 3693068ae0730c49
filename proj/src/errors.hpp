#pragma once

#include <stdexcept>
#include <string>

namespace dmk {

// Every failure raised by the core derives from Error; the C API maps the
// subclasses onto stable status codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape disagreement between fields, or a degenerate axis.
class DimensionError : public Error {
public:
    using Error::Error;
};

// A non-finite value was produced or consumed. `op()` names the primitive.
class NumericError : public Error {
public:
    NumericError(std::string op, const std::string& what)
        : Error(op + ": " + what), op_(std::move(op)) {}
    const std::string& op() const noexcept { return op_; }

private:
    std::string op_;
};

// Caller broke a precondition (non-scalar loss, empty mask, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

// Malformed user input: JSON schema violations, bad specs, unreadable files.
// `path()` carries the offending field path when one exists.
class InputError : public Error {
public:
    explicit InputError(const std::string& what, std::string path = {})
        : Error(path.empty() ? what : path + ": " + what), message_(what), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }
    // The description without the path prefix.
    const std::string& message() const noexcept { return message_; }

private:
    std::string message_;
    std::string path_;
};

// Optimisation produced a non-finite loss.
class DivergenceError : public Error {
public:
    DivergenceError(int step, std::string component, const std::string& what)
        : Error(what), step_(step), component_(std::move(component)) {}
    int step() const noexcept { return step_; }
    const std::string& component() const noexcept { return component_; }

private:
    int step_;
    std::string component_;
};

}  // namespace dmk
