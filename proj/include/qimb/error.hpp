#pragma once

#include <stdexcept>
#include <string>

namespace qimb {

/// Base class for every error raised by the library. The exit code maps onto
/// the command-line contract: 2 usage/config, 3 data, 4 numerical.
class Error : public std::runtime_error {
public:
    Error(const std::string& what, int exit_code)
        : std::runtime_error(what), exit_code_(exit_code) {}
    int exit_code() const noexcept { return exit_code_; }

private:
    int exit_code_;
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(what, 2) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(what, 3) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(what, 4) {}
};

/// Precondition violation on an in-process call (shape mismatch, bad index).
class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error(what, 2) {}
};

}  // namespace qimb
