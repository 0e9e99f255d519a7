#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sobdde {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class OutOfDomain : public Error {
public:
    using Error::Error;
};

class GridMismatch : public Error {
public:
    using Error::Error;
};

class DomainViolation : public Error {
public:
    using Error::Error;
};

class NonFinite : public Error {
public:
    using Error::Error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Parse failure with a 1-based source position.
class SyntaxError : public Error {
public:
    SyntaxError(const std::string& what, std::size_t line, std::size_t column)
        : Error(what + " at line " + std::to_string(line) + ", column " + std::to_string(column)),
          line_(line), column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

class UnknownIdentifier : public SyntaxError {
public:
    using SyntaxError::SyntaxError;
};

class WindowTooSmall : public Error {
public:
    using Error::Error;
};

/// Fixed-point or Neumann iteration failed; `window()` is the index of the
/// contraction window where it happened (or -1 when not applicable).
class NoConvergence : public Error {
public:
    NoConvergence(const std::string& what, double ratio, int window = -1)
        : Error(what), ratio_(ratio), window_(window) {}

    double ratio() const noexcept { return ratio_; }
    int window() const noexcept { return window_; }

private:
    double ratio_;
    int window_;
};

}  // namespace sobdde
