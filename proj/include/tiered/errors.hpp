#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tiered {

/// Invalid configuration or input value. `field()` names the offending key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& what)
        : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Malformed trace or training file. `line()` is 1-based; the header is line 1.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Numerical failure: singular design matrix, degenerate fit.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A simulator or cache invariant was broken. Always a bug.
class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace tiered
