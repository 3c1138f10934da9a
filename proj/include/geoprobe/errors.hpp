#pragma once

#include <stdexcept>
#include <string>

namespace geoprobe {

/// Malformed input data (bad TSV rows, unreadable files, bad JSON syntax).
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& msg) : std::runtime_error(msg), line_(0) {}
    ParseError(std::size_t line, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}

    /// 1-based input line, 0 when the error is not tied to a line.
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Structurally valid inputs that do not fit together (cluster file vs
/// dataset mismatches, unknown labels, dimension mismatches).
class ConsistencyError : public std::runtime_error {
public:
    explicit ConsistencyError(const std::string& msg) : std::runtime_error(msg) {}
};

/// The separation kernel hit its iteration cap before certifying a result.
class KernelError : public std::runtime_error {
public:
    explicit KernelError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace geoprobe
