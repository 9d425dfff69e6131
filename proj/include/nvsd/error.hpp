#ifndef NVSD_ERROR_HPP
#define NVSD_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nvsd {

/// Broad failure categories. The CLI maps them one-to-one onto exit codes.
enum class ErrorKind { Validation = 1, Io = 2, Integrity = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(ErrorKind::Validation, what) {}
};

/// Malformed text input; `line` is 1-based.
class ParseError : public ValidationError {
public:
    ParseError(std::size_t line, const std::string& what)
        : ValidationError("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Binary trace ended in the middle of a record.
class DecodeError : public ValidationError {
public:
    DecodeError(std::size_t offset, const std::string& what)
        : ValidationError("byte offset " + std::to_string(offset) + ": " + what), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

/// A report or simulator state failed a self-consistency check.
class IntegrityError : public Error {
public:
    explicit IntegrityError(const std::string& what) : Error(ErrorKind::Integrity, what) {}
};

/// Caller broke a documented precondition (programming error, not bad input).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace nvsd

#endif
