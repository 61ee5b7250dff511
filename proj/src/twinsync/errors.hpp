#pragma once

#include <stdexcept>
#include <string>

namespace twinsync {

enum class ErrorKind {
    InvalidArgument,
    Shape,
    EmptyInput,
    Numeric,
    Format,
    InsufficientData,
    Sequencing,
    Config,
    Io,
};

// Every failure raised by the core carries a category so the C API can map
// it onto a status code without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) fail(kind, what);
}

}  // namespace twinsync
