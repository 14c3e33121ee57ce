#pragma once

#include <stdexcept>
#include <string>

namespace disagg {

enum class ErrorKind {
    config,      // bad config file or CLI usage
    schema,      // data violates the declared attribute schema
    data,        // missing fields or malformed values
    param,       // invalid function parameter
    estimation,  // not enough defined inputs to estimate
    inference,   // not enough structure for intervals or tests
    numeric,     // non-finite inputs or failed factorization
    sampling,    // infeasible sampling request
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message)
        : std::runtime_error(std::move(message)), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    // Exit-code contract: config/schema problems are usage errors (2),
    // everything else is a runtime failure (1).
    int exit_code() const noexcept {
        return (kind_ == ErrorKind::config || kind_ == ErrorKind::schema) ? 2 : 1;
    }

    const char* kind_name() const noexcept {
        switch (kind_) {
            case ErrorKind::config: return "config";
            case ErrorKind::schema: return "schema";
            case ErrorKind::data: return "data";
            case ErrorKind::param: return "param";
            case ErrorKind::estimation: return "estimation";
            case ErrorKind::inference: return "inference";
            case ErrorKind::numeric: return "numeric";
            case ErrorKind::sampling: return "sampling";
        }
        return "unknown";
    }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

} // namespace disagg
