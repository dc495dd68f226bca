#pragma once

#include <stdexcept>
#include <string>

namespace txlr {

// Categories map 1:1 onto the CLI exit codes (usage=1, data=2, numeric=3).
enum class ErrorCategory { usage, data, numeric };

inline const char* category_name(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::usage: return "usage";
        case ErrorCategory::data: return "data";
        case ErrorCategory::numeric: return "numeric";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& message) : Error(ErrorCategory::usage, message) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& message) : Error(ErrorCategory::data, message) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& message) : Error(ErrorCategory::numeric, message) {}
};

// Shape mismatches are reported as numeric failures: they can only arise from
// an inconsistent model/config, never from user data that passed validation.
class ShapeError : public NumericError {
public:
    explicit ShapeError(const std::string& message) : NumericError(message) {}
};

}  // namespace txlr
