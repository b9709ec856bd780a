#pragma once

#include <stdexcept>
#include <string>

namespace crisiscast {

/// Broad failure category. Maps onto CLI exit codes (usage 1, data 2, numerical 3).
enum class ErrorKind { Usage, Data, Numerical };

/**
 * Error raised by every module. Carries a stable code (e.g. "SeriesTooShort"),
 * the module that raised it, and a category used for exit-code mapping.
 */
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string module, std::string code, const std::string &message)
        : std::runtime_error(module + ": " + code + ": " + message),
          kind_(kind),
          module_(std::move(module)),
          code_(std::move(code)) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }
    [[nodiscard]] const std::string &module() const noexcept { return module_; }
    [[nodiscard]] const std::string &code() const noexcept { return code_; }

private:
    ErrorKind kind_;
    std::string module_;
    std::string code_;
};

[[noreturn]] inline void throw_data(const std::string &module, const std::string &code,
                                    const std::string &message) {
    throw Error(ErrorKind::Data, module, code, message);
}

[[noreturn]] inline void throw_numerical(const std::string &module, const std::string &code,
                                         const std::string &message) {
    throw Error(ErrorKind::Numerical, module, code, message);
}

[[noreturn]] inline void throw_usage(const std::string &module, const std::string &code,
                                     const std::string &message) {
    throw Error(ErrorKind::Usage, module, code, message);
}

inline int exit_code_for(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::Usage:
        return 1;
    case ErrorKind::Data:
        return 2;
    case ErrorKind::Numerical:
        return 3;
    }
    return 2;
}

}  // namespace crisiscast
