#ifndef RAINBOW_ERRORS_HPP
#define RAINBOW_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace rainbow {

// Exit-code buckets used by the CLI: 2 validation, 3 numeric, 4 precondition.
enum class ErrorKind {
  argument,      // malformed input, dimension mismatch
  validation,    // config violates model invariants
  degenerate,    // geometry outside general position
  infeasible,    // origin not interior / positive completeness fails
  precondition,  // a theorem gate (Lipschitz, beta bound) is violated
  numeric,       // quadrature or fixed-point failed to converge
  resource       // configured budget exceeded
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

  int exit_code() const noexcept {
    switch (kind_) {
      case ErrorKind::argument:
      case ErrorKind::validation:
        return 2;
      case ErrorKind::numeric:
        return 3;
      default:
        return 4;
    }
  }

private:
  ErrorKind kind_;
};

inline Error argument_error(const std::string& what) { return Error(ErrorKind::argument, what); }
inline Error validation_error(const std::string& what) { return Error(ErrorKind::validation, what); }
inline Error degeneracy_error(const std::string& what) { return Error(ErrorKind::degenerate, what); }
inline Error infeasible_error(const std::string& what) { return Error(ErrorKind::infeasible, what); }
inline Error precondition_error(const std::string& what) { return Error(ErrorKind::precondition, what); }
inline Error numeric_error(const std::string& what) { return Error(ErrorKind::numeric, what); }
inline Error resource_error(const std::string& what) { return Error(ErrorKind::resource, what); }

}  // namespace rainbow

#endif
