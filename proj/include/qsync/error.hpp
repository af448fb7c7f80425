#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qsync {

/// Broad failure classes. The CLI maps each one to a distinct exit status.
enum class ErrorCategory {
  domain,        // argument outside a model's validity range
  config,        // semantic configuration problem
  parse,         // malformed text input
  validation,    // well-formed input violating an invariant
  precondition,  // caller broke an operation's contract
  numeric,       // non-finite intermediate values
  resolution,    // sampling grid too coarse for the requested computation
  resource,      // request exceeds a memory/event cap
  fit,           // estimator did not produce a usable result
  io,            // filesystem problems
};

inline std::string_view to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::domain: return "domain";
    case ErrorCategory::config: return "config";
    case ErrorCategory::parse: return "parse";
    case ErrorCategory::validation: return "validation";
    case ErrorCategory::precondition: return "precondition";
    case ErrorCategory::numeric: return "numeric";
    case ErrorCategory::resolution: return "resolution";
    case ErrorCategory::resource: return "resource";
    case ErrorCategory::fit: return "fit";
    case ErrorCategory::io: return "io";
  }
  return "unknown";
}

inline int exit_code(ErrorCategory c) { return 10 + static_cast<int>(c); }

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory c, const std::string& what) { throw Error(c, what); }

}  // namespace qsync
