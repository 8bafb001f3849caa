#pragma once

#include <stdexcept>
#include <string>

namespace covp {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Argument or invariant violation. Callers get these instead of UB.
struct PreconditionError : Error {
  using Error::Error;
};

// A service call failed. `retriable` separates transient transport failures
// (timeouts, 5xx, dead pipe) from requests the service rejected outright.
struct ServiceError : Error {
  bool retriable;
  ServiceError(const std::string& msg, bool retriable_)
      : Error(msg), retriable(retriable_) {}
};

// No parseable coordinates were produced for any prompt. The pipeline maps
// this to its configured fallback policy.
struct NoDetectionError : Error {
  using Error::Error;
};

}  // namespace covp
