#pragma once

// ---------------------------------------------------------------------------
// Error type shared by the whole library. Every failure carries a short
// machine-readable kind ("ZeroRow", "ShapeMismatch", ...) plus a human
// message. The CLI prints errors as "ERROR:<kind>: <message>" so scripts can
// match on the kind.
// ---------------------------------------------------------------------------

#include <stdexcept>
#include <string>
#include <utility>

namespace resa {

class Error : public std::runtime_error {
 public:
  Error(std::string kind, std::string message)
      : std::runtime_error(kind + ": " + message),
        kind_(std::move(kind)),
        message_(std::move(message)) {}

  const std::string& kind() const { return kind_; }
  const std::string& message() const { return message_; }

 private:
  std::string kind_;
  std::string message_;
};

[[noreturn]] inline void fail(const char* kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, const char* kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace resa
