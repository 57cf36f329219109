#pragma once

#include <stdexcept>
#include <string>

namespace invrisk {

// Base class for every failure the toolkit raises on purpose. The CLI maps
// the three subclasses to distinct process exit codes, so library code must
// pick the subclass that matches what actually went wrong.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration or invalid arguments: bad shapes, out-of-range
// parameters, unknown enum strings, malformed config documents.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

// A numeric procedure failed to produce a trustworthy result (SVD did not
// converge, objective became non-finite, degenerate statistics input).
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(what) {}
};

// Filesystem and serialization failures: unreadable paths, bad magic bytes,
// truncated payloads, dimension overflow in tensor headers.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

}  // namespace invrisk
