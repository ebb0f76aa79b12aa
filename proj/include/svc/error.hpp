#pragma once

#include <stdexcept>
#include <string>

namespace svc {

/// Bad argument shape, range, or value.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or missing on-disk data. Carries the offending path.
class LoadError : public std::runtime_error {
 public:
  LoadError(const std::string& path, const std::string& what)
      : std::runtime_error(what + ": " + path), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Unmet stage prerequisite or inconsistent configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

inline std::string dims_string(int h, int w) { return std::to_string(h) + "x" + std::to_string(w); }

}  // namespace svc
