#pragma once

#include <stdexcept>
#include <string>

namespace diffmg {

/// Dimension mismatch in a numeric kernel.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or inconsistent data files (bad ids, bad fields). Messages
/// name the offending file and line where applicable.
class IngestError : public std::runtime_error {
 public:
  explicit IngestError(const std::string& what) : std::runtime_error(what) {}
};

/// Violations of the declared node-type / edge-type schema.
class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid user-supplied configuration (flags, synth configs, K < 1, ...).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid serialized artifacts (meta graph JSON and friends).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Enumeration or brute force refused because the space exceeds the cap.
/// The message always contains the exact cardinality.
class CapExceededError : public std::runtime_error {
 public:
  CapExceededError(const std::string& what, std::string cardinality)
      : std::runtime_error(what), cardinality_(std::move(cardinality)) {}

  const std::string& cardinality() const { return cardinality_; }

 private:
  std::string cardinality_;
};

}  // namespace diffmg
