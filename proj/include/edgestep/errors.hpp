#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace edgestep {

/// Argument outside the mathematical domain of an operation (t < 1, gamma out of range, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// The operation is defined only for gamma in [0, 1).
class UnsupportedRegime : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A (t, d) cell or checkpoint was requested that a table does not hold.
class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Malformed configuration text, spec text or command line.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operational failure (I/O, corrupted input files, lock contention).
class OperationalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure inside one replica of an ensemble; carries the replica index.
class ReplicaError : public std::runtime_error {
 public:
  ReplicaError(std::size_t replica, const std::string& what)
      : std::runtime_error("replica " + std::to_string(replica) + ": " + what), replica_(replica) {}

  std::size_t replica() const noexcept { return replica_; }

 private:
  std::size_t replica_;
};

}  // namespace edgestep
