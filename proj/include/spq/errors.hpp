#pragma once

#include <stdexcept>
#include <string>

namespace spq {

/// Invalid or inconsistent configuration values (CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An argument outside the mathematical domain of a model (CLI exit code 3).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// The simulator produced an invalid state (CLI exit code 4). `dump` carries
/// a human-readable snapshot of the offending state.
class SimFault : public std::runtime_error {
 public:
  SimFault(const std::string& what, std::string dump)
      : std::runtime_error(what), dump_(std::move(dump)) {}

  const std::string& dump() const noexcept { return dump_; }

 private:
  std::string dump_;
};

}  // namespace spq
