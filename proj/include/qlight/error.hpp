#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace qlight {

enum class ErrorCode {
  invalid_argument,
  out_of_range,
  unsorted_stream,
  no_dip_found,
  non_convergence,
  rank_deficient,
  peak_not_found,
  zero_accidentals,
  zero_denominator,
  insufficient_coverage,
  memory_cap,
  config,
  io,
};

const char* to_string(ErrorCode code) noexcept;

/// Library error. The code lets callers (and the CLI exit-code mapping)
/// distinguish statistical preconditions from configuration and I/O faults.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Configuration validation failure. `path` points into the config tree,
/// e.g. "detectors.signal.efficiency".
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& message)
      : Error(ErrorCode::config, path + ": " + message), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Raised when CAR is requested but every accidental window is empty.
/// Carries the peak-window count so callers can still report it.
class ZeroAccidentalsError : public Error {
 public:
  explicit ZeroAccidentalsError(long long coincidences)
      : Error(ErrorCode::zero_accidentals,
              "no accidental coincidences; CAR undefined (peak count " +
                  std::to_string(coincidences) + ")"),
        coincidences_(coincidences) {}

  long long coincidences() const noexcept { return coincidences_; }

 private:
  long long coincidences_;
};

}  // namespace qlight
