#pragma once

// Experiment commands. Each writes `<out>/<command>/...` plus manifest.json
// and returns its summary.

#include "qlight/coincidence.hpp"
#include "qlight/config.hpp"
#include "qlight/inference.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace qlight {

struct RunOptions {
  std::filesystem::path out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<double> duration_s;  // per-point acquisition time
  std::optional<double> power_mw;    // single-power commands only
  std::optional<int> channel;
  unsigned threads = 1;
  bool emit_tags = false;
  std::optional<std::filesystem::path> trace_csv;       // dispersion: fit this trace
  std::optional<std::filesystem::path> resonances_csv;  // dispersion: fit these lines
  std::string config_path;                              // recorded in the manifest
};

struct RunResult {
  nlohmann::json summary;
  std::filesystem::path directory;
  std::vector<std::string> artifacts;  // relative to directory
};

RunResult cmd_dispersion(const ExperimentConfig& config, const RunOptions& options);
RunResult cmd_pairs(const ExperimentConfig& config, const RunOptions& options);
RunResult cmd_spectrum(const ExperimentConfig& config, const RunOptions& options);
RunResult cmd_multichannel(const ExperimentConfig& config, const RunOptions& options);
RunResult cmd_franson(const ExperimentConfig& config, const RunOptions& options);
RunResult cmd_hbt(const ExperimentConfig& config, const RunOptions& options);
RunResult cmd_table1(const ExperimentConfig& config, const RunOptions& options);

const std::vector<std::string>& command_names();

/// Dispatches by name; throws Error(invalid_argument) for unknown commands.
RunResult run_command(const std::string& name, const ExperimentConfig& config, const RunOptions& options);

/// Spearman rank correlation (average ranks for ties).
double spearman(std::span<const double> x, std::span<const double> y);

// Building blocks shared by the commands, exposed for tests and bindings.

struct PairMeasurement {
  double power_mw = 0.0;
  std::uint64_t signal_counts = 0;
  std::uint64_t idler_counts = 0;
  double duration_s = 0.0;
  Picoseconds peak_delay_ps = 0;
  std::optional<CarResult> car;
  CoincidenceHistogram histogram;
};

PairMeasurement measure_pairs(const ExperimentConfig& config, int channel, double power_mw, double duration_s,
                              const ArmLoss& loss, std::uint64_t seed, const std::string& label);

struct FransonMeasurement {
  FringeScan scan;
  std::vector<double> accidentals;  // per point, mean of far windows
  std::vector<CoincidenceHistogram> histograms;
  std::vector<std::uint64_t> satellite_early;
  std::vector<std::uint64_t> satellite_late;
  Picoseconds central_delay_ps = 0;
};

FransonMeasurement measure_franson(const ExperimentConfig& config, int channel, double power_mw, double dwell_s,
                                   std::uint64_t seed, unsigned threads, bool keep_histograms = true);

struct UnheraldedMeasurement {
  CoincidenceHistogram histogram;
  std::vector<G2Point> g2;
  G2Result fit;
  std::uint64_t arm1_tags = 0;
  std::uint64_t arm2_tags = 0;
};

/// HBT of the idler arm, acquired in chunks so memory stays bounded.
UnheraldedMeasurement measure_unheralded(const ExperimentConfig& config, int channel, double power_mw,
                                         double duration_s, std::uint64_t seed, unsigned threads);

struct HeraldedMeasurement {
  ThreefoldCounts counts;
  HeraldedG2Result g2h;
  Picoseconds arm1_delay_ps = 0;
  Picoseconds arm2_delay_ps = 0;
};

HeraldedMeasurement measure_heralded(const ExperimentConfig& config, int channel, double power_mw,
                                     double duration_s, std::uint64_t seed, unsigned threads);

}  // namespace qlight
