#include "qlight/config.hpp"
#include "qlight/error.hpp"
#include "qlight/harness.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <thread>

namespace {

// 2: configuration, 3: statistical precondition, 1: anything else.
int exit_code(const qlight::Error& e) {
  using qlight::ErrorCode;
  switch (e.code()) {
    case ErrorCode::config:
      return 2;
    case ErrorCode::no_dip_found:
    case ErrorCode::non_convergence:
    case ErrorCode::rank_deficient:
    case ErrorCode::peak_not_found:
    case ErrorCode::zero_accidentals:
    case ErrorCode::zero_denominator:
    case ErrorCode::insufficient_coverage:
      return 3;
    default:
      return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation and analysis harness for a microring photon-pair source"};
  app.set_version_flag("--version", QLIGHT_VERSION);
  app.require_subcommand(1);

  std::string config_path;
  qlight::RunOptions opts;
  std::uint64_t seed = 0;
  double duration = 0.0, power = 0.0;
  int channel = 0;
  unsigned threads = 0;
  std::string trace, resonances;

  for (const auto& name : qlight::command_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opts.out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "override acquisition.seed");
    sub->add_option("--duration", duration, "per-point acquisition time, s")->check(CLI::PositiveNumber);
    sub->add_option("--power", power, "on-chip pump power, mW")->check(CLI::NonNegativeNumber);
    sub->add_option("--channel", channel, "channel-pair index (2..8)")->check(CLI::Range(2, 8));
    sub->add_option("--threads", threads, "worker threads (default: hardware)");
    sub->add_flag("--emit-tags", opts.emit_tags, "also write raw .qtg streams");
    if (name == "dispersion") {
      sub->add_option("--trace", trace, "fit a measured trace (frequency_hz,transmission)")->check(CLI::ExistingFile);
      sub->add_option("--resonances", resonances, "fit measured lines (mu,frequency_hz)")->check(CLI::ExistingFile);
    }
  }

  CLI11_PARSE(app, argc, argv);
  const CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--seed")) opts.seed = seed;
  if (sub->count("--duration")) opts.duration_s = duration;
  if (sub->count("--power")) opts.power_mw = power;
  if (sub->count("--channel")) opts.channel = channel;
  if (!trace.empty()) opts.trace_csv = trace;
  if (!resonances.empty()) opts.resonances_csv = resonances;
  opts.threads = threads > 0 ? threads : std::max(1u, std::thread::hardware_concurrency());
  opts.config_path = config_path;

  try {
    const auto config = qlight::load_config(config_path);
    const auto result = qlight::run_command(sub->get_name(), config, opts);
    std::cout << result.summary.dump(2) << '\n';
    return 0;
  } catch (const qlight::Error& e) {
    std::cerr << "qlight: " << qlight::to_string(e.code()) << ": " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "qlight: " << e.what() << '\n';
    return 1;
  }
}
