#include "qlight/coincidence.hpp"
#include "qlight/config.hpp"
#include "qlight/error.hpp"
#include "qlight/harness.hpp"
#include "qlight/inference.hpp"
#include "qlight/source_sim.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace qlight;

namespace {

using TagArray = py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>;

std::span<const Picoseconds> view(const TagArray& a) {
  if (a.ndim() != 1) throw std::invalid_argument("expected a 1-D array of picosecond tags");
  return {a.data(), static_cast<std::size_t>(a.shape(0))};
}

py::array_t<std::int64_t> to_array(std::span<const Picoseconds> tags) {
  py::array_t<std::int64_t> out(static_cast<py::ssize_t>(tags.size()));
  std::copy(tags.begin(), tags.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Microring photon-pair simulation and coincidence analysis";
  m.attr("__version__") = QLIGHT_VERSION;

  static py::exception<Error> error(m, "QlightError");
  static py::exception<ConfigError> config_error(m, "ConfigError", error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const Error& e) {
      py::set_error(error, (std::string(to_string(e.code())) + ": " + e.what()).c_str());
    }
  });

  m.def("command_names", &command_names);

  m.def(
      "run_command_json",
      [](const std::string& name, const std::filesystem::path& config, const std::filesystem::path& out,
         std::optional<std::uint64_t> seed, std::optional<double> duration_s, std::optional<double> power_mw,
         std::optional<int> channel, unsigned threads, bool emit_tags) {
        const auto cfg = load_config(config);
        RunOptions o;
        o.out_dir = out;
        o.seed = seed;
        o.duration_s = duration_s;
        o.power_mw = power_mw;
        o.channel = channel;
        o.threads = std::max(1u, threads);
        o.emit_tags = emit_tags;
        o.config_path = config.string();
        py::gil_scoped_release release;
        return run_command(name, cfg, o).summary.dump();
      },
      py::arg("name"), py::arg("config"), py::arg("out"), py::arg("seed") = py::none(),
      py::arg("duration_s") = py::none(), py::arg("power_mw") = py::none(), py::arg("channel") = py::none(),
      py::arg("threads") = 1, py::arg("emit_tags") = false);

  m.def("config_hash", [](const std::filesystem::path& config) { return config_hash(load_config(config).document); });

  m.def(
      "cross_correlogram",
      [](const TagArray& a, const TagArray& b, Picoseconds bin, Picoseconds tmin, Picoseconds tmax, unsigned threads) {
        const auto h = cross_correlogram(view(a), view(b), bin, tmin, tmax, threads);
        py::array_t<std::uint64_t> counts(static_cast<py::ssize_t>(h.size()));
        std::copy(h.counts.begin(), h.counts.end(), counts.mutable_data());
        return counts;
      },
      py::arg("a"), py::arg("b"), py::arg("bin_width_ps"), py::arg("tau_min_ps"), py::arg("tau_max_ps"),
      py::arg("threads") = 1, "Counts of b - a over half-open bins.");

  m.def(
      "coincidences_in_window",
      [](const TagArray& a, const TagArray& b, Picoseconds delay, Picoseconds width) {
        return coincidences_in_window(view(a), view(b), delay, width);
      },
      py::arg("a"), py::arg("b"), py::arg("delay_ps"), py::arg("width_ps"));

  m.def(
      "threefold_coincidences",
      [](const TagArray& h, const TagArray& a1, const TagArray& a2, Picoseconds width, Picoseconds d1, Picoseconds d2) {
        const auto r = threefold_coincidences(view(h), view(a1), view(a2), width, d1, d2);
        return py::dict(py::arg("herald_singles") = r.herald_singles, py::arg("herald_arm1") = r.herald_arm1,
                        py::arg("herald_arm2") = r.herald_arm2, py::arg("triples") = r.triples);
      },
      py::arg("herald"), py::arg("arm1"), py::arg("arm2"), py::arg("width_ps"), py::arg("arm1_delay_ps") = 0,
      py::arg("arm2_delay_ps") = 0);

  m.def(
      "poisson_stream",
      [](double rate_hz, double duration_s, std::uint64_t seed) {
        return to_array(poisson_stream("poisson", rate_hz, duration_s, seed).tags());
      },
      py::arg("rate_hz"), py::arg("duration_s"), py::arg("seed"));

  m.def(
      "pair_streams",
      [](const std::filesystem::path& config, int channel, double power_mw, double duration_s, std::uint64_t seed) {
        const auto cfg = load_config(config);
        SourceConfig s = cfg.source;
        s.pump_power_mw = power_mw;
        const auto st = generate_pair_streams(s, cfg.detector("signal"), cfg.detector("idler"), channel, duration_s, seed);
        return py::make_tuple(to_array(st.signal.tags()), to_array(st.idler.tags()));
      },
      py::arg("config"), py::arg("channel"), py::arg("power_mw"), py::arg("duration_s"), py::arg("seed"));

  m.def("effective_modes", &effective_modes, py::arg("g2_zero"));
}
