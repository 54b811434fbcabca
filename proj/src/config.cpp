#include "qlight/config.hpp"

#include "qlight/error.hpp"
#include "qlight/rng.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>

namespace qlight {

namespace {

using nlohmann::json;

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

// Typed, path-aware view of one JSON object. finish() rejects keys that were
// never read, so typos surface as errors instead of silently using defaults.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string at(const std::string& key) const { return join(path_, key); }

  double number(const std::string& key, double fallback, const std::function<const char*(double)>& check = {}) {
    used_.insert(key);
    if (!j_.contains(key)) return fallback;
    return checked_number(j_.at(key), at(key), check);
  }

  double required_number(const std::string& key, const std::function<const char*(double)>& check = {}) {
    if (!j_.contains(key)) throw ConfigError(at(key), "required field is missing");
    return number(key, 0.0, check);
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback, std::int64_t lo, std::int64_t hi) {
    used_.insert(key);
    if (!j_.contains(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(at(key), "expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < lo || x > hi) {
      throw ConfigError(at(key), "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return x;
  }

  bool boolean(const std::string& key, bool fallback) {
    used_.insert(key);
    if (!j_.contains(key)) return fallback;
    if (!j_.at(key).is_boolean()) throw ConfigError(at(key), "expected true or false");
    return j_.at(key).get<bool>();
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback,
                              const std::function<const char*(double)>& check = {}) {
    used_.insert(key);
    if (!j_.contains(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_array() || v.empty()) throw ConfigError(at(key), "expected a non-empty array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(checked_number(v[i], at(key) + "[" + std::to_string(i) + "]", check));
    return out;
  }

  std::vector<int> integers(const std::string& key, std::vector<int> fallback) {
    used_.insert(key);
    if (!j_.contains(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_array() || v.empty()) throw ConfigError(at(key), "expected a non-empty array of integers");
    std::vector<int> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number_integer()) throw ConfigError(at(key) + "[" + std::to_string(i) + "]", "expected an integer");
      out.push_back(v[i].get<int>());
    }
    return out;
  }

  const json* child(const std::string& key) {
    used_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError(at(it.key()), "unknown field");
    }
  }

 private:
  static double checked_number(const json& v, const std::string& path, const std::function<const char*(double)>& check) {
    if (!v.is_number()) throw ConfigError(path, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(path, "must be finite");
    if (check) {
      if (const char* msg = check(x)) throw ConfigError(path, msg);
    }
    return x;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

const char* positive(double x) { return x > 0.0 ? nullptr : "must be > 0"; }
const char* non_negative(double x) { return x >= 0.0 ? nullptr : "must be >= 0"; }
const char* unit_interval(double x) { return x >= 0.0 && x <= 1.0 ? nullptr : "must be in [0, 1]"; }
const char* open_unit(double x) { return x > 0.0 && x <= 1.0 ? nullptr : "must be in (0, 1]"; }

template <class Fn>
void rethrow_as_config(const std::string& path, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(path, e.what());
  }
}

ResonatorSpec parse_resonator(const json* j) {
  ResonatorSpec r;
  if (!j) return r;
  Node n(*j, "resonator");
  if (n.has("center_wavelength_nm") && n.has("center_frequency_hz")) {
    throw ConfigError("resonator", "give center_wavelength_nm or center_frequency_hz, not both");
  }
  if (n.has("center_wavelength_nm")) {
    r.center_frequency_hz = wavelength_nm_to_hz(n.number("center_wavelength_nm", 1550.1, positive));
  }
  r.center_frequency_hz = n.number("center_frequency_hz", r.center_frequency_hz, positive);
  r.fsr_hz = n.number("fsr_hz", r.fsr_hz, positive);
  r.q_loaded = n.number("q_loaded", r.q_loaded, positive);
  r.extinction = n.number("extinction", r.extinction, open_unit);
  r.radius_m = n.number("radius_m", r.radius_m, positive);
  if (n.has("beta2_s2_per_m") && n.has("d2_rad_per_s")) {
    throw ConfigError("resonator", "give beta2_s2_per_m or d2_rad_per_s, not both");
  }
  if (n.has("beta2_s2_per_m")) {
    r.d2 = d2_from_beta2(n.number("beta2_s2_per_m", 0.0), r.d1(), r.group_index());
  }
  r.d2 = n.number("d2_rad_per_s", r.d2);
  r.d3 = n.number("d3_rad_per_s", r.d3);
  n.finish();
  rethrow_as_config("resonator", [&] { r.validate(); });
  return r;
}

DetectorSpec parse_detector(const json& j, const std::string& path) {
  Node n(j, path);
  DetectorSpec d;
  d.efficiency = n.number("efficiency", d.efficiency, unit_interval);
  d.dark_rate_hz = n.number("dark_rate_hz", d.dark_rate_hz, non_negative);
  d.jitter_sigma_s = n.number("jitter_sigma_s", d.jitter_sigma_s, non_negative);
  d.dead_time_s = n.number("dead_time_s", d.dead_time_s, non_negative);
  d.tdc_resolution_s = n.number("tdc_resolution_s", d.tdc_resolution_s, positive);
  n.finish();
  return d;
}

ArmLoss parse_arm_loss(const json* j, const std::string& path) {
  ArmLoss l;
  if (!j) return l;
  Node n(*j, path);
  l.signal_db = n.number("signal_db", 0.0, non_negative);
  l.idler_db = n.number("idler_db", 0.0, non_negative);
  n.finish();
  return l;
}

void parse_source(const json* j, const json* plan_json, const ResonatorSpec& res, SourceConfig& s) {
  std::vector<int> indices{2, 3, 4, 5, 6, 7, 8};
  double width_hz = 100e9;
  bool labels = true;
  if (plan_json) {
    Node p(*plan_json, "channel_plan");
    indices = p.integers("indices", indices);
    width_hz = p.number("width_hz", width_hz, positive);
    labels = p.boolean("nominal_labels", labels);
    p.finish();
  }
  rethrow_as_config("channel_plan", [&] {
    s.channel_plan = build_channel_plan(res, indices, width_hz, labels ? measured_pair_wavelengths()
                                                                       : std::map<int, std::pair<double, double>>{});
  });

  s.pair_correlation_time_s = res.photon_lifetime_s();
  if (!j) return;
  Node n(*j, "source");
  s.brightness_hz_per_mw2 = n.number("brightness_hz_per_mw2", s.brightness_hz_per_mw2, non_negative);
  s.pump_power_mw = n.number("pump_power_mw", s.pump_power_mw, non_negative);
  s.noise_linear_hz_per_mw = n.number("noise_linear_hz_per_mw", s.noise_linear_hz_per_mw, non_negative);
  if (const json* per = n.child("channel_noise_linear")) {
    Node c(*per, "source.channel_noise_linear");
    for (auto it = per->begin(); it != per->end(); ++it) {
      int ch = 0;
      try {
        std::size_t pos = 0;
        ch = std::stoi(it.key(), &pos);
        if (pos != it.key().size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ConfigError(c.at(it.key()), "keys must be channel indices");
      }
      if (!s.channel_plan.contains(ch)) throw ConfigError(c.at(it.key()), "channel not in channel_plan");
      s.channel_noise_linear[ch] = c.number(it.key(), 0.0, non_negative);
    }
    c.finish();
  }
  s.noise_quadratic_share = n.number("noise_quadratic_share", s.noise_quadratic_share, open_unit);
  if (const json* peaks = n.child("raman_peaks")) {
    if (!peaks->is_array()) throw ConfigError("source.raman_peaks", "expected an array");
    for (std::size_t i = 0; i < peaks->size(); ++i) {
      Node p((*peaks)[i], "source.raman_peaks[" + std::to_string(i) + "]");
      RamanPeak r;
      r.center_nm = p.required_number("center_nm", positive);
      r.fwhm_nm = p.number("fwhm_nm", r.fwhm_nm, positive);
      r.amplitude_hz_per_mw = p.number("amplitude_hz_per_mw", 0.0, non_negative);
      p.finish();
      s.raman_peaks.push_back(r);
    }
  }
  s.pair_correlation_time_s = n.number("pair_correlation_time_s", s.pair_correlation_time_s, positive);
  s.coupling_loss_total_db = n.number("coupling_loss_total_db", s.coupling_loss_total_db, non_negative);
  s.filter_insertion_db = n.number("filter_insertion_db", s.filter_insertion_db, non_negative);
  s.extra_loss_db = n.number("extra_loss_db", s.extra_loss_db, non_negative);
  s.reference_detector_efficiency = n.number("reference_detector_efficiency", s.reference_detector_efficiency, open_unit);
  s.signal_delay_ps = n.number("signal_delay_ps", s.signal_delay_ps);
  s.idler_delay_ps = n.number("idler_delay_ps", s.idler_delay_ps);
  s.thermal_emission = n.boolean("thermal_emission", s.thermal_emission);
  s.max_tags = n.number("max_tags", s.max_tags, positive);
  n.finish();
}

void check_channel(const SourceConfig& s, int ch, const std::string& path) {
  if (!s.channel_plan.contains(ch)) throw ConfigError(path, "channel " + std::to_string(ch) + " is not in channel_plan");
}

}  // namespace

const DetectorSpec& ExperimentConfig::detector(const std::string& name) const {
  const auto it = detectors.find(name);
  if (it == detectors.end()) throw ConfigError("detectors." + name, "detector is not configured");
  return it->second;
}

ExperimentConfig parse_config(const json& document) {
  ExperimentConfig c;
  c.document = document;
  Node root(document, "");

  c.resonator = parse_resonator(root.child("resonator"));
  parse_source(root.child("source"), root.child("channel_plan"), c.resonator, c.source);

  if (const json* dets = root.child("detectors")) {
    if (!dets->is_object()) throw ConfigError("detectors", "expected an object");
    for (auto it = dets->begin(); it != dets->end(); ++it) {
      c.detectors[it.key()] = parse_detector(it.value(), "detectors." + it.key());
    }
  }
  for (const char* role : kDetectorRoles) c.detectors.try_emplace(role, DetectorSpec{});

  if (const json* u = root.child("umi")) {
    Node n(*u, "umi");
    c.umi.delay_s = n.number("delay_s", c.umi.delay_s, positive);
    c.umi.phase_rad = n.number("phase_rad", c.umi.phase_rad);
    c.umi.two_photon_visibility = n.number("two_photon_visibility", c.umi.two_photon_visibility, unit_interval);
    n.finish();
  }
  rethrow_as_config("umi", [&] { c.umi.validate(c.source.pair_correlation_time_s); });

  const json* acq = root.child("acquisition");
  if (!acq) throw ConfigError("acquisition.seed", "required field is missing");
  {
    Node n(*acq, "acquisition");
    c.acquisition.duration_s = n.number("duration_s", c.acquisition.duration_s, positive);
    if (!n.has("seed")) throw ConfigError("acquisition.seed", "required field is missing");
    n.child("seed");
    const json& seed = acq->at("seed");
    if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0)) {
      throw ConfigError("acquisition.seed", "expected a non-negative integer");
    }
    c.acquisition.seed = seed.get<std::uint64_t>();
    const std::int64_t big = 1'000'000'000'000;
    c.acquisition.coincidence_window_ps = n.integer("coincidence_window_ps", c.acquisition.coincidence_window_ps, 1, big);
    c.acquisition.histogram_bin_ps = n.integer("histogram_bin_ps", c.acquisition.histogram_bin_ps, 1, big);
    c.acquisition.histogram_half_range_ps =
        n.integer("histogram_half_range_ps", c.acquisition.histogram_half_range_ps, 1, big);
    c.acquisition.calibration_half_range_ps =
        n.integer("calibration_half_range_ps", c.acquisition.calibration_half_range_ps, 1, big);
    c.acquisition.calibration_bin_ps = n.integer("calibration_bin_ps", c.acquisition.calibration_bin_ps, 1, big);
    n.finish();
    if (c.acquisition.histogram_half_range_ps % c.acquisition.histogram_bin_ps != 0) {
      throw ConfigError("acquisition.histogram_half_range_ps", "must be a multiple of histogram_bin_ps");
    }
    if (c.acquisition.calibration_half_range_ps % c.acquisition.calibration_bin_ps != 0) {
      throw ConfigError("acquisition.calibration_half_range_ps", "must be a multiple of calibration_bin_ps");
    }
  }

  if (const json* d = root.child("dispersion")) {
    Node n(*d, "dispersion");
    c.dispersion.mu_min = static_cast<int>(n.integer("mu_min", c.dispersion.mu_min, -1000, 1000));
    c.dispersion.mu_max = static_cast<int>(n.integer("mu_max", c.dispersion.mu_max, -1000, 1000));
    c.dispersion.points_per_resonance =
        static_cast<int>(n.integer("points_per_resonance", c.dispersion.points_per_resonance, 20, 1'000'000));
    c.dispersion.span_linewidths = n.number("span_linewidths", c.dispersion.span_linewidths,
                                            [](double x) { return x >= 3.0 ? nullptr : "must be >= 3"; });
    c.dispersion.trace_noise = n.number("trace_noise", c.dispersion.trace_noise, non_negative);
    n.finish();
    if (c.dispersion.mu_min > 0 || c.dispersion.mu_max < 0) {
      throw ConfigError("dispersion", "mode range must include mu = 0");
    }
    if (c.dispersion.mu_max - c.dispersion.mu_min + 1 < 7) throw ConfigError("dispersion", "need >= 7 modes");
  }

  if (const json* p = root.child("pairs")) {
    Node n(*p, "pairs");
    c.pairs.channel = static_cast<int>(n.integer("channel", c.pairs.channel, -1000, 1000));
    c.pairs.powers_mw = n.numbers("powers_mw", c.pairs.powers_mw, non_negative);
    c.pairs.duration_s = n.number("duration_s", c.pairs.duration_s, positive);
    n.finish();
  }
  check_channel(c.source, c.pairs.channel, "pairs.channel");

  if (const json* p = root.child("spectrum")) {
    Node n(*p, "spectrum");
    c.spectrum.min_nm = n.number("min_nm", c.spectrum.min_nm, positive);
    c.spectrum.max_nm = n.number("max_nm", c.spectrum.max_nm, positive);
    c.spectrum.step_nm = n.number("step_nm", c.spectrum.step_nm, positive);
    c.spectrum.power_mw = n.number("power_mw", c.spectrum.power_mw, non_negative);
    n.finish();
    if (c.spectrum.min_nm < 1480.0 || c.spectrum.max_nm > 1620.0 || c.spectrum.min_nm >= c.spectrum.max_nm) {
      throw ConfigError("spectrum", "wavelength grid must lie within [1480, 1620] nm");
    }
  }

  if (const json* p = root.child("multichannel")) {
    Node n(*p, "multichannel");
    c.multichannel.channels = n.integers("channels", c.multichannel.channels);
    c.multichannel.power_mw = n.number("power_mw", c.multichannel.power_mw, non_negative);
    c.multichannel.duration_s = n.number("duration_s", c.multichannel.duration_s, positive);
    c.multichannel.extra_loss = parse_arm_loss(n.child("extra_loss_db"), "multichannel.extra_loss_db");
    n.finish();
  }
  for (std::size_t i = 0; i < c.multichannel.channels.size(); ++i) {
    check_channel(c.source, c.multichannel.channels[i], "multichannel.channels[" + std::to_string(i) + "]");
  }

  if (const json* p = root.child("franson")) {
    Node n(*p, "franson");
    c.franson.channel = static_cast<int>(n.integer("channel", c.franson.channel, -1000, 1000));
    c.franson.power_mw = n.number("power_mw", c.franson.power_mw, non_negative);
    c.franson.dwell_s = n.number("dwell_s", c.franson.dwell_s, positive);
    c.franson.phase_points = static_cast<int>(n.integer("phase_points", c.franson.phase_points, 8, 100000));
    c.franson.phase_span_rad = n.number("phase_span_rad", c.franson.phase_span_rad, positive);
    c.franson.extra_loss = parse_arm_loss(n.child("extra_loss_db"), "franson.extra_loss_db");
    c.franson.mc_iterations = static_cast<int>(n.integer("mc_iterations", c.franson.mc_iterations, 2, 10'000'000));
    c.franson.histogram_half_range_ps =
        n.integer("histogram_half_range_ps", c.franson.histogram_half_range_ps, 1, 1'000'000'000);
    if (const json* l = n.child("laser")) {
      Node ln(*l, "franson.laser");
      c.franson.laser.counts_per_point = ln.number("counts_per_point", c.franson.laser.counts_per_point, positive);
      c.franson.laser.visibility = ln.number("visibility", c.franson.laser.visibility, unit_interval);
      c.franson.laser.phase_rad = ln.number("phase_rad", c.franson.laser.phase_rad);
      ln.finish();
    }
    n.finish();
    if (c.franson.histogram_half_range_ps % c.acquisition.histogram_bin_ps != 0) {
      throw ConfigError("franson.histogram_half_range_ps", "must be a multiple of acquisition.histogram_bin_ps");
    }
  }
  check_channel(c.source, c.franson.channel, "franson.channel");

  if (const json* p = root.child("hbt")) {
    Node n(*p, "hbt");
    c.hbt.channel = static_cast<int>(n.integer("channel", c.hbt.channel, -1000, 1000));
    c.hbt.power_mw = n.number("power_mw", c.hbt.power_mw, non_negative);
    c.hbt.heralded_duration_s = n.number("heralded_duration_s", c.hbt.heralded_duration_s, positive);
    c.hbt.sweep_powers_mw = n.numbers("sweep_powers_mw", c.hbt.sweep_powers_mw, positive);
    c.hbt.sweep_duration_s = n.number("sweep_duration_s", c.hbt.sweep_duration_s, positive);
    c.hbt.unheralded_power_mw = n.number("unheralded_power_mw", c.hbt.unheralded_power_mw, positive);
    c.hbt.unheralded_duration_s = n.number("unheralded_duration_s", c.hbt.unheralded_duration_s, positive);
    c.hbt.g2_bin_ps = n.integer("g2_bin_ps", c.hbt.g2_bin_ps, 1, 1'000'000);
    c.hbt.g2_half_range_ps = n.integer("g2_half_range_ps", c.hbt.g2_half_range_ps, 1, 1'000'000'000);
    c.hbt.baseline_inner_ps = n.integer("baseline_inner_ps", c.hbt.baseline_inner_ps, 1, 1'000'000'000);
    c.hbt.extra_loss = parse_arm_loss(n.child("extra_loss_db"), "hbt.extra_loss_db");
    n.finish();
    if (c.hbt.g2_half_range_ps % c.hbt.g2_bin_ps != 0) {
      throw ConfigError("hbt.g2_half_range_ps", "must be a multiple of g2_bin_ps");
    }
    if (c.hbt.baseline_inner_ps >= c.hbt.g2_half_range_ps) {
      throw ConfigError("hbt.baseline_inner_ps", "must be below g2_half_range_ps");
    }
  }
  check_channel(c.source, c.hbt.channel, "hbt.channel");

  if (const json* p = root.child("table1")) {
    Node n(*p, "table1");
    c.table1.channels = n.integers("channels", c.table1.channels);
    c.table1.mc_iterations = static_cast<int>(n.integer("mc_iterations", c.table1.mc_iterations, 2, 10'000'000));
    c.table1.franson_dwell_s = n.number("franson_dwell_s", c.table1.franson_dwell_s, positive);
    c.table1.heralded_duration_s = n.number("heralded_duration_s", c.table1.heralded_duration_s, positive);
    c.table1.unheralded_duration_s = n.number("unheralded_duration_s", c.table1.unheralded_duration_s, positive);
    n.finish();
  }
  for (std::size_t i = 0; i < c.table1.channels.size(); ++i) {
    check_channel(c.source, c.table1.channels[i], "table1.channels[" + std::to_string(i) + "]");
  }

  root.finish();
  rethrow_as_config("source", [&] { c.source.validate(); });
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(doc);
}

std::string config_hash(const json& document) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(document.dump())));
  return buf;
}

}  // namespace qlight
