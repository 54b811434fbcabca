#include "qlight/harness.hpp"

#include "qlight/error.hpp"
#include "qlight/numfmt.hpp"
#include "qlight/parallel.hpp"
#include "qlight/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#ifndef QLIGHT_VERSION
#define QLIGHT_VERSION "0.0.0"
#endif

namespace qlight {

using nlohmann::json;

namespace {

// ------------------------------------------------------------------ plumbing

class Artifacts {
 public:
  Artifacts(const RunOptions& options, const std::string& command)
      : dir_(options.out_dir / command), started_(std::chrono::steady_clock::now()) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw Error(ErrorCode::io, "cannot create " + dir_.string() + ": " + ec.message());
  }

  std::ofstream open(const std::string& name) {
    names_.push_back(name);
    std::ofstream f(dir_ / name, std::ios::binary);
    if (!f) throw Error(ErrorCode::io, "cannot write " + (dir_ / name).string());
    return f;
  }

  void text(const std::string& name, const std::string& content) {
    auto f = open(name);
    f << content;
    if (!f) throw Error(ErrorCode::io, "failed writing " + (dir_ / name).string());
  }

  void write_json(const std::string& name, const json& j) { text(name, j.dump(2) + "\n"); }

  void tags(const std::string& name, std::span<const TimeTagStream> streams) {
    names_.push_back(name);
    write_qtg(dir_ / name, streams);
  }

  RunResult finish(const std::string& command, json summary, const ExperimentConfig& config,
                   const RunOptions& options, std::uint64_t seed) {
    write_json("summary.json", summary);
    std::vector<std::string> sorted = names_;
    std::sort(sorted.begin(), sorted.end());

    json overrides = json::object();
    if (options.duration_s) overrides["duration_s"] = *options.duration_s;
    if (options.power_mw) overrides["power_mw"] = *options.power_mw;
    if (options.channel) overrides["channel"] = *options.channel;
    if (options.seed) overrides["seed"] = *options.seed;
    if (options.emit_tags) overrides["emit_tags"] = true;
    if (options.trace_csv) overrides["trace_csv"] = options.trace_csv->string();
    if (options.resonances_csv) overrides["resonances_csv"] = options.resonances_csv->string();

    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    const std::time_t now = std::time(nullptr);
    char stamp[32] = {};
    std::tm utc{};
    gmtime_r(&now, &utc);
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &utc);

    json manifest;
    manifest["command"] = command;
    manifest["tool_version"] = QLIGHT_VERSION;
    manifest["config_hash"] = config_hash(config.document);
    manifest["config_path"] = options.config_path;
    manifest["seed"] = seed;
    manifest["overrides"] = overrides;
    manifest["artifacts"] = sorted;
    // Wall-clock metadata lives under "runtime" only; everything else is
    // reproducible from the config hash and seed.
    manifest["runtime"] = {{"finished_utc", stamp}, {"elapsed_s", elapsed}, {"threads", options.threads}};
    {
      std::ofstream f(dir_ / "manifest.json", std::ios::binary);
      if (!f) throw Error(ErrorCode::io, "cannot write manifest");
      f << manifest.dump(2) << "\n";
    }

    RunResult r;
    r.summary = std::move(summary);
    r.directory = dir_;
    r.artifacts = std::move(sorted);
    r.artifacts.push_back("manifest.json");
    return r;
  }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> names_;
  std::chrono::steady_clock::time_point started_;
};

std::uint64_t run_seed(const ExperimentConfig& c, const RunOptions& o) { return o.seed.value_or(c.acquisition.seed); }

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

json fit_json(const FitResult& f) {
  json p = json::object();
  json s = json::object();
  for (std::size_t i = 0; i < f.names.size(); ++i) {
    p[f.names[i]] = f.parameters[i];
    s[f.names[i]] = f.sigmas[i];
  }
  return {{"parameters", p}, {"sigmas", s}, {"residual_rms", f.residual_rms}, {"iterations", f.iterations},
          {"converged", f.converged}};
}

json car_json(const CarResult& c) {
  return {{"coincidence_rate_hz", c.coincidence_rate_hz},
          {"accidental_rate_hz", c.accidental_rate_hz},
          {"car", c.car},
          {"car_sigma", c.car_sigma},
          {"window_width_ps", c.window_width_ps},
          {"peak_delay_ps", c.peak_delay_ps},
          {"coincidences", c.coincidences},
          {"accidentals_total", c.accidentals_total},
          {"accidental_windows", c.accidental_windows}};
}

json threefold_json(const ThreefoldCounts& t) {
  return {{"herald_singles", t.herald_singles}, {"herald_arm1", t.herald_arm1}, {"herald_arm2", t.herald_arm2},
          {"triples", t.triples}, {"window_width_ps", t.window_width_ps}, {"duration_s", t.duration_s}};
}

Picoseconds nominal_delay(const SourceConfig& s) { return std::llround(s.idler_delay_ps - s.signal_delay_ps); }

Picoseconds peak_or_nominal(const ExperimentConfig& c, const TimeTagStream& a, const TimeTagStream& b) {
  try {
    return calibrate_peak_delay(a, b, -c.acquisition.calibration_half_range_ps, c.acquisition.calibration_half_range_ps,
                                c.acquisition.calibration_bin_ps);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::peak_not_found) throw;
    return nominal_delay(c.source);
  }
}

SourceConfig source_at(const ExperimentConfig& c, double power_mw) {
  SourceConfig s = c.source;
  s.pump_power_mw = power_mw;
  return s;
}

std::string csv_opt(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

// Chunk count keeping each chunk near 4e6 expected tags.
std::size_t chunk_count(double rate_hz, double duration_s) {
  const double tags = rate_hz * duration_s;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(tags / 4e6)));
}

double expected_rate(const ExperimentConfig& c, const SourceConfig& s, int channel,
                     std::initializer_list<std::pair<const char*, Arm>> dets) {
  double r = 0.0;
  for (const auto& [name, arm] : dets) r += singles_rate(s, c.detector(name), arm, channel, s.pump_power_mw).total();
  return r;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorCode::invalid_argument, "spearman needs paired samples");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxx > 0.0 && syy > 0.0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

// ------------------------------------------------------------ measurements

PairMeasurement measure_pairs(const ExperimentConfig& c, int channel, double power_mw, double duration_s,
                              const ArmLoss& loss, std::uint64_t seed, const std::string& label) {
  const SourceConfig s = source_at(c, power_mw);
  const auto streams = generate_pair_streams(s, c.detector("signal"), c.detector("idler"), channel, duration_s,
                                             derive_seed(seed, label), loss);
  PairMeasurement m;
  m.power_mw = power_mw;
  m.duration_s = duration_s;
  m.signal_counts = streams.signal.size();
  m.idler_counts = streams.idler.size();
  m.peak_delay_ps = peak_or_nominal(c, streams.signal, streams.idler);
  const auto offsets = default_accidental_offsets();
  try {
    m.car = car(streams.signal, streams.idler, m.peak_delay_ps, c.acquisition.coincidence_window_ps, offsets);
  } catch (const ZeroAccidentalsError&) {
  }
  const Picoseconds h = c.acquisition.histogram_half_range_ps;
  m.histogram = cross_correlogram(streams.signal, streams.idler, c.acquisition.histogram_bin_ps, m.peak_delay_ps - h,
                                  m.peak_delay_ps + h);
  return m;
}

FransonMeasurement measure_franson(const ExperimentConfig& c, int channel, double power_mw, double dwell_s,
                                   std::uint64_t seed, unsigned threads, bool keep_histograms) {
  const SourceConfig s = source_at(c, power_mw);
  const auto& f = c.franson;
  const DetectorSpec& sdet = c.detector("signal");
  const DetectorSpec& idet = c.detector("idler");
  const std::string tag = "franson/" + std::to_string(channel) + "/";

  FransonMeasurement m;
  {
    const auto cal = generate_pair_streams(s, sdet, idet, channel, std::min(dwell_s, 2.0),
                                           derive_seed(seed, tag + "calibration"), f.extra_loss);
    m.central_delay_ps = peak_or_nominal(c, cal.signal, cal.idler);
  }
  const auto delay_ps = static_cast<Picoseconds>(std::llround(seconds_to_ps(c.umi.delay_s)));
  const Picoseconds w = c.acquisition.coincidence_window_ps;
  const auto n = static_cast<std::size_t>(f.phase_points);
  m.scan.points.resize(n);
  m.accidentals.resize(n);
  m.satellite_early.resize(n);
  m.satellite_late.resize(n);
  m.histograms.resize(keep_histograms ? n : 0);

  parallel_for(n, threads, [&](std::size_t k) {
    UmiSpec umi = c.umi;
    umi.phase_rad = f.phase_span_rad * static_cast<double>(k) / static_cast<double>(n);
    const auto st = franson_transform(s, sdet, idet, channel, dwell_s, umi, derive_seed(seed, tag + std::to_string(k)),
                                      f.extra_loss);
    FringePoint p;
    p.phase_rad = umi.phase_rad;
    p.coincidences = coincidences_in_window(st.signal, st.idler, m.central_delay_ps, w);
    p.singles_a = st.signal.size();
    p.singles_b = st.idler.size();
    p.dwell_s = dwell_s;
    m.scan.points[k] = p;
    m.satellite_early[k] = coincidences_in_window(st.signal, st.idler, m.central_delay_ps - delay_ps, w);
    m.satellite_late[k] = coincidences_in_window(st.signal, st.idler, m.central_delay_ps + delay_ps, w);
    // Accidentals well clear of the satellites: +-(2..3.8) interferometer delays.
    std::uint64_t acc = 0;
    int windows = 0;
    for (int j = 0; j < 10; ++j) {
      const Picoseconds off = 2 * delay_ps + j * 2 * w;
      acc += coincidences_in_window(st.signal, st.idler, m.central_delay_ps + off, w);
      acc += coincidences_in_window(st.signal, st.idler, m.central_delay_ps - off, w);
      windows += 2;
    }
    m.accidentals[k] = static_cast<double>(acc) / windows;
    if (keep_histograms) {
      const Picoseconds h = f.histogram_half_range_ps;
      m.histograms[k] = cross_correlogram(st.signal, st.idler, c.acquisition.histogram_bin_ps, m.central_delay_ps - h,
                                          m.central_delay_ps + h);
    }
  });
  return m;
}

UnheraldedMeasurement measure_unheralded(const ExperimentConfig& c, int channel, double power_mw, double duration_s,
                                         std::uint64_t seed, unsigned threads) {
  const SourceConfig s = source_at(c, power_mw);
  DetectorSpec blind = c.detector("signal");  // the herald is not used here
  blind.efficiency = 0.0;
  blind.dark_rate_hz = 0.0;
  const DetectorSpec& d1 = c.detector("hbt1");
  const DetectorSpec& d2 = c.detector("hbt2");
  const std::size_t chunks = chunk_count(expected_rate(c, s, channel, {{"hbt1", Arm::idler}, {"hbt2", Arm::idler}}) / 2.0,
                                         duration_s);
  const double chunk_s = duration_s / static_cast<double>(chunks);
  const Picoseconds half = c.hbt.g2_half_range_ps;
  const std::string tag = "hbt/unheralded/" + std::to_string(channel) + "/";

  std::vector<CoincidenceHistogram> parts(chunks);
  std::vector<std::uint64_t> n1(chunks), n2(chunks);
  parallel_for(chunks, threads, [&](std::size_t k) {
    const auto st = generate_heralded_streams(s, blind, d1, d2, channel, chunk_s, derive_seed(seed, tag + std::to_string(k)),
                                              c.hbt.extra_loss);
    parts[k] = cross_correlogram(st.arm1, st.arm2, c.hbt.g2_bin_ps, -half, half);
    n1[k] = st.arm1.size();
    n2[k] = st.arm2.size();
  });

  UnheraldedMeasurement m;
  m.histogram = parts[0];
  for (std::size_t k = 1; k < chunks; ++k) {
    for (std::size_t b = 0; b < m.histogram.size(); ++b) m.histogram.counts[b] += parts[k].counts[b];
    m.histogram.total_pairs_counted += parts[k].total_pairs_counted;
  }
  m.histogram.acquisition_duration_s = duration_s;
  m.arm1_tags = std::accumulate(n1.begin(), n1.end(), std::uint64_t{0});
  m.arm2_tags = std::accumulate(n2.begin(), n2.end(), std::uint64_t{0});

  const Picoseconds inner = c.hbt.baseline_inner_ps;
  const std::vector<std::pair<Picoseconds, Picoseconds>> baseline{{-half, -inner}, {inner, half}};
  m.g2 = g2_histogram_normalize(m.histogram, baseline);
  G2FitOptions opt;
  opt.bin_width_ps = static_cast<double>(c.hbt.g2_bin_ps);
  opt.irf_sigma_ps = seconds_to_ps(std::hypot(d1.jitter_sigma_s, d2.jitter_sigma_s));
  m.fit = fit_g2_double_exponential(m.g2, opt);
  return m;
}

HeraldedMeasurement measure_heralded(const ExperimentConfig& c, int channel, double power_mw, double duration_s,
                                     std::uint64_t seed, unsigned threads) {
  const SourceConfig s = source_at(c, power_mw);
  const DetectorSpec& h = c.detector("signal");
  const DetectorSpec& d1 = c.detector("hbt1");
  const DetectorSpec& d2 = c.detector("hbt2");
  const std::size_t chunks = chunk_count(
      expected_rate(c, s, channel, {{"signal", Arm::signal}, {"hbt1", Arm::idler}}), duration_s);
  const double chunk_s = duration_s / static_cast<double>(chunks);
  const std::string tag = "hbt/heralded/" + std::to_string(channel) + "/";
  const Picoseconds w = c.acquisition.coincidence_window_ps;

  HeraldedMeasurement m;
  std::vector<ThreefoldCounts> parts(chunks);
  {
    const auto st = generate_heralded_streams(s, h, d1, d2, channel, chunk_s, derive_seed(seed, tag + "0"), c.hbt.extra_loss);
    m.arm1_delay_ps = peak_or_nominal(c, st.herald, st.arm1);
    m.arm2_delay_ps = peak_or_nominal(c, st.herald, st.arm2);
    parts[0] = threefold_coincidences(st.herald, st.arm1, st.arm2, w, m.arm1_delay_ps, m.arm2_delay_ps);
  }
  parallel_for(chunks - 1, threads, [&](std::size_t j) {
    const std::size_t k = j + 1;
    const auto st = generate_heralded_streams(s, h, d1, d2, channel, chunk_s, derive_seed(seed, tag + std::to_string(k)),
                                              c.hbt.extra_loss);
    parts[k] = threefold_coincidences(st.herald, st.arm1, st.arm2, w, m.arm1_delay_ps, m.arm2_delay_ps);
  });
  m.counts.window_width_ps = w;
  for (const auto& p : parts) {
    m.counts.herald_singles += p.herald_singles;
    m.counts.herald_arm1 += p.herald_arm1;
    m.counts.herald_arm2 += p.herald_arm2;
    m.counts.triples += p.triples;
  }
  m.counts.duration_s = duration_s;
  m.g2h = heralded_g2(m.counts);
  return m;
}

// ---------------------------------------------------------------- commands

RunResult cmd_dispersion(const ExperimentConfig& c, const RunOptions& o) {
  Artifacts out(o, "dispersion");
  const std::uint64_t seed = run_seed(c, o);
  const ResonatorSpec& spec = c.resonator;
  json summary;
  summary["group_index"] = spec.group_index();

  if (o.trace_csv) {
    const auto trace = read_trace_csv(*o.trace_csv);
    summary["source"] = "trace_csv";
    summary["resonance"] = fit_json(fit_resonance(trace));
    return out.finish("dispersion", summary, c, o, seed);
  }

  std::vector<ModeFrequency> modes;
  if (o.resonances_csv) {
    modes = read_resonances_csv(*o.resonances_csv);
    summary["source"] = "resonances_csv";
  } else {
    summary["source"] = "synthetic";
    const auto grid = resonance_grid(spec, c.dispersion.mu_min, c.dispersion.mu_max);
    const auto npts = static_cast<std::size_t>(c.dispersion.points_per_resonance);
    std::vector<std::vector<TransmissionPoint>> traces(grid.size());
    std::vector<FitResult> fits(grid.size());
    parallel_for(grid.size(), o.threads, [&](std::size_t k) {
      const auto& line = grid[k];
      Rng rng(derive_seed(seed, "dispersion/mu/" + std::to_string(line.mode_index)));
      const double span = c.dispersion.span_linewidths * line.linewidth_fwhm_hz;
      auto& tr = traces[k];
      tr.resize(npts);
      for (std::size_t i = 0; i < npts; ++i) {
        const double f = line.frequency_hz - 0.5 * span + span * static_cast<double>(i) / static_cast<double>(npts - 1);
        tr[i] = {f, transmission(spec, f) + c.dispersion.trace_noise * rng.normal()};
      }
      fits[k] = fit_resonance(tr);
    });

    std::ostringstream trace_csv;
    trace_csv << "frequency_hz,transmission\n";
    std::ostringstream res_csv;
    res_csv << "mu,frequency_hz,fitted_frequency_hz,fitted_frequency_sigma_hz,q_loaded,q_sigma,extinction\n";
    std::vector<double> qs;
    json q_pump;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      for (const auto& p : traces[k]) trace_csv << num(p.frequency_hz) << ',' << num(p.transmission) << '\n';
      const auto& f = fits[k];
      const double nu = f.value("center_frequency_hz");
      res_csv << grid[k].mode_index << ',' << num(grid[k].frequency_hz) << ',' << num(nu) << ','
              << num(f.sigma("center_frequency_hz")) << ',' << num(f.value("q_loaded")) << ',' << num(f.sigma("q_loaded"))
              << ',' << num(f.value("extinction")) << '\n';
      qs.push_back(f.value("q_loaded"));
      modes.push_back({grid[k].mode_index, nu});
      if (grid[k].mode_index == 0) q_pump = fit_json(f);
    }
    out.text("trace.csv", trace_csv.str());
    out.text("resonances.csv", res_csv.str());
    const double q_mean = std::accumulate(qs.begin(), qs.end(), 0.0) / static_cast<double>(qs.size());
    double worst = 0.0;
    for (double q : qs) worst = std::max(worst, std::fabs(q / spec.q_loaded - 1.0));
    summary["q_loaded_configured"] = spec.q_loaded;
    summary["q_loaded_mean"] = q_mean;
    summary["q_loaded_min"] = *std::min_element(qs.begin(), qs.end());
    summary["q_loaded_max"] = *std::max_element(qs.begin(), qs.end());
    summary["q_loaded_max_relative_error"] = worst;
    summary["pump_resonance"] = q_pump;
    summary["resonance_count"] = qs.size();
  }

  const FitResult disp = fit_dispersion(modes, spec.group_index());
  const double nu0 = disp.value("center_frequency_hz");
  const double d1 = disp.value("d1");
  const double d2 = disp.value("d2");
  const double d3 = disp.value("d3");
  std::ostringstream dint;
  dint << "mu,dint_hz,model_dint_hz\n";
  for (const auto& m : modes) {
    const double mu = m.mu;
    const double measured = (m.frequency_hz - nu0) - d1 * mu / kTwoPi;
    const double model = (d2 * mu * mu / 2.0 + d3 * mu * mu * mu / 6.0) / kTwoPi;
    dint << m.mu << ',' << num(measured) << ',' << num(model) << '\n';
  }
  out.text("dint.csv", dint.str());
  summary["dispersion"] = fit_json(disp);
  summary["beta2_s2_per_m"] = disp.value("beta2");
  summary["beta2_sigma_s2_per_m"] = disp.sigma("beta2");
  summary["anomalous"] = d2 > 0.0;
  summary["fsr_hz"] = d1 / kTwoPi;
  return out.finish("dispersion", summary, c, o, seed);
}

RunResult cmd_pairs(const ExperimentConfig& c, const RunOptions& o) {
  Artifacts out(o, "pairs");
  const std::uint64_t seed = run_seed(c, o);
  const int channel = o.channel.value_or(c.pairs.channel);
  const double duration = o.duration_s.value_or(c.pairs.duration_s);
  const auto& powers = c.pairs.powers_mw;

  std::vector<PairMeasurement> ms(powers.size());
  parallel_for(powers.size(), o.threads, [&](std::size_t k) {
    ms[k] = measure_pairs(c, channel, powers[k], duration, {}, seed, "pairs/" + std::to_string(k));
  });

  const double tau_s = c.detector("signal").dead_time_s;
  const double tau_i = c.detector("idler").dead_time_s;
  auto corrected = [](double rate, double tau) { return rate / (1.0 - rate * tau); };
  auto corrected_sigma = [](double sigma, double rate, double tau) { return sigma / std::pow(1.0 - rate * tau, 2); };

  std::ostringstream singles;
  singles << "power_mw,signal_hz,idler_hz,signal_corrected_hz,idler_corrected_hz\n";
  std::ostringstream table;
  table << "power_mw,coincidence_rate_hz,accidental_rate_hz,car,car_sigma\n";
  std::vector<PowerPoint> idler_pts, signal_pts;
  std::vector<double> car_p, car_v;
  json points = json::array();
  for (std::size_t k = 0; k < ms.size(); ++k) {
    const auto& m = ms[k];
    const double rs = static_cast<double>(m.signal_counts) / duration;
    const double ri = static_cast<double>(m.idler_counts) / duration;
    singles << num(m.power_mw) << ',' << num(rs) << ',' << num(ri) << ',' << num(corrected(rs, tau_s)) << ','
            << num(corrected(ri, tau_i)) << '\n';
    signal_pts.push_back({m.power_mw, corrected(rs, tau_s), corrected_sigma(poisson_sigma(m.signal_counts) / duration, rs, tau_s)});
    idler_pts.push_back({m.power_mw, corrected(ri, tau_i), corrected_sigma(poisson_sigma(m.idler_counts) / duration, ri, tau_i)});
    std::optional<double> cr, ar, cv, cs;
    if (m.car) {
      cr = m.car->coincidence_rate_hz;
      ar = m.car->accidental_rate_hz;
      cv = m.car->car;
      cs = m.car->car_sigma;
      car_p.push_back(m.power_mw);
      car_v.push_back(m.car->car);
    }
    table << num(m.power_mw) << ',' << csv_opt(cr) << ',' << csv_opt(ar) << ',' << csv_opt(cv) << ',' << csv_opt(cs) << '\n';
    {
      auto f = out.open("histogram_p" + std::to_string(k) + ".csv");
      write_histogram_csv(f, m.histogram);
    }
    json pj = {{"power_mw", m.power_mw},
               {"signal_counts", m.signal_counts},
               {"idler_counts", m.idler_counts},
               {"signal_rate_hz", rs},
               {"idler_rate_hz", ri},
               {"peak_delay_ps", m.peak_delay_ps}};
    pj["car"] = m.car ? car_json(*m.car) : json(nullptr);
    points.push_back(pj);
  }
  out.text("singles.csv", singles.str());
  out.text("car_vs_power.csv", table.str());

  if (o.emit_tags) {
    for (std::size_t k = 0; k < powers.size(); ++k) {
      const SourceConfig s = source_at(c, powers[k]);
      const auto st = generate_pair_streams(s, c.detector("signal"), c.detector("idler"), channel, duration,
                                            derive_seed(seed, "pairs/" + std::to_string(k)));
      const std::vector<TimeTagStream> both{st.signal, st.idler};
      out.tags("tags_p" + std::to_string(k) + ".qtg", both);
    }
  }

  json summary;
  summary["channel"] = channel;
  summary["duration_s"] = duration;
  summary["points"] = points;
  summary["idler_fit"] = fit_json(fit_power_quadratic(idler_pts));
  summary["signal_fit"] = fit_json(fit_power_quadratic(signal_pts));
  const SinglesRate model = singles_rate(c.source, c.detector("idler"), Arm::idler, channel, 1.0);
  summary["idler_model"] = {{"a", model.linear}, {"b", model.quadratic}, {"c", model.constant}};
  summary["car_spearman"] = car_p.size() >= 2 ? json(spearman(car_p, car_v)) : json(nullptr);
  return out.finish("pairs", summary, c, o, seed);
}

RunResult cmd_spectrum(const ExperimentConfig& c, const RunOptions& o) {
  Artifacts out(o, "spectrum");
  const std::uint64_t seed = run_seed(c, o);
  const double p = o.power_mw.value_or(c.spectrum.power_mw);
  const SourceConfig s = source_at(c, p);
  const auto& sp = c.spectrum;
  const double es = arm_transmittance(s, c.detector("signal"));
  const double ei = arm_transmittance(s, c.detector("idler"));
  const double detected_pairs = pair_rate(s, p) * es * ei;

  struct Band {
    int index;
    double lo, hi, density;
  };
  std::vector<Band> bands;
  json channels = json::array();
  for (const auto& pair : s.channel_plan.pairs) {
    for (const Channel* ch : {&pair.signal, &pair.idler}) {
      const double lam = ch->wavelength_nm();
      const double width_nm = lam * lam * 1e-9 * ch->width_hz / kSpeedOfLight;
      bands.push_back({pair.index, lam - width_nm / 2, lam + width_nm / 2, detected_pairs / width_nm});
    }
    channels.push_back({{"index", pair.index},
                        {"signal_nm", pair.signal.wavelength_nm()},
                        {"idler_nm", pair.idler.wavelength_nm()},
                        {"detected_pair_rate_hz", detected_pairs}});
  }

  const auto n = static_cast<std::size_t>(std::llround((sp.max_nm - sp.min_nm) / sp.step_nm)) + 1;
  std::ostringstream csv;
  csv << "wavelength_nm,correlated_hz_per_nm,noise_hz\n";
  std::vector<double> lam(n), noise(n);
  for (std::size_t k = 0; k < n; ++k) {
    lam[k] = std::min(sp.max_nm, sp.min_nm + sp.step_nm * static_cast<double>(k));
    double corr = 0.0;
    for (const auto& b : bands) {
      if (lam[k] >= b.lo && lam[k] <= b.hi) corr += b.density;
    }
    noise[k] = raman_noise_rate(s, lam[k], p);
    csv << num(lam[k]) << ',' << num(corr) << ',' << num(noise[k]) << '\n';
  }
  out.text("spectrum.csv", csv.str());

  // Peaks: maxima within +-1 nm standing at least 1% above the floor.
  json peaks = json::array();
  const double floor_hz = s.noise_linear_hz_per_mw * p;
  const auto reach = static_cast<std::size_t>(std::ceil(1.0 / sp.step_nm));
  for (std::size_t k = 0; k < n; ++k) {
    if (!(noise[k] > 1.01 * floor_hz)) continue;
    const std::size_t lo = k > reach ? k - reach : 0;
    const std::size_t hi = std::min(n - 1, k + reach);
    bool top = true;
    for (std::size_t j = lo; j <= hi && top; ++j) top = j < k ? noise[j] < noise[k] : noise[j] <= noise[k];
    if (top) peaks.push_back(lam[k]);
  }
  json summary;
  summary["power_mw"] = p;
  summary["channels"] = channels;
  summary["noise_peaks_nm"] = peaks;
  summary["pump_nm"] = s.channel_plan.pump.wavelength_nm();
  return out.finish("spectrum", summary, c, o, seed);
}

RunResult cmd_multichannel(const ExperimentConfig& c, const RunOptions& o) {
  Artifacts out(o, "multichannel");
  const std::uint64_t seed = run_seed(c, o);
  const double p = o.power_mw.value_or(c.multichannel.power_mw);
  const double duration = o.duration_s.value_or(c.multichannel.duration_s);
  std::vector<int> channels = c.multichannel.channels;
  if (o.channel) channels = {*o.channel};

  std::vector<PairMeasurement> ms(channels.size());
  parallel_for(channels.size(), o.threads, [&](std::size_t k) {
    ms[k] = measure_pairs(c, channels[k], p, duration, c.multichannel.extra_loss, seed,
                          "multichannel/" + std::to_string(channels[k]));
  });

  std::ostringstream csv;
  csv << "channel,signal_nm,idler_nm,singles_signal_hz,singles_idler_hz,coincidence_rate_hz,accidental_rate_hz,car,"
         "car_sigma\n";
  json rows = json::array();
  int best = -1;
  double best_car = -1.0;
  for (std::size_t k = 0; k < ms.size(); ++k) {
    const auto [sig, idl] = channel_pair(c.source.channel_plan, channels[k]);
    const auto& m = ms[k];
    const double rs = static_cast<double>(m.signal_counts) / duration;
    const double ri = static_cast<double>(m.idler_counts) / duration;
    std::optional<double> cr, ar, cv, cs;
    if (m.car) {
      cr = m.car->coincidence_rate_hz;
      ar = m.car->accidental_rate_hz;
      cv = m.car->car;
      cs = m.car->car_sigma;
      if (m.car->car > best_car) {
        best_car = m.car->car;
        best = channels[k];
      }
    }
    csv << channels[k] << ',' << fmt2(sig.wavelength_nm()) << ',' << fmt2(idl.wavelength_nm()) << ',' << num(rs) << ','
        << num(ri) << ',' << csv_opt(cr) << ',' << csv_opt(ar) << ',' << csv_opt(cv) << ',' << csv_opt(cs) << '\n';
    json row = {{"channel", channels[k]},
                {"signal_nm", sig.wavelength_nm()},
                {"idler_nm", idl.wavelength_nm()},
                {"singles_signal_hz", rs},
                {"singles_idler_hz", ri}};
    row["car"] = m.car ? car_json(*m.car) : json(nullptr);
    rows.push_back(row);
    auto f = out.open("histogram_ch" + std::to_string(channels[k]) + ".csv");
    write_histogram_csv(f, m.histogram);
  }
  out.text("multichannel.csv", csv.str());
  json summary;
  summary["power_mw"] = p;
  summary["duration_s"] = duration;
  summary["rows"] = rows;
  summary["best_channel"] = best >= 0 ? json(best) : json(nullptr);
  return out.finish("multichannel", summary, c, o, seed);
}

namespace {

// Sinusoidal content of per-point singles at frequency k, with its 1-sigma
// Poisson error.
json flatness(const FringeScan& scan, bool arm_a) {
  json out = json::object();
  for (double k : {1.0, 2.0}) {
    const auto n = static_cast<Eigen::Index>(scan.points.size());
    Eigen::MatrixXd x(n, 3);
    Eigen::VectorXd y(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& p = scan.points[i];
      const double counts = static_cast<double>(arm_a ? p.singles_a : p.singles_b);
      x(i, 0) = 1.0;
      x(i, 1) = std::cos(k * p.phase_rad);
      x(i, 2) = std::sin(k * p.phase_rad);
      y[i] = counts;
      w[i] = 1.0 / std::max(1.0, counts);
    }
    const LinearFit f = weighted_linear_fit(x, y, w);
    const double amp = std::hypot(f.coefficients[1], f.coefficients[2]);
    const double sigma = std::sqrt(0.5 * (f.covariance(1, 1) + f.covariance(2, 2)));
    out[k == 1.0 ? "frequency_1" : "frequency_2"] = {
        {"amplitude_counts", amp}, {"sigma_counts", sigma}, {"flat", amp < 3.0 * sigma}};
  }
  return out;
}

std::vector<PhaseCount> laser_fringe(const FringeScan& scan, const LaserFringeConfig& l, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "franson/laser"));
  std::vector<PhaseCount> pts;
  for (const auto& p : scan.points) {
    const double mean = l.counts_per_point * (1.0 + l.visibility * std::cos(p.phase_rad + l.phase_rad));
    pts.push_back({p.phase_rad, static_cast<double>(rng.poisson(mean))});
  }
  return pts;
}

struct FransonAnalysis {
  VisibilityResult raw;
  VisibilityResult monte_carlo;
  json summary;
};

FransonAnalysis analyze_franson(const ExperimentConfig& c, const FransonMeasurement& m, int mc_iterations,
                                std::uint64_t seed, unsigned threads, const std::string& label) {
  FransonAnalysis a;
  a.raw = fit_fringe(m.scan);
  a.monte_carlo = monte_carlo_visibility(m.scan, mc_iterations, derive_seed(seed, label + "/mc"), threads);
  json j;
  j["visibility"] = a.raw.visibility;
  j["visibility_fit_sigma"] = a.raw.sigma;
  j["phase_offset_rad"] = a.raw.phase_offset;
  j["mean_rate_hz"] = a.raw.mean_rate_hz;
  j["fit"] = fit_json(a.raw.fit);
  j["monte_carlo"] = {{"iterations", mc_iterations},
                      {"visibility_mean", a.monte_carlo.visibility},
                      {"sigma", a.monte_carlo.sigma}};
  try {
    const auto sub = fit_fringe_accidental_subtracted(m.scan, m.accidentals);
    j["visibility_accidental_subtracted"] = {{"visibility", sub.visibility}, {"sigma", sub.sigma}};
  } catch (const Error&) {
    j["visibility_accidental_subtracted"] = nullptr;
  }
  double sa = 0.0, sb = 0.0, dwell = 0.0;
  std::uint64_t central = 0, early = 0, late = 0;
  for (std::size_t k = 0; k < m.scan.points.size(); ++k) {
    const auto& p = m.scan.points[k];
    sa += static_cast<double>(p.singles_a);
    sb += static_cast<double>(p.singles_b);
    dwell += p.dwell_s;
    central += p.coincidences;
    early += m.satellite_early[k];
    late += m.satellite_late[k];
  }
  j["singles"] = {{"signal_mean_hz", sa / dwell},
                  {"idler_mean_hz", sb / dwell},
                  {"signal_flatness", flatness(m.scan, true)},
                  {"idler_flatness", flatness(m.scan, false)}};
  j["peaks"] = {{"central_total", central}, {"satellite_early_total", early}, {"satellite_late_total", late},
                {"central_delay_ps", m.central_delay_ps}};
  a.summary = j;
  (void)c;
  return a;
}

}  // namespace

RunResult cmd_franson(const ExperimentConfig& c, const RunOptions& o) {
  Artifacts out(o, "franson");
  const std::uint64_t seed = run_seed(c, o);
  const int channel = o.channel.value_or(c.franson.channel);
  const double p = o.power_mw.value_or(c.franson.power_mw);
  const double dwell = o.duration_s.value_or(c.franson.dwell_s);

  const FransonMeasurement m = measure_franson(c, channel, p, dwell, seed, o.threads, true);
  const FransonAnalysis a = analyze_franson(c, m, c.franson.mc_iterations, seed, o.threads, "franson");

  {
    auto f = out.open("fringe.csv");
    write_fringe_csv(f, m.scan);
  }
  std::ostringstream sat;
  sat << "phase_rad,central,satellite_early,satellite_late,accidentals_mean\n";
  for (std::size_t k = 0; k < m.scan.points.size(); ++k) {
    sat << num(m.scan.points[k].phase_rad) << ',' << m.scan.points[k].coincidences << ',' << m.satellite_early[k] << ','
        << m.satellite_late[k] << ',' << num(m.accidentals[k]) << '\n';
  }
  out.text("peaks.csv", sat.str());
  for (std::size_t k = 0; k < m.histograms.size(); ++k) {
    auto f = out.open("histogram_phase" + std::to_string(k) + ".csv");
    write_histogram_csv(f, m.histograms[k]);
  }

  const auto laser = laser_fringe(m.scan, c.franson.laser, seed);
  std::ostringstream lcsv;
  lcsv << "phase_rad,counts\n";
  for (const auto& l : laser) lcsv << num(l.phase_rad) << ',' << num(l.counts) << '\n';
  out.text("laser_fringe.csv", lcsv.str());

  json summary = a.summary;
  summary["channel"] = channel;
  summary["power_mw"] = p;
  summary["dwell_s"] = dwell;
  summary["single_photon_fit"] = fit_json(single_photon_fringe_fit(laser));
  std::vector<PhaseCount> two;
  std::vector<double> exposure;
  for (const auto& pt : m.scan.points) {
    two.push_back({pt.phase_rad, static_cast<double>(pt.coincidences)});
    exposure.push_back(pt.dwell_s);
  }
  const FitResult k2 = fit_fringe_frequency(two, exposure);
  const FitResult k1 = fit_fringe_frequency(laser);
  const double ratio = k2.value("k") / k1.value("k");
  const double ratio_sigma =
      ratio * std::hypot(k2.sigma("k") / k2.value("k"), k1.sigma("k") / k1.value("k"));
  summary["frequency"] = {{"two_photon", k2.value("k")},
                          {"two_photon_sigma", k2.sigma("k")},
                          {"single_photon", k1.value("k")},
                          {"single_photon_sigma", k1.sigma("k")},
                          {"ratio", ratio},
                          {"ratio_sigma", ratio_sigma}};

  if (o.emit_tags) {
    const SourceConfig s = source_at(c, p);
    for (std::size_t k = 0; k < m.scan.points.size(); ++k) {
      UmiSpec umi = c.umi;
      umi.phase_rad = m.scan.points[k].phase_rad;
      const auto st = franson_transform(s, c.detector("signal"), c.detector("idler"), channel, dwell, umi,
                                        derive_seed(seed, "franson/" + std::to_string(channel) + "/" + std::to_string(k)),
                                        c.franson.extra_loss);
      const std::vector<TimeTagStream> both{st.signal, st.idler};
      out.tags("tags_phase" + std::to_string(k) + ".qtg", both);
    }
  }
  return out.finish("franson", summary, c, o, seed);
}

RunResult cmd_hbt(const ExperimentConfig& c, const RunOptions& o) {
  Artifacts out(o, "hbt");
  const std::uint64_t seed = run_seed(c, o);
  const int channel = o.channel.value_or(c.hbt.channel);
  const double p = o.power_mw.value_or(c.hbt.power_mw);
  const double heralded_s = o.duration_s.value_or(c.hbt.heralded_duration_s);

  const UnheraldedMeasurement u =
      measure_unheralded(c, channel, c.hbt.unheralded_power_mw, c.hbt.unheralded_duration_s, seed, o.threads);
  {
    auto f = out.open("histogram_unheralded.csv");
    write_histogram_csv(f, u.histogram);
  }
  std::ostringstream g2csv;
  g2csv << "tau_ps,g2\n";
  for (const auto& pt : u.g2) g2csv << num(pt.tau_ps) << ',' << num(pt.g2) << '\n';
  out.text("g2_unheralded.csv", g2csv.str());

  const HeraldedMeasurement h = measure_heralded(c, channel, p, heralded_s, seed, o.threads);

  const auto& sweep = c.hbt.sweep_powers_mw;
  std::vector<HeraldedMeasurement> hs(sweep.size());
  for (std::size_t k = 0; k < sweep.size(); ++k) {
    hs[k] = measure_heralded(c, channel, sweep[k], c.hbt.sweep_duration_s,
                             derive_seed(seed, "hbt/sweep/" + std::to_string(k)), o.threads);
  }
  std::ostringstream scsv;
  scsv << "power_mw,heralding_rate_hz,g2h,g2h_sigma,triples\n";
  json rows = json::array();
  std::vector<double> rates, g2hs;
  for (std::size_t k = 0; k < hs.size(); ++k) {
    const auto& r = hs[k];
    scsv << num(sweep[k]) << ',' << num(r.g2h.heralding_rate_hz) << ',' << num(r.g2h.g2h_zero) << ','
         << num(r.g2h.sigma) << ',' << r.counts.triples << '\n';
    rows.push_back({{"power_mw", sweep[k]},
                    {"heralding_rate_hz", r.g2h.heralding_rate_hz},
                    {"g2h_zero", r.g2h.g2h_zero},
                    {"sigma", r.g2h.sigma},
                    {"counts", threefold_json(r.counts)}});
    rates.push_back(r.g2h.heralding_rate_hz);
    g2hs.push_back(r.g2h.g2h_zero);
  }
  out.text("g2h_vs_heralding.csv", scsv.str());

  json summary;
  summary["channel"] = channel;
  summary["unheralded"] = {{"power_mw", c.hbt.unheralded_power_mw},
                           {"duration_s", c.hbt.unheralded_duration_s},
                           {"g2_zero", u.fit.g2_zero},
                           {"sigma", u.fit.sigma},
                           {"coherence_time_s", u.fit.coherence_time_s},
                           {"effective_modes", u.fit.effective_modes},
                           {"arm1_tags", u.arm1_tags},
                           {"arm2_tags", u.arm2_tags},
                           {"fit", fit_json(u.fit.fit)}};
  summary["heralded"] = {{"power_mw", p},
                         {"duration_s", heralded_s},
                         {"g2h_zero", h.g2h.g2h_zero},
                         {"sigma", h.g2h.sigma},
                         {"heralding_rate_hz", h.g2h.heralding_rate_hz},
                         {"arm1_delay_ps", h.arm1_delay_ps},
                         {"arm2_delay_ps", h.arm2_delay_ps},
                         {"counts", threefold_json(h.counts)}};
  summary["sweep"] = rows;
  summary["sweep_spearman"] = rates.size() >= 2 ? json(spearman(rates, g2hs)) : json(nullptr);
  return out.finish("hbt", summary, c, o, seed);
}

RunResult cmd_table1(const ExperimentConfig& c, const RunOptions& o) {
  Artifacts out(o, "table1");
  const std::uint64_t seed = run_seed(c, o);
  std::vector<int> channels = c.table1.channels;
  if (o.channel) channels = {*o.channel};
  const double dwell = o.duration_s.value_or(c.table1.franson_dwell_s);

  struct Row {
    FransonAnalysis franson;
    UnheraldedMeasurement g2;
    HeraldedMeasurement g2h;
  };
  std::vector<Row> rows(channels.size());
  for (std::size_t k = 0; k < channels.size(); ++k) {
    const int ch = channels[k];
    const std::uint64_t s = derive_seed(seed, "table1/" + std::to_string(ch));
    const auto fm = measure_franson(c, ch, c.franson.power_mw, dwell, s, o.threads, false);
    rows[k].franson = analyze_franson(c, fm, c.table1.mc_iterations, s, o.threads, "table1");
    rows[k].g2 = measure_unheralded(c, ch, c.hbt.unheralded_power_mw, c.table1.unheralded_duration_s, s, o.threads);
    rows[k].g2h = measure_heralded(c, ch, c.hbt.power_mw, c.table1.heralded_duration_s, s, o.threads);
  }

  std::ostringstream csv;
  csv << "channel,wavelengths_nm,visibility_pct,visibility_sigma_pct,g2_zero,g2_sigma,g2h_zero,g2h_sigma,"
         "heralding_rate_khz\n";
  json table = json::array();
  for (std::size_t k = 0; k < channels.size(); ++k) {
    const auto [sig, idl] = channel_pair(c.source.channel_plan, channels[k]);
    const std::string label = fmt2(sig.wavelength_nm()) + " & " + fmt2(idl.wavelength_nm());
    const auto& r = rows[k];
    const double v = 100.0 * r.franson.raw.visibility;
    const double vs = 100.0 * r.franson.monte_carlo.sigma;
    csv << channels[k] << ",\"" << label << "\"," << num(v) << ',' << num(vs) << ',' << num(r.g2.fit.g2_zero) << ','
        << num(r.g2.fit.sigma) << ',' << num(r.g2h.g2h.g2h_zero) << ',' << num(r.g2h.g2h.sigma) << ','
        << num(r.g2h.g2h.heralding_rate_hz / 1e3) << '\n';
    table.push_back({{"channel", channels[k]},
                     {"wavelengths_nm", label},
                     {"visibility_pct", v},
                     {"visibility_sigma_pct", vs},
                     {"g2_zero", r.g2.fit.g2_zero},
                     {"g2_sigma", r.g2.fit.sigma},
                     {"g2h_zero", r.g2h.g2h.g2h_zero},
                     {"g2h_sigma", r.g2h.g2h.sigma},
                     {"heralding_rate_hz", r.g2h.g2h.heralding_rate_hz}});
  }
  out.text("table1.csv", csv.str());
  json summary;
  summary["rows"] = table;
  summary["franson_power_mw"] = c.franson.power_mw;
  summary["franson_dwell_s"] = dwell;
  summary["heralded_power_mw"] = c.hbt.power_mw;
  summary["unheralded_power_mw"] = c.hbt.unheralded_power_mw;
  return out.finish("table1", summary, c, o, seed);
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"dispersion", "pairs", "spectrum", "multichannel",
                                              "franson",    "hbt",   "table1"};
  return names;
}

RunResult run_command(const std::string& name, const ExperimentConfig& config, const RunOptions& options) {
  if (name == "dispersion") return cmd_dispersion(config, options);
  if (name == "pairs") return cmd_pairs(config, options);
  if (name == "spectrum") return cmd_spectrum(config, options);
  if (name == "multichannel") return cmd_multichannel(config, options);
  if (name == "franson") return cmd_franson(config, options);
  if (name == "hbt") return cmd_hbt(config, options);
  if (name == "table1") return cmd_table1(config, options);
  throw Error(ErrorCode::invalid_argument, "unknown command '" + name + "'");
}

}  // namespace qlight
