#include "qlight/source_sim.hpp"

#include "qlight/error.hpp"
#include "qlight/rng.hpp"
#include "qlight/units.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace qlight {

namespace {

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::invalid_argument, msg); }

double gaussian_profile(double x, double center, double fwhm) {
  const double d = (x - center) / fwhm;
  return std::exp(-4.0 * std::numbers::ln2 * d * d);
}

double raman_peaks_at(const SourceConfig& config, double wavelength_nm) {
  double sum = 0.0;
  for (const auto& p : config.raman_peaks) sum += p.amplitude_hz_per_mw * gaussian_profile(wavelength_nm, p.center_nm, p.fwhm_nm);
  return sum;
}

// One way an emission event can end up at the detectors. Output -1 means the
// photon is not detected; delays are added to the photon's emission time.
struct Outcome {
  double prob = 0.0;
  int signal_out = -1;
  double signal_delay_ps = 0.0;
  int idler_out = -1;
  double idler_delay_ps = 0.0;
};

enum class Kind { pair, signal_noise, idler_noise };

struct EmissionKind {
  Kind kind = Kind::pair;
  double rate_hz = 0.0;  // on chip
  std::vector<Outcome> outcomes;

  double detect_prob() const {
    double q = 0.0;
    for (const auto& o : outcomes) q += o.prob;
    return q;
  }
};

struct Optics {
  std::vector<Outcome> pair;
  std::vector<Outcome> signal_noise;
  std::vector<Outcome> idler_noise;
};

// Emission rates (on chip) for the three event kinds of one channel pair.
struct EmissionRates {
  double pair = 0.0;
  double signal_noise = 0.0;
  double idler_noise = 0.0;
};

EmissionRates emission_rates(const SourceConfig& config, int channel) {
  const auto [signal, idler] = channel_pair(config.channel_plan, channel);
  const double p = config.pump_power_mw;
  const double ref_eta = config.chain_transmittance() * config.reference_detector_efficiency;
  const double b_pair_ref = config.brightness_hz_per_mw2 * ref_eta;
  const double quad_noise_ref = b_pair_ref * (1.0 / config.noise_quadratic_share - 1.0) * p * p;
  const double a = config.noise_linear(channel);
  EmissionRates r;
  r.pair = pair_rate(config, p);
  r.signal_noise = ((a + raman_peaks_at(config, signal.wavelength_nm())) * p + quad_noise_ref) / ref_eta;
  r.idler_noise = ((a + raman_peaks_at(config, idler.wavelength_nm())) * p + quad_noise_ref) / ref_eta;
  return r;
}

const Outcome& pick(const std::vector<Outcome>& outcomes, double u) {
  double acc = 0.0;
  for (const auto& o : outcomes) {
    acc += o.prob;
    if (u < acc) return o;
  }
  return outcomes.back();
}

struct EmissionSettings {
  double duration_ps = 0.0;
  double pair_spread_ps = 0.0;  // Laplace scale of idler - signal
  double bunching_ps = 0.0;     // intensity correlation time
  bool thermal = true;
  double signal_delay_ps = 0.0;
  double idler_delay_ps = 0.0;
  double max_tags = 0.0;
};

// Photon arrival times (ps, before detector effects) per output.
//
// Pair emission is a single-mode chaotic source, represented to second order
// by clusters: singletons or doublets whose members are separated by a
// Laplace(tau) delay. With doublet rate R^2 tau the excess pair density is
// R^2 exp(-|t| / tau), as for a Cox process driven by thermal intensity with
// coherence time 2 tau. Higher orders are dropped, which requires R tau << 1.
// Noise is broadband and therefore plain Poisson.
//
// Singletons of every kind (thinned by their detection probability) and
// doublets form one merged Poisson process generated in time order, so each
// output comes out nearly sorted.
std::vector<std::vector<double>> emit(const std::vector<EmissionKind>& kinds, int outputs,
                                      const EmissionSettings& s, Rng& rng) {
  const EmissionKind* pairs = nullptr;
  for (const auto& k : kinds) {
    if (k.kind == Kind::pair) pairs = &k;
  }
  const double pair_rate = pairs ? pairs->rate_hz : 0.0;
  const double duration_s = s.duration_ps * kPicosecond;
  const double tau_s = s.bunching_ps * kPicosecond;

  double doublet_rate = 0.0;
  if (s.thermal && pair_rate > 0.0) {
    const double occupation = pair_rate * tau_s;
    if (occupation > 0.05) {
      invalid("emission occupation per coherence time is " + std::to_string(occupation) +
              " (> 0.05); reduce pump power or disable thermal_emission");
    }
    doublet_rate = pair_rate * pair_rate * tau_s;
  }

  std::vector<double> branch;  // cumulative: thinned singleton kinds, then doublets
  double cumulative = 0.0;
  for (const auto& k : kinds) {
    const double singles = &k == pairs ? pair_rate - 2.0 * doublet_rate : k.rate_hz;
    if (!k.outcomes.empty()) cumulative += singles * k.detect_prob();
    branch.push_back(cumulative);
  }
  const double event_rate = cumulative + doublet_rate;
  const double expected = (cumulative + 2.0 * doublet_rate) * duration_s * 2.0;
  if (expected > s.max_tags) {
    throw Error(ErrorCode::memory_cap, "expected " + std::to_string(static_cast<long long>(expected)) +
                                           " tags exceeds the memory cap; split the acquisition into shorter chunks");
  }

  std::vector<std::vector<double>> out(static_cast<std::size_t>(outputs));
  for (auto& o : out) o.reserve(static_cast<std::size_t>(expected / outputs) + 16);
  auto place = [&](const EmissionKind& k, const Outcome& o, double t) {
    switch (k.kind) {
      case Kind::pair: {
        const double spread = rng.laplace(s.pair_spread_ps);
        if (o.signal_out >= 0) out[o.signal_out].push_back(t - spread + s.signal_delay_ps + o.signal_delay_ps);
        if (o.idler_out >= 0) out[o.idler_out].push_back(t + s.idler_delay_ps + o.idler_delay_ps);
        break;
      }
      case Kind::signal_noise:
        if (o.signal_out >= 0) out[o.signal_out].push_back(t + s.signal_delay_ps + o.signal_delay_ps);
        break;
      case Kind::idler_noise:
        if (o.idler_out >= 0) out[o.idler_out].push_back(t + s.idler_delay_ps + o.idler_delay_ps);
        break;
    }
  };
  auto place_member = [&](double t) {
    const double v = rng.uniform();
    if (v < pairs->detect_prob()) place(*pairs, pick(pairs->outcomes, v), t);
  };

  if (!(event_rate > 0.0)) return out;
  const double mean_gap_ps = 1.0 / (event_rate * kPicosecond);
  double t = 0.0;
  for (;;) {
    t += rng.exponential(mean_gap_ps);
    if (t >= s.duration_ps) break;
    const double u = rng.uniform() * event_rate;
    std::size_t k = 0;
    while (k < kinds.size() && u >= branch[k]) ++k;
    if (k < kinds.size()) {
      const double q = kinds[k].detect_prob();
      place(kinds[k], pick(kinds[k].outcomes, rng.uniform() * q), t);
    } else {
      place_member(t);
      place_member(t + rng.laplace(s.bunching_ps));
    }
  }
  return out;
}

// Insertion sort for nearly ordered data, falling back to std::sort when the
// input turns out to be far from ordered.
void sort_nearly_sorted(std::vector<double>& v) {
  const std::size_t budget = 64 * v.size() + 1024;
  std::size_t moves = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    const double x = v[i];
    std::size_t j = i;
    while (j > 0 && v[j - 1] > x) {
      v[j] = v[j - 1];
      --j;
      if (++moves > budget) {
        v[j] = x;
        std::sort(v.begin(), v.end());
        return;
      }
    }
    v[j] = x;
  }
}

// Gaussian jitter, sort, dark counts, non-paralyzable dead time, TDC
// quantization, in that order.
std::vector<Picoseconds> detect(std::vector<double> arrivals, const DetectorSpec& det, double duration_ps, Rng& rng) {
  const double jitter_ps = seconds_to_ps(det.jitter_sigma_s);
  if (jitter_ps > 0.0) {
    for (double& t : arrivals) t += jitter_ps * rng.normal();
  }
  sort_nearly_sorted(arrivals);

  std::vector<double> darks;
  if (det.dark_rate_hz > 0.0) {
    const double mean_gap_ps = 1.0 / (det.dark_rate_hz * kPicosecond);
    for (double t = rng.exponential(mean_gap_ps); t < duration_ps; t += rng.exponential(mean_gap_ps)) darks.push_back(t);
  }
  std::vector<double> merged(arrivals.size() + darks.size());
  std::merge(arrivals.begin(), arrivals.end(), darks.begin(), darks.end(), merged.begin());
  arrivals.clear();
  arrivals.shrink_to_fit();

  const double dead_ps = seconds_to_ps(det.dead_time_s);
  const double res_ps = std::max(1.0, std::round(seconds_to_ps(det.tdc_resolution_s)));
  const auto max_tag = static_cast<Picoseconds>(std::floor(duration_ps));
  std::vector<Picoseconds> tags;
  tags.reserve(merged.size());
  double last_click = -1e300;
  for (double t : merged) {
    if (t - last_click < dead_ps) continue;
    last_click = t;
    const auto q = static_cast<Picoseconds>(std::floor(t / res_ps) * res_ps);
    if (q < 0 || q > max_tag) continue;
    if (!tags.empty() && q <= tags.back()) continue;
    tags.push_back(q);
  }
  return tags;
}

EmissionSettings settings_for(const SourceConfig& config, double duration_s) {
  EmissionSettings s;
  s.duration_ps = seconds_to_ps(duration_s);
  s.pair_spread_ps = seconds_to_ps(config.pair_correlation_time_s);
  s.bunching_ps = seconds_to_ps(config.pair_correlation_time_s);
  s.thermal = config.thermal_emission;
  s.signal_delay_ps = config.signal_delay_ps;
  s.idler_delay_ps = config.idler_delay_ps;
  s.max_tags = config.max_tags;
  return s;
}

std::vector<EmissionKind> kinds_for(const SourceConfig& config, int channel, Optics optics) {
  const EmissionRates r = emission_rates(config, channel);
  return {{Kind::pair, r.pair, std::move(optics.pair)},
          {Kind::signal_noise, r.signal_noise, std::move(optics.signal_noise)},
          {Kind::idler_noise, r.idler_noise, std::move(optics.idler_noise)}};
}

void check_common(const SourceConfig& config, double duration_s, int channel) {
  config.validate();
  if (!(duration_s > 0.0)) invalid("duration must be > 0");
  (void)channel_pair(config.channel_plan, channel);
}

std::string channel_tag(int channel) { return std::to_string(channel); }

}  // namespace

void DetectorSpec::validate() const {
  if (!(efficiency >= 0.0 && efficiency <= 1.0)) invalid("detector efficiency must be in [0, 1]");
  if (!(dark_rate_hz >= 0.0)) invalid("dark rate must be >= 0");
  if (!(jitter_sigma_s >= 0.0)) invalid("jitter must be >= 0");
  if (!(dead_time_s >= 0.0)) invalid("dead time must be >= 0");
  if (!(tdc_resolution_s > 0.0)) invalid("tdc resolution must be > 0");
}

double SourceConfig::chain_transmittance() const {
  return db_to_transmittance(coupling_loss_total_db / 2.0 + filter_insertion_db + extra_loss_db);
}

double SourceConfig::noise_linear(int channel) const {
  const auto it = channel_noise_linear.find(channel);
  return it != channel_noise_linear.end() ? it->second : noise_linear_hz_per_mw;
}

void SourceConfig::validate() const {
  if (!(brightness_hz_per_mw2 >= 0.0)) invalid("brightness must be >= 0");
  if (!(pump_power_mw >= 0.0)) invalid("pump power must be >= 0");
  if (!(noise_linear_hz_per_mw >= 0.0)) invalid("noise_linear must be >= 0");
  for (const auto& [ch, a] : channel_noise_linear) {
    if (!(a >= 0.0)) invalid("noise_linear for channel " + std::to_string(ch) + " must be >= 0");
  }
  if (!(noise_quadratic_share > 0.0 && noise_quadratic_share <= 1.0)) invalid("noise_quadratic_share must be in (0, 1]");
  if (!(pair_correlation_time_s > 0.0)) invalid("pair_correlation_time must be > 0");
  if (!(coupling_loss_total_db >= 0.0 && filter_insertion_db >= 0.0 && extra_loss_db >= 0.0)) {
    invalid("losses must be >= 0 dB");
  }
  if (!(reference_detector_efficiency > 0.0 && reference_detector_efficiency <= 1.0)) {
    invalid("reference detector efficiency must be in (0, 1]");
  }
  for (const auto& p : raman_peaks) {
    if (!(p.fwhm_nm > 0.0) || !(p.amplitude_hz_per_mw >= 0.0)) invalid("raman peaks need fwhm > 0 and amplitude >= 0");
  }
  channel_plan.validate();
}

void UmiSpec::validate(double pair_correlation_time_s) const {
  if (!(delay_s > 10.0 * pair_correlation_time_s)) invalid("interferometer delay must exceed 10x the pair correlation time");
  if (!(two_photon_visibility >= 0.0 && two_photon_visibility <= 1.0)) invalid("two-photon visibility must be in [0, 1]");
}

double arm_transmittance(const SourceConfig& config, const DetectorSpec& detector, double extra_db) {
  return config.chain_transmittance() * detector.efficiency * db_to_transmittance(extra_db);
}

SinglesRate singles_rate(const SourceConfig& config, const DetectorSpec& detector, Arm arm, int channel,
                         double power_mw) {
  if (!(power_mw >= 0.0)) invalid("power must be >= 0");
  const auto [signal, idler] = channel_pair(config.channel_plan, channel);
  const double wavelength = arm == Arm::signal ? signal.wavelength_nm() : idler.wavelength_nm();
  const double eff_ratio = detector.efficiency / config.reference_detector_efficiency;
  SinglesRate r;
  r.linear = (config.noise_linear(channel) + raman_peaks_at(config, wavelength)) * power_mw * eff_ratio;
  r.quadratic = config.brightness_hz_per_mw2 * arm_transmittance(config, detector) / config.noise_quadratic_share *
                power_mw * power_mw;
  r.constant = detector.dark_rate_hz;
  return r;
}

double pair_rate(const SourceConfig& config, double power_mw) {
  return config.brightness_hz_per_mw2 * power_mw * power_mw;
}

double raman_noise_rate(const SourceConfig& config, double wavelength_nm, double power_mw) {
  if (!(wavelength_nm >= 1480.0 && wavelength_nm <= 1620.0)) {
    throw Error(ErrorCode::out_of_range, "wavelength " + std::to_string(wavelength_nm) + " nm outside [1480, 1620] nm");
  }
  return (config.noise_linear_hz_per_mw + raman_peaks_at(config, wavelength_nm)) * power_mw;
}

StreamPair generate_pair_streams(const SourceConfig& config, const DetectorSpec& signal_detector,
                                 const DetectorSpec& idler_detector, int channel, double duration_s,
                                 std::uint64_t seed, const ArmLoss& loss) {
  check_common(config, duration_s, channel);
  signal_detector.validate();
  idler_detector.validate();
  const double es = arm_transmittance(config, signal_detector, loss.signal_db);
  const double ei = arm_transmittance(config, idler_detector, loss.idler_db);

  Optics optics;
  optics.pair = {{es * ei, 0, 0.0, 1, 0.0}, {es * (1.0 - ei), 0, 0.0, -1, 0.0}, {(1.0 - es) * ei, -1, 0.0, 1, 0.0}};
  optics.signal_noise = {{es, 0, 0.0, -1, 0.0}};
  optics.idler_noise = {{ei, -1, 0.0, 1, 0.0}};

  const auto settings = settings_for(config, duration_s);
  Rng emission_rng(derive_seed(seed, "emission/pairs/" + channel_tag(channel)));
  auto arrivals = emit(kinds_for(config, channel, std::move(optics)), 2, settings, emission_rng);

  Rng rs(derive_seed(seed, "detector/signal/" + channel_tag(channel)));
  Rng ri(derive_seed(seed, "detector/idler/" + channel_tag(channel)));
  const auto duration_ps = static_cast<Picoseconds>(std::llround(settings.duration_ps));
  return {TimeTagStream("signal" + channel_tag(channel), duration_ps,
                        detect(std::move(arrivals[0]), signal_detector, settings.duration_ps, rs)),
          TimeTagStream("idler" + channel_tag(channel), duration_ps,
                        detect(std::move(arrivals[1]), idler_detector, settings.duration_ps, ri))};
}

StreamPair franson_transform(const SourceConfig& config, const DetectorSpec& signal_detector,
                             const DetectorSpec& idler_detector, int channel, double duration_s, const UmiSpec& umi,
                             std::uint64_t seed, const ArmLoss& loss) {
  check_common(config, duration_s, channel);
  signal_detector.validate();
  idler_detector.validate();
  umi.validate(config.pair_correlation_time_s);
  const double es = arm_transmittance(config, signal_detector, loss.signal_db);
  const double ei = arm_transmittance(config, idler_detector, loss.idler_db);
  const double dt = seconds_to_ps(umi.delay_s);
  const double c = umi.two_photon_visibility * std::cos(2.0 * umi.phase_rad);

  // Each photon leaves through the detected port with probability 1/2 via the
  // short or the long arm. Short-short and long-long amplitudes interfere; the
  // joint law keeps each photon's marginal at 1/2 for every phase.
  const double both = es * ei;
  const double signal_only = es / 2.0 - both * (2.0 + c) / 8.0;
  const double idler_only = ei / 2.0 - both * (2.0 + c) / 8.0;
  Optics optics;
  optics.pair = {
      {both * (1.0 + c) / 16.0, 0, 0.0, 1, 0.0},  // short-short
      {both * (1.0 + c) / 16.0, 0, dt, 1, dt},    // long-long
      {both / 16.0, 0, 0.0, 1, dt},               // signal short, idler long
      {both / 16.0, 0, dt, 1, 0.0},               // signal long, idler short
      {signal_only / 2.0, 0, 0.0, -1, 0.0},
      {signal_only / 2.0, 0, dt, -1, 0.0},
      {idler_only / 2.0, -1, 0.0, 1, 0.0},
      {idler_only / 2.0, -1, 0.0, 1, dt},
  };
  optics.signal_noise = {{es / 4.0, 0, 0.0, -1, 0.0}, {es / 4.0, 0, dt, -1, 0.0}};
  optics.idler_noise = {{ei / 4.0, -1, 0.0, 1, 0.0}, {ei / 4.0, -1, 0.0, 1, dt}};

  const auto settings = settings_for(config, duration_s);
  Rng emission_rng(derive_seed(seed, "emission/franson/" + channel_tag(channel)));
  auto arrivals = emit(kinds_for(config, channel, std::move(optics)), 2, settings, emission_rng);

  Rng rs(derive_seed(seed, "detector/franson-signal/" + channel_tag(channel)));
  Rng ri(derive_seed(seed, "detector/franson-idler/" + channel_tag(channel)));
  const auto duration_ps = static_cast<Picoseconds>(std::llround(settings.duration_ps));
  return {TimeTagStream("signal" + channel_tag(channel), duration_ps,
                        detect(std::move(arrivals[0]), signal_detector, settings.duration_ps, rs)),
          TimeTagStream("idler" + channel_tag(channel), duration_ps,
                        detect(std::move(arrivals[1]), idler_detector, settings.duration_ps, ri))};
}

HeraldedStreams generate_heralded_streams(const SourceConfig& config, const DetectorSpec& herald_detector,
                                          const DetectorSpec& arm1_detector, const DetectorSpec& arm2_detector,
                                          int channel, double duration_s, std::uint64_t seed, const ArmLoss& loss) {
  check_common(config, duration_s, channel);
  herald_detector.validate();
  arm1_detector.validate();
  arm2_detector.validate();
  const double eh = arm_transmittance(config, herald_detector, loss.signal_db);
  const double e1 = arm_transmittance(config, arm1_detector, loss.idler_db) / 2.0;
  const double e2 = arm_transmittance(config, arm2_detector, loss.idler_db) / 2.0;
  const double lost = 1.0 - e1 - e2;

  Optics optics;
  optics.pair = {{eh * e1, 0, 0.0, 1, 0.0}, {eh * e2, 0, 0.0, 2, 0.0}, {eh * lost, 0, 0.0, -1, 0.0},
                 {(1.0 - eh) * e1, -1, 0.0, 1, 0.0}, {(1.0 - eh) * e2, -1, 0.0, 2, 0.0}};
  optics.signal_noise = {{eh, 0, 0.0, -1, 0.0}};
  optics.idler_noise = {{e1, -1, 0.0, 1, 0.0}, {e2, -1, 0.0, 2, 0.0}};

  const auto settings = settings_for(config, duration_s);
  Rng emission_rng(derive_seed(seed, "emission/heralded/" + channel_tag(channel)));
  auto arrivals = emit(kinds_for(config, channel, std::move(optics)), 3, settings, emission_rng);

  Rng rh(derive_seed(seed, "detector/herald/" + channel_tag(channel)));
  Rng r1(derive_seed(seed, "detector/hbt1/" + channel_tag(channel)));
  Rng r2(derive_seed(seed, "detector/hbt2/" + channel_tag(channel)));
  const auto duration_ps = static_cast<Picoseconds>(std::llround(settings.duration_ps));
  return {TimeTagStream("herald" + channel_tag(channel), duration_ps,
                        detect(std::move(arrivals[0]), herald_detector, settings.duration_ps, rh)),
          TimeTagStream("hbt1_" + channel_tag(channel), duration_ps,
                        detect(std::move(arrivals[1]), arm1_detector, settings.duration_ps, r1)),
          TimeTagStream("hbt2_" + channel_tag(channel), duration_ps,
                        detect(std::move(arrivals[2]), arm2_detector, settings.duration_ps, r2))};
}

std::pair<TimeTagStream, TimeTagStream> hbt_split(const TimeTagStream& stream, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "hbt_split/" + stream.label()));
  std::vector<Picoseconds> a;
  std::vector<Picoseconds> b;
  a.reserve(stream.size() / 2 + 16);
  b.reserve(stream.size() / 2 + 16);
  for (Picoseconds t : stream.tags()) (rng.next_u64() >> 63 ? a : b).push_back(t);
  return {TimeTagStream(stream.label() + "/a", stream.duration_ps(), std::move(a)),
          TimeTagStream(stream.label() + "/b", stream.duration_ps(), std::move(b))};
}

TimeTagStream poisson_stream(std::string label, double rate_hz, double duration_s, std::uint64_t seed) {
  if (!(rate_hz >= 0.0) || !(duration_s > 0.0)) invalid("poisson_stream needs rate >= 0 and duration > 0");
  Rng rng(derive_seed(seed, "poisson/" + label));
  const double duration_ps = seconds_to_ps(duration_s);
  const std::uint64_t n = rng.poisson(rate_hz * duration_s);
  std::vector<double> times(n);
  for (auto& t : times) t = rng.uniform() * duration_ps;
  std::sort(times.begin(), times.end());
  std::vector<Picoseconds> tags;
  tags.reserve(n);
  for (double t : times) {
    const auto q = static_cast<Picoseconds>(std::floor(t));
    if (tags.empty() || q > tags.back()) tags.push_back(q);
  }
  return TimeTagStream(std::move(label), static_cast<Picoseconds>(std::llround(duration_ps)), std::move(tags));
}

}  // namespace qlight
