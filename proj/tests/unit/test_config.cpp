#include "qlight/config.hpp"
#include "qlight/error.hpp"

#include <doctest.h>

#include <fstream>

using namespace qlight;
using nlohmann::json;

namespace {

json reference() {
  std::ifstream f(QLIGHT_REFERENCE_CONFIG);
  return json::parse(f);
}

std::string config_error_path(const json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<accepted>";
}

}  // namespace

TEST_CASE("shipped config loads") {
  const auto c = load_config(QLIGHT_REFERENCE_CONFIG);
  CHECK(c.resonator.q_loaded == 4.3e5);
  CHECK(c.source.brightness_hz_per_mw2 == 2.09e6);
  CHECK(c.detector("signal").efficiency == 0.75);
  CHECK(c.detector("idler").dark_rate_hz == 80.0);
  CHECK(c.umi.delay_s == 10e-9);
  CHECK(c.acquisition.coincidence_window_ps == 2000);
  CHECK(c.source.channel_plan.pairs.size() == 7);
}

TEST_CASE("physical impossibilities are rejected with a dotted path") {
  auto d = reference();
  d["detectors"]["signal"]["efficiency"] = 1.2;
  CHECK(config_error_path(d) == "detectors.signal.efficiency");
  d = reference();
  d["source"]["brightness_hz_per_mw2"] = -1;
  CHECK(config_error_path(d) == "source.brightness_hz_per_mw2");
  d = reference();
  d["detectors"]["hbt1"]["dark_rate_hz"] = -5;
  CHECK(config_error_path(d) == "detectors.hbt1.dark_rate_hz");
}

TEST_CASE("unknown keys and missing seed are rejected") {
  auto d = reference();
  d["source"]["brightnes"] = 1;
  CHECK(config_error_path(d).rfind("source", 0) == 0);
  d = reference();
  d["acquisition"].erase("seed");
  CHECK(config_error_path(d).rfind("acquisition", 0) == 0);
}

TEST_CASE("channels outside 2..8 are rejected") {
  auto d = reference();
  d["pairs"]["channel"] = 9;
  CHECK(config_error_path(d) == "pairs.channel");
}

TEST_CASE("config hash ignores key order but not values") {
  const json a = json::parse(R"({"x": 1, "y": {"b": 2, "a": 3}})");
  const json b = json::parse(R"({"y": {"a": 3, "b": 2}, "x": 1})");
  const json c = json::parse(R"({"y": {"a": 3, "b": 2}, "x": 2})");
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a) != config_hash(c));
  CHECK(config_hash(a).size() == 16);
}
