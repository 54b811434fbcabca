#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace qlight {

using Picoseconds = std::int64_t;

/// Strictly increasing integer-picosecond detection times on one channel.
class TimeTagStream {
 public:
  TimeTagStream() = default;

  /// Throws Error(unsorted_stream) unless tags are strictly increasing and
  /// Error(out_of_range) unless they lie in [0, duration].
  TimeTagStream(std::string label, Picoseconds duration_ps, std::vector<Picoseconds> tags);

  const std::string& label() const noexcept { return label_; }
  Picoseconds duration_ps() const noexcept { return duration_ps_; }
  double duration_s() const noexcept { return static_cast<double>(duration_ps_) * 1e-12; }
  std::span<const Picoseconds> tags() const noexcept { return tags_; }
  std::size_t size() const noexcept { return tags_.size(); }
  bool empty() const noexcept { return tags_.empty(); }
  double rate_hz() const noexcept { return duration_ps_ > 0 ? static_cast<double>(tags_.size()) / duration_s() : 0.0; }

  friend bool operator==(const TimeTagStream&, const TimeTagStream&) = default;

 private:
  std::string label_;
  Picoseconds duration_ps_ = 0;
  std::vector<Picoseconds> tags_;
};

bool strictly_increasing(std::span<const Picoseconds> tags) noexcept;

/// Throws Error(unsorted_stream) naming `what` if the tags are not strictly increasing.
void require_sorted(std::span<const Picoseconds> tags, const char* what);

// Binary container: little-endian, "QTG1" magic, u16 version (1),
// u16 channel count, u64 duration_ps, then {u16 channel, u64 time_ps}
// records sorted by time (ties by channel).
inline constexpr std::uint16_t kQtgVersion = 1;

struct TagFile {
  Picoseconds duration_ps = 0;
  std::vector<TimeTagStream> channels;  // index == channel number
};

void write_qtg(std::ostream& out, std::span<const TimeTagStream> channels);
void write_qtg(const std::filesystem::path& path, std::span<const TimeTagStream> channels);
TagFile read_qtg(std::istream& in);
TagFile read_qtg(const std::filesystem::path& path);

/// CSV export with header `time_ps,channel`, merged in time order.
void write_tags_csv(std::ostream& out, std::span<const TimeTagStream> channels);

}  // namespace qlight
