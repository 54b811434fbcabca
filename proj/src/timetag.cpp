#include "qlight/timetag.hpp"

#include "qlight/error.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <queue>
#include <tuple>

namespace qlight {

TimeTagStream::TimeTagStream(std::string label, Picoseconds duration_ps, std::vector<Picoseconds> tags)
    : label_(std::move(label)), duration_ps_(duration_ps), tags_(std::move(tags)) {
  if (duration_ps_ < 0) throw Error(ErrorCode::invalid_argument, "stream duration must be >= 0");
  require_sorted(tags_, label_.c_str());
  if (!tags_.empty() && (tags_.front() < 0 || tags_.back() > duration_ps_)) {
    throw Error(ErrorCode::out_of_range, "stream '" + label_ + "' has tags outside [0, duration]");
  }
}

bool strictly_increasing(std::span<const Picoseconds> tags) noexcept {
  return std::adjacent_find(tags.begin(), tags.end(), [](Picoseconds a, Picoseconds b) { return b <= a; }) == tags.end();
}

void require_sorted(std::span<const Picoseconds> tags, const char* what) {
  if (!strictly_increasing(tags)) {
    throw Error(ErrorCode::unsorted_stream, std::string("time tags of '") + what + "' are not strictly increasing");
  }
}

namespace {

template <class T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> buf{};
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF);
  out.write(buf.data(), buf.size());
}

template <class T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!in) throw Error(ErrorCode::io, "truncated tag file");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return static_cast<T>(v);
}

// k-way merge of the channels in (time, channel) order.
template <class Fn>
void for_each_merged(std::span<const TimeTagStream> channels, Fn&& fn) {
  using Head = std::tuple<Picoseconds, std::uint16_t, std::size_t>;
  std::priority_queue<Head, std::vector<Head>, std::greater<>> heap;
  for (std::size_t c = 0; c < channels.size(); ++c) {
    if (!channels[c].empty()) heap.emplace(channels[c].tags()[0], static_cast<std::uint16_t>(c), 0);
  }
  while (!heap.empty()) {
    auto [t, c, i] = heap.top();
    heap.pop();
    fn(t, c);
    const auto tags = channels[c].tags();
    if (i + 1 < tags.size()) heap.emplace(tags[i + 1], c, i + 1);
  }
}

}  // namespace

void write_qtg(std::ostream& out, std::span<const TimeTagStream> channels) {
  if (channels.size() > 0xFFFF) throw Error(ErrorCode::invalid_argument, "too many channels for a tag file");
  Picoseconds duration = 0;
  for (const auto& s : channels) duration = std::max(duration, s.duration_ps());
  out.write("QTG1", 4);
  put_le<std::uint16_t>(out, kQtgVersion);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(channels.size()));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(duration));
  for_each_merged(channels, [&](Picoseconds t, std::uint16_t c) {
    put_le<std::uint16_t>(out, c);
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(t));
  });
  if (!out) throw Error(ErrorCode::io, "failed writing tag file");
}

void write_qtg(const std::filesystem::path& path, std::span<const TimeTagStream> channels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
  write_qtg(out, channels);
}

TagFile read_qtg(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "QTG1", 4) != 0) throw Error(ErrorCode::io, "not a QTG1 tag file");
  const auto version = get_le<std::uint16_t>(in);
  if (version != kQtgVersion) throw Error(ErrorCode::io, "unsupported tag file version " + std::to_string(version));
  const auto count = get_le<std::uint16_t>(in);
  TagFile file;
  file.duration_ps = static_cast<Picoseconds>(get_le<std::uint64_t>(in));
  std::vector<std::vector<Picoseconds>> tags(count);
  Picoseconds last = -1;
  for (;;) {
    std::array<unsigned char, 10> rec{};
    in.read(reinterpret_cast<char*>(rec.data()), rec.size());
    if (in.gcount() == 0) break;
    if (in.gcount() != 10) throw Error(ErrorCode::io, "truncated tag record");
    const std::uint16_t ch = static_cast<std::uint16_t>(rec[0] | (rec[1] << 8));
    std::uint64_t t = 0;
    for (int i = 0; i < 8; ++i) t |= static_cast<std::uint64_t>(rec[2 + i]) << (8 * i);
    if (ch >= count) throw Error(ErrorCode::io, "record channel " + std::to_string(ch) + " out of range");
    const auto tp = static_cast<Picoseconds>(t);
    if (tp < last) throw Error(ErrorCode::unsorted_stream, "tag file records are not time ordered");
    last = tp;
    tags[ch].push_back(tp);
  }
  for (std::uint16_t c = 0; c < count; ++c) {
    file.channels.emplace_back("ch" + std::to_string(c), file.duration_ps, std::move(tags[c]));
  }
  return file;
}

TagFile read_qtg(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  return read_qtg(in);
}

void write_tags_csv(std::ostream& out, std::span<const TimeTagStream> channels) {
  out << "time_ps,channel\n";
  for_each_merged(channels, [&](Picoseconds t, std::uint16_t c) { out << t << ',' << c << '\n'; });
}

}  // namespace qlight
