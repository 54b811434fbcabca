#include "qlight/error.hpp"
#include "qlight/timetag.hpp"

#include <doctest.h>

#include <sstream>

using namespace qlight;

TEST_CASE("streams must be strictly increasing and inside the duration") {
  CHECK_NOTHROW(TimeTagStream("a", 100, {0, 5, 100}));
  CHECK_THROWS_AS(TimeTagStream("a", 100, {5, 5}), Error);
  CHECK_THROWS_AS(TimeTagStream("a", 100, {6, 5}), Error);
  CHECK_THROWS_AS(TimeTagStream("a", 100, {101}), Error);
}

TEST_CASE("QTG header and records are little-endian and bit exact") {
  const std::vector<TimeTagStream> ch{TimeTagStream("s", 0x0102, {1, 0x0100}), TimeTagStream("i", 0x0102, {1})};
  std::ostringstream out;
  write_qtg(out, ch);
  const std::string b = out.str();
  REQUIRE(b.size() == 16 + 3 * 10);
  CHECK(b.substr(0, 4) == "QTG1");
  CHECK(b[4] == 1);
  CHECK(b[5] == 0);
  CHECK(b[6] == 2);  // channel count
  CHECK(static_cast<unsigned char>(b[8]) == 0x02);
  CHECK(static_cast<unsigned char>(b[9]) == 0x01);
  // Records ordered by time then channel: (0,1) (1,1) (0,256).
  CHECK(b[16] == 0);
  CHECK(b[18] == 1);
  CHECK(b[26] == 1);
  CHECK(b[28] == 1);
  CHECK(b[36] == 0);
  CHECK(static_cast<unsigned char>(b[39]) == 0x01);
}

TEST_CASE("QTG round trip") {
  const std::vector<TimeTagStream> ch{TimeTagStream("a", 1'000'000, {3, 7, 999'999}),
                                      TimeTagStream("b", 1'000'000, {}), TimeTagStream("c", 1'000'000, {7})};
  std::stringstream buf;
  write_qtg(buf, ch);
  const TagFile f = read_qtg(buf);
  CHECK(f.duration_ps == 1'000'000);
  REQUIRE(f.channels.size() == 3);
  CHECK(std::vector<Picoseconds>(f.channels[0].tags().begin(), f.channels[0].tags().end()) ==
        std::vector<Picoseconds>{3, 7, 999'999});
  CHECK(f.channels[1].empty());
  CHECK(f.channels[2].size() == 1);
}

TEST_CASE("QTG reader rejects bad magic and truncation") {
  std::istringstream bad(std::string("QTG2") + std::string(12, '\0'));
  CHECK_THROWS_AS(read_qtg(bad), Error);
  const std::vector<TimeTagStream> ch{TimeTagStream("a", 10, {3})};
  std::ostringstream out;
  write_qtg(out, ch);
  std::istringstream cut(out.str().substr(0, out.str().size() - 3));
  CHECK_THROWS_AS(read_qtg(cut), Error);
}

TEST_CASE("CSV export merges channels in time order") {
  const std::vector<TimeTagStream> ch{TimeTagStream("a", 10, {2, 9}), TimeTagStream("b", 10, {5})};
  std::ostringstream out;
  write_tags_csv(out, ch);
  CHECK(out.str() == "time_ps,channel\n2,0\n5,1\n9,0\n");
}
