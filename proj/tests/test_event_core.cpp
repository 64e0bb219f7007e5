#include <doctest.h>

#include <random>

#include "rotorsense/errors.hpp"
#include "rotorsense/event_core.hpp"
#include "support.hpp"

using namespace rotorsense;

namespace {

std::vector<Event> random_events(std::size_t n, std::uint64_t seed, SensorGeometry g) {
  std::mt19937_64 rng(seed);
  std::vector<Event> out(n);
  Timestamp t = 0;
  for (auto& e : out) {
    t += rng() % 50;
    e = {t, std::uint16_t(rng() % g.width), std::uint16_t(rng() % g.height), std::int8_t(rng() % 2 ? 1 : -1)};
  }
  return out;
}

}  // namespace

TEST_CASE("csv line maps fields directly") {
  testing::TempDir dir("csv_fields");
  testing::write_text(dir / "e.csv", "t,x,y,p\n12,100,200,1\n");
  const auto s = read_events(dir / "e.csv");
  REQUIRE(s.events.size() == 1);
  CHECK(s.events[0] == Event{12, 100, 200, 1});
  // no geometry comment: max coordinate + 1
  CHECK(s.geometry == SensorGeometry{101, 201});
}

TEST_CASE("csv geometry comment and empty body") {
  testing::TempDir dir("csv_empty");
  testing::write_text(dir / "e.csv", "# width=640 height=480\nt,x,y,p\n");
  const auto s = read_events(dir / "e.csv");
  CHECK(s.events.empty());
  CHECK(s.geometry == SensorGeometry{640, 480});
}

TEST_CASE("unsorted input comes back stably sorted") {
  testing::TempDir dir("csv_sort");
  testing::write_text(dir / "e.csv", "# width=10 height=10\nt,x,y,p\n5,1,1,1\n3,2,2,-1\n9,3,3,1\n5,4,4,-1\n");
  const auto s = read_events(dir / "e.csv");
  REQUIRE(s.events.size() == 4);
  CHECK(s.events[0].t == 3);
  CHECK(s.events[1] == Event{5, 1, 1, 1});
  CHECK(s.events[2] == Event{5, 4, 4, -1});
  CHECK(s.events[3].t == 9);
}

TEST_CASE("malformed csv names the line") {
  testing::TempDir dir("csv_bad");
  testing::write_text(dir / "a.csv", "t,x,y,p\n1,2,3,1\n4,5,x,1\n");
  try {
    read_events(dir / "a.csv");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  testing::write_text(dir / "b.csv", "t,x,y,p\n1,2,3,0\n");
  CHECK_THROWS_AS(read_events(dir / "b.csv"), DataError);
  testing::write_text(dir / "c.csv", "1,2,3,1\n");
  CHECK_THROWS_AS(read_events(dir / "c.csv"), ParseError);
  testing::write_text(dir / "d.csv", "# width=4 height=4\nt,x,y,p\n1,9,0,1\n");
  CHECK_THROWS_AS(read_events(dir / "d.csv"), DataError);
}

TEST_CASE("binary layout is little-endian EVP1") {
  testing::TempDir dir("bin_layout");
  const std::vector<Event> ev{{0x0102030405ULL, 0x0a0b, 0x0c0d, -1}};
  write_events(ev, {0x1234, 0x5678}, dir / "e.bin", EventFormat::bin);
  const std::string b = testing::read_bytes(dir / "e.bin");
  REQUIRE(b.size() == 8 + 13);
  CHECK(b.substr(0, 4) == "EVP1");
  CHECK((unsigned char)b[4] == 0x34);
  CHECK((unsigned char)b[5] == 0x12);
  CHECK((unsigned char)b[6] == 0x78);
  CHECK((unsigned char)b[8] == 0x05);
  CHECK((unsigned char)b[12] == 0x01);
  CHECK((unsigned char)b[15] == 0x00);
  CHECK((unsigned char)b[16] == 0x0b);
  CHECK((unsigned char)b[18] == 0x0d);
  CHECK((signed char)b[20] == -1);
}

TEST_CASE("binary errors carry offsets") {
  testing::TempDir dir("bin_bad");
  testing::write_text(dir / "a.bin", "EVP2\x01\x00\x01\x00");
  CHECK_THROWS_AS(read_events(dir / "a.bin"), ParseError);
  const std::vector<Event> ev{{1, 1, 1, 1}, {2, 2, 2, 1}};
  write_events(ev, {4, 4}, dir / "b.bin", EventFormat::bin);
  std::string bytes = testing::read_bytes(dir / "b.bin");
  testing::write_text(dir / "c.bin", bytes.substr(0, bytes.size() - 3));
  try {
    read_events(dir / "c.bin");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("offset 21") != std::string::npos);
  }
  CHECK_THROWS_AS(read_events(dir / "missing.bin"), DataError);
}

TEST_CASE("round trips are bit-exact in both formats") {
  testing::TempDir dir("roundtrip");
  const SensorGeometry g{1280, 720};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto ev = random_events(seed * 37, seed, g);
    if (seed == 3) ev.push_back({Timestamp(1) << 40, 1279, 719, -1});
    for (auto fmt : {EventFormat::csv, EventFormat::bin}) {
      const auto path = dir / (fmt == EventFormat::csv ? "r.csv" : "r.bin");
      write_events(ev, g, path, fmt);
      const auto back = read_events(path, fmt);
      CHECK(back.events == ev);
      CHECK(back.geometry == g);
    }
  }
}

TEST_CASE("slice_bundles partitions with earlier-edge rule") {
  // 10 events uniformly in [0, 10 ms], dt = 5 ms: 2 bundles of 5
  std::vector<Event> ev;
  for (int i = 0; i < 10; ++i) ev.push_back({Timestamp(500 + i * 1000), 0, 0, 1});
  auto b = slice_bundles(ev, 5000, 0);
  REQUIRE(b.size() == 2);
  CHECK(b[0].events.size() == 5);
  CHECK(b[1].events.size() == 5);
  CHECK(b[0].t_start == 0);
  CHECK(b[0].t_end == 5000);

  // single event, any dt
  for (Timestamp dt : {1, 7, 100000}) {
    const std::vector<Event> one{{42, 0, 0, 1}};
    const auto s = slice_bundles(one, dt);
    REQUIRE(s.size() == 1);
    CHECK(s[0].events.size() == 1);
  }

  // exactly one dt of span
  const std::vector<Event> span{{100, 0, 0, 1}, {150, 0, 0, 1}, {200, 0, 0, 1}};
  CHECK(slice_bundles(span, 100).size() == 1);

  // event on an inner edge goes to the earlier bundle
  const std::vector<Event> edge{{0, 0, 0, 1}, {100, 0, 0, 1}, {101, 0, 0, 1}};
  const auto e = slice_bundles(edge, 100);
  REQUIRE(e.size() == 2);
  CHECK(e[0].events.size() == 2);
  CHECK(e[1].events.size() == 1);

  CHECK(slice_bundles(std::vector<Event>{}, 10).empty());
  CHECK_THROWS_AS(slice_bundles(edge, 0), ConfigError);
}

TEST_CASE("bundle partition property") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto ev = random_events(500, seed, {64, 64});
    const Timestamp dt = 1 + seed * 13;
    const auto bundles = slice_bundles(ev, dt);
    std::vector<Event> joined;
    for (std::size_t m = 0; m < bundles.size(); ++m) {
      CHECK(bundles[m].t_end == bundles[m].t_start + dt);
      if (m > 0) CHECK(bundles[m].t_start == bundles[m - 1].t_end);
      for (const auto& x : bundles[m].events) {
        CHECK(x.t >= bundles[m].t_start);
        CHECK(x.t <= bundles[m].t_end);
        if (m > 0) CHECK(x.t > bundles[m].t_start);
      }
      joined.insert(joined.end(), bundles[m].events.begin(), bundles[m].events.end());
    }
    CHECK(joined == ev);
  }
}

TEST_CASE("EventBatch keeps counts and order") {
  std::vector<Event> ev;
  for (int i = 0; i < 30; ++i) ev.push_back({Timestamp(i * 7), 1, 1, 1});
  EventBatch batch(slice_bundles(ev, 50));
  CHECK(batch.n_events() == 30);
  CHECK(batch.flatten() == ev);
  CHECK(batch.t_start() == 0);
}

TEST_CASE("validate_events rejects bad streams") {
  const SensorGeometry g{10, 10};
  CHECK_NOTHROW(validate_events(std::vector<Event>{{1, 0, 0, 1}, {1, 9, 9, -1}}, g));
  CHECK_THROWS_AS(validate_events(std::vector<Event>{{2, 0, 0, 1}, {1, 0, 0, 1}}, g), DataError);
  CHECK_THROWS_AS(validate_events(std::vector<Event>{{1, 10, 0, 1}}, g), DataError);
  CHECK_THROWS_AS(validate_events(std::vector<Event>{{1, 0, 0, 0}}, g), DataError);
}
