#include "rotorsense/event_core.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "rotorsense/errors.hpp"

namespace rotorsense {

namespace {

constexpr std::array<char, 4> kMagic = {'E', 'V', 'P', '1'};
constexpr std::size_t kRecordSize = 8 + 2 + 2 + 1;

template <typename T>
bool parse_int(std::string_view s, T& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::optional<SensorGeometry> parse_geometry_comment(std::string_view line, std::size_t lineno) {
  // "# width=W height=H"
  SensorGeometry g;
  bool have_w = false, have_h = false;
  std::istringstream in{std::string(line.substr(1))};
  std::string tok;
  while (in >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) continue;
    std::string_view key(tok.data(), eq);
    std::string_view val(tok.data() + eq + 1, tok.size() - eq - 1);
    int v = 0;
    if (key == "width" || key == "height") {
      if (!parse_int(val, v) || v <= 0 || v > 65535)
        throw ParseError("line " + std::to_string(lineno) + ": bad geometry value '" + tok + "'");
      if (key == "width") {
        g.width = v;
        have_w = true;
      } else {
        g.height = v;
        have_h = true;
      }
    }
  }
  if (have_w != have_h)
    throw ParseError("line " + std::to_string(lineno) + ": geometry comment needs both width and height");
  if (!have_w) return std::nullopt;
  return g;
}

SensorGeometry infer_geometry(std::span<const Event> events) {
  if (events.empty()) return {1, 1};
  int w = 0, h = 0;
  for (const auto& e : events) {
    w = std::max(w, int(e.x) + 1);
    h = std::max(h, int(e.y) + 1);
  }
  return {w, h};
}

EventStream read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  EventStream out;
  std::optional<SensorGeometry> geometry;
  bool saw_header = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv = trim(line);
    if (sv.empty()) continue;
    if (sv.front() == '#') {
      if (auto g = parse_geometry_comment(sv, lineno)) geometry = g;
      continue;
    }
    if (!saw_header) {
      if (sv != "t,x,y,p")
        throw ParseError("line " + std::to_string(lineno) + ": expected header 't,x,y,p'");
      saw_header = true;
      continue;
    }
    std::array<std::string_view, 4> fields;
    std::size_t n = 0, start = 0;
    for (std::size_t i = 0; i <= sv.size(); ++i) {
      if (i == sv.size() || sv[i] == ',') {
        if (n == fields.size())
          throw ParseError("line " + std::to_string(lineno) + ": too many fields");
        fields[n++] = sv.substr(start, i - start);
        start = i + 1;
      }
    }
    if (n != 4) throw ParseError("line " + std::to_string(lineno) + ": expected 4 fields");
    Event e;
    int p = 0;
    if (!parse_int(fields[0], e.t) || !parse_int(fields[1], e.x) || !parse_int(fields[2], e.y) ||
        !parse_int(fields[3], p))
      throw ParseError("line " + std::to_string(lineno) + ": malformed record '" + std::string(sv) + "'");
    if (p != 1 && p != -1)
      throw DataError("line " + std::to_string(lineno) + ": polarity " + std::to_string(p) +
                      " not in {-1, 1}");
    e.p = static_cast<std::int8_t>(p);
    out.events.push_back(e);
  }
  if (!saw_header) throw ParseError(path.string() + ": missing header 't,x,y,p'");
  out.geometry = geometry ? *geometry : infer_geometry(out.events);
  return out;
}

template <typename T>
void put_le(std::string& buf, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    buf.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t(p[i]) << (8 * i);
  return static_cast<T>(v);
}

EventStream read_bin(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < 8 || !std::equal(kMagic.begin(), kMagic.end(), data.begin()))
    throw ParseError(path.string() + ": offset 0: missing EVP1 magic");
  const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
  EventStream out;
  out.geometry.width = get_le<std::uint16_t>(bytes + 4);
  out.geometry.height = get_le<std::uint16_t>(bytes + 6);
  if (out.geometry.width == 0 || out.geometry.height == 0)
    throw ParseError(path.string() + ": offset 4: zero sensor dimension");
  const std::size_t body = data.size() - 8;
  if (body % kRecordSize != 0)
    throw ParseError(path.string() + ": offset " + std::to_string(8 + body / kRecordSize * kRecordSize) +
                     ": truncated record");
  out.events.resize(body / kRecordSize);
  for (std::size_t i = 0; i < out.events.size(); ++i) {
    const unsigned char* r = bytes + 8 + i * kRecordSize;
    Event& e = out.events[i];
    e.t = get_le<std::uint64_t>(r);
    e.x = get_le<std::uint16_t>(r + 8);
    e.y = get_le<std::uint16_t>(r + 10);
    e.p = static_cast<std::int8_t>(r[12]);
    if (e.p != 1 && e.p != -1)
      throw DataError(path.string() + ": offset " + std::to_string(8 + i * kRecordSize + 12) +
                      ": polarity " + std::to_string(int(e.p)) + " not in {-1, 1}");
  }
  return out;
}

}  // namespace

EventBatch::EventBatch(std::vector<EventBundle> bundles) {
  for (auto& b : bundles) append(std::move(b));
}

void EventBatch::append(EventBundle bundle) {
  n_events_ += bundle.events.size();
  bundles_.push_back(std::move(bundle));
}

Timestamp EventBatch::t_start() const { return bundles_.empty() ? 0 : bundles_.front().t_start; }
Timestamp EventBatch::t_end() const { return bundles_.empty() ? 0 : bundles_.back().t_end; }

std::vector<Event> EventBatch::flatten() const {
  std::vector<Event> out;
  out.reserve(n_events_);
  for (const auto& b : bundles_) out.insert(out.end(), b.events.begin(), b.events.end());
  return out;
}

EventFormat format_from_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? EventFormat::csv : EventFormat::bin;
}

bool is_time_sorted(std::span<const Event> events) {
  return std::is_sorted(events.begin(), events.end(),
                        [](const Event& a, const Event& b) { return a.t < b.t; });
}

void sort_by_time(std::vector<Event>& events) {
  if (is_time_sorted(events)) return;
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
}

void validate_events(std::span<const Event> events, const SensorGeometry& geometry) {
  if (geometry.width <= 0 || geometry.height <= 0) throw DataError("sensor geometry must be positive");
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    if (e.p != 1 && e.p != -1)
      throw DataError("event " + std::to_string(i) + ": polarity not in {-1, 1}");
    if (!geometry.contains(e.x, e.y))
      throw DataError("event " + std::to_string(i) + ": coordinate (" + std::to_string(e.x) + ", " +
                      std::to_string(e.y) + ") outside sensor");
    if (i > 0 && e.t < events[i - 1].t)
      throw DataError("event " + std::to_string(i) + ": timestamps not sorted");
  }
}

EventStream read_events(const std::filesystem::path& path, EventFormat format) {
  EventStream s = format == EventFormat::csv ? read_csv(path) : read_bin(path);
  sort_by_time(s.events);
  validate_events(s.events, s.geometry);
  return s;
}

EventStream read_events(const std::filesystem::path& path) { return read_events(path, format_from_path(path)); }

void write_events(std::span<const Event> events, const SensorGeometry& geometry,
                  const std::filesystem::path& path, EventFormat format) {
  validate_events(events, geometry);
  if (format == EventFormat::csv) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    std::string buf;
    buf.reserve(events.size() * 20 + 64);
    buf += "# width=" + std::to_string(geometry.width) + " height=" + std::to_string(geometry.height) + "\n";
    buf += "t,x,y,p\n";
    for (const auto& e : events) {
      buf += std::to_string(e.t);
      buf += ',';
      buf += std::to_string(e.x);
      buf += ',';
      buf += std::to_string(e.y);
      buf += ',';
      buf += e.p > 0 ? "1" : "-1";
      buf += '\n';
    }
    out << buf;
    if (!out) throw DataError("write failed: " + path.string());
    return;
  }
  if (geometry.width > 65535 || geometry.height > 65535)
    throw DataError("sensor geometry exceeds the 16-bit binary header");
  std::string buf;
  buf.reserve(8 + events.size() * kRecordSize);
  buf.append(kMagic.begin(), kMagic.end());
  put_le(buf, static_cast<std::uint16_t>(geometry.width));
  put_le(buf, static_cast<std::uint16_t>(geometry.height));
  for (const auto& e : events) {
    put_le(buf, e.t);
    put_le(buf, e.x);
    put_le(buf, e.y);
    buf.push_back(static_cast<char>(e.p));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

void write_events(std::span<const Event> events, const SensorGeometry& geometry,
                  const std::filesystem::path& path) {
  write_events(events, geometry, path, format_from_path(path));
}

std::vector<EventBundle> slice_bundles(std::span<const Event> events, Timestamp dt,
                                       std::optional<Timestamp> origin) {
  if (dt == 0) throw ConfigError("bundle interval must be positive");
  std::vector<EventBundle> bundles;
  if (events.empty()) return bundles;
  const Timestamp t0 = origin.value_or(events.front().t);
  if (events.front().t < t0) throw ConfigError("bundle origin is after the first event");
  auto bundle_index = [&](Timestamp t) -> std::size_t {
    const Timestamp rel = t - t0;
    return rel == 0 ? 0 : static_cast<std::size_t>((rel - 1) / dt);
  };
  const std::size_t n = bundle_index(events.back().t) + 1;
  bundles.resize(n);
  for (std::size_t m = 0; m < n; ++m) {
    bundles[m].t_start = t0 + m * dt;
    bundles[m].t_end = bundles[m].t_start + dt;
  }
  for (const auto& e : events) bundles[bundle_index(e.t)].events.push_back(e);
  return bundles;
}

}  // namespace rotorsense
