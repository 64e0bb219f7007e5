#include "rotorsense/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>

#include "rotorsense/errors.hpp"

namespace rotorsense {

std::string format_number(double v) {
  std::array<char, 64> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), r.ptr);
}

std::string format_number(long double v) {
  std::array<char, 128> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), r.ptr);
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line) + ": ";
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw DataError("failed writing " + path.string());
}

template <typename T>
T parse_number(std::string_view field, std::size_t line, std::string_view column) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  T v{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
    throw ParseError("line " + std::to_string(line) + ": bad " + std::string(column) + " '" + std::string(field) +
                     "'");
  return v;
}

Timestamp parse_time(std::string_view f, std::size_t line) {
  const long long v = parse_integer(f, line, "t");
  if (v < 0) throw ParseError("line " + std::to_string(line) + ": negative timestamp");
  return static_cast<Timestamp>(v);
}

}  // namespace

double parse_double(std::string_view f, std::size_t line, std::string_view column) {
  return parse_number<double>(f, line, column);
}
long double parse_long_double(std::string_view f, std::size_t line, std::string_view column) {
  return parse_number<long double>(f, line, column);
}
long long parse_integer(std::string_view f, std::size_t line, std::string_view column) {
  return parse_number<long long>(f, line, column);
}

CsvTable read_csv_table(const std::filesystem::path& path, std::span<const std::string_view> header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view sv = trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    std::vector<std::string> fields = split(sv);
    if (!have_header) {
      const bool match = fields.size() == header.size() &&
                         std::equal(fields.begin(), fields.end(), header.begin(),
                                    [](const std::string& a, std::string_view b) { return a == b; });
      if (!match) {
        std::string want;
        for (auto h : header) want += (want.empty() ? "" : ",") + std::string(h);
        throw ParseError(where(path, line_no) + "expected header '" + want + "'");
      }
      have_header = true;
      continue;
    }
    if (fields.size() != header.size())
      throw ParseError(where(path, line_no) + "expected " + std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(line_no);
  }
  if (!have_header) throw ParseError(path.string() + ": missing header line");
  return table;
}

namespace {

template <typename Row, typename Fn>
std::vector<Row> parse_rows(const std::filesystem::path& path, std::span<const std::string_view> header, Fn fn) {
  const CsvTable t = read_csv_table(path, header);
  std::vector<Row> rows;
  rows.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    try {
      rows.push_back(fn(t.rows[i], t.line_numbers[i]));
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
  }
  return rows;
}

constexpr std::array<std::string_view, 3> kRpmHeader{"t", "prop_id", "rpm"};
constexpr std::array<std::string_view, 8> kFlightHeader{"t", "x", "y", "z", "vx", "vy", "vz", "command"};
constexpr std::array<std::string_view, 4> kGpsHeader{"t", "x", "y", "z"};
constexpr std::array<std::string_view, 4> kSpeedHeader{"t_ref", "prop_id", "rpm", "objective"};
constexpr std::array<std::string_view, 2> kTrackHeader{"event_index", "prop_id"};
constexpr std::array<std::string_view, 2> kCommandHeader{"t", "command"};
constexpr std::array<std::string_view, 8> kFusedHeader{"t", "x", "y", "z", "vx", "vy", "vz", "trace"};

template <std::size_t N>
void header(std::ostream& out, const std::array<std::string_view, N>& h) {
  for (std::size_t i = 0; i < N; ++i) out << (i ? "," : "") << h[i];
  out << '\n';
}

int parse_prop(std::string_view f, std::size_t line) {
  const long long v = parse_integer(f, line, "prop_id");
  if (v < 0 || v > 1'000'000) throw ParseError("line " + std::to_string(line) + ": bad prop_id");
  return static_cast<int>(v);
}

Command parse_command_field(std::string_view f, std::size_t line) {
  const auto c = parse_command(f);
  if (!c) throw ParseError("line " + std::to_string(line) + ": unknown command '" + std::string(f) + "'");
  return *c;
}

}  // namespace

void write_rpm_truth(const std::filesystem::path& path, std::span<const RpmTruthRow> rows) {
  auto out = open_out(path);
  header(out, kRpmHeader);
  for (const auto& r : rows) out << r.t << ',' << r.prop_id << ',' << format_number(r.rpm) << '\n';
  finish(out, path);
}

std::vector<RpmTruthRow> read_rpm_truth(const std::filesystem::path& path) {
  return parse_rows<RpmTruthRow>(path, kRpmHeader, [](const auto& f, std::size_t line) {
    return RpmTruthRow{parse_time(f[0], line), parse_prop(f[1], line), parse_double(f[2], line, "rpm")};
  });
}

void write_flight_truth(const std::filesystem::path& path, std::span<const FlightSample> rows) {
  auto out = open_out(path);
  header(out, kFlightHeader);
  for (const auto& r : rows) {
    out << r.t;
    for (double v : r.position) out << ',' << format_number(v);
    for (double v : r.velocity) out << ',' << format_number(v);
    out << ',' << command_name(r.command) << '\n';
  }
  finish(out, path);
}

std::vector<FlightSample> read_flight_truth(const std::filesystem::path& path) {
  return parse_rows<FlightSample>(path, kFlightHeader, [](const auto& f, std::size_t line) {
    FlightSample s;
    s.t = parse_time(f[0], line);
    for (int i = 0; i < 3; ++i) {
      s.position[i] = parse_double(f[1 + i], line, kFlightHeader[1 + i]);
      s.velocity[i] = parse_double(f[4 + i], line, kFlightHeader[4 + i]);
    }
    s.command = parse_command_field(f[7], line);
    return s;
  });
}

void write_gps(const std::filesystem::path& path, std::span<const GpsSample> rows) {
  auto out = open_out(path);
  header(out, kGpsHeader);
  for (const auto& r : rows) {
    out << r.t;
    for (double v : r.position) out << ',' << format_number(v);
    out << '\n';
  }
  finish(out, path);
}

std::vector<GpsSample> read_gps(const std::filesystem::path& path) {
  return parse_rows<GpsSample>(path, kGpsHeader, [](const auto& f, std::size_t line) {
    GpsSample g;
    g.t = parse_time(f[0], line);
    for (int i = 0; i < 3; ++i) g.position[i] = parse_double(f[1 + i], line, kGpsHeader[1 + i]);
    return g;
  });
}

void write_speeds(const std::filesystem::path& path, std::span<const SpeedRow> rows) {
  auto out = open_out(path);
  header(out, kSpeedHeader);
  for (const auto& r : rows)
    out << r.t_ref << ',' << r.prop_id << ',' << format_number(r.rpm) << ',' << format_number(r.objective) << '\n';
  finish(out, path);
}

std::vector<SpeedRow> read_speeds(const std::filesystem::path& path) {
  return parse_rows<SpeedRow>(path, kSpeedHeader, [](const auto& f, std::size_t line) {
    SpeedRow r{parse_time(f[0], line), parse_prop(f[1], line), parse_double(f[2], line, "rpm"),
               parse_long_double(f[3], line, "objective")};
    if (!(r.rpm >= 0.0)) throw ParseError("line " + std::to_string(line) + ": negative rpm");
    return r;
  });
}

void write_tracks(const std::filesystem::path& path, std::span<const TrackRow> rows) {
  auto out = open_out(path);
  header(out, kTrackHeader);
  for (const auto& r : rows) out << r.event_index << ',' << r.prop_id << '\n';
  finish(out, path);
}

std::vector<TrackRow> read_tracks(const std::filesystem::path& path) {
  return parse_rows<TrackRow>(path, kTrackHeader, [](const auto& f, std::size_t line) {
    const long long i = parse_integer(f[0], line, "event_index");
    if (i < 0) throw ParseError("line " + std::to_string(line) + ": negative event_index");
    return TrackRow{static_cast<std::size_t>(i), parse_prop(f[1], line)};
  });
}

void write_commands(const std::filesystem::path& path, std::span<const CommandEvent> rows) {
  auto out = open_out(path);
  header(out, kCommandHeader);
  for (const auto& r : rows) out << r.t << ',' << command_name(r.command) << '\n';
  finish(out, path);
}

std::vector<CommandEvent> read_commands(const std::filesystem::path& path) {
  return parse_rows<CommandEvent>(path, kCommandHeader, [](const auto& f, std::size_t line) {
    return CommandEvent{parse_time(f[0], line), parse_command_field(f[1], line)};
  });
}

void write_fused(const std::filesystem::path& path, std::span<const FusedState> rows) {
  auto out = open_out(path);
  header(out, kFusedHeader);
  for (const auto& s : rows) {
    out << s.t;
    for (int i = 0; i < 6; ++i) out << ',' << format_number(s.mu[i]);
    out << ',' << format_number(s.sigma.trace()) << '\n';
  }
  finish(out, path);
}

std::vector<FusedRow> read_fused(const std::filesystem::path& path) {
  return parse_rows<FusedRow>(path, kFusedHeader, [](const auto& f, std::size_t line) {
    FusedRow r;
    r.t = parse_time(f[0], line);
    for (int i = 0; i < 3; ++i) {
      r.position[i] = parse_double(f[1 + i], line, kFusedHeader[1 + i]);
      r.velocity[i] = parse_double(f[4 + i], line, kFusedHeader[4 + i]);
    }
    r.trace = parse_double(f[7], line, "trace");
    return r;
  });
}

std::vector<std::vector<SpeedRow>> split_by_prop(std::span<const SpeedRow> rows) {
  std::vector<std::vector<SpeedRow>> out;
  for (const auto& r : rows) {
    if (std::size_t(r.prop_id) >= out.size()) out.resize(std::size_t(r.prop_id) + 1);
    out[std::size_t(r.prop_id)].push_back(r);
  }
  for (auto& v : out)
    std::stable_sort(v.begin(), v.end(), [](const SpeedRow& a, const SpeedRow& b) { return a.t_ref < b.t_ref; });
  return out;
}

std::vector<SpeedSample> joint_speed_samples(std::span<const SpeedRow> rows, std::size_t n_rotors) {
  std::vector<SpeedRow> sorted(rows.begin(), rows.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const SpeedRow& a, const SpeedRow& b) {
    return a.t_ref != b.t_ref ? a.t_ref < b.t_ref : a.prop_id < b.prop_id;
  });
  std::vector<std::optional<double>> latest(n_rotors);
  std::vector<SpeedSample> out;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& r = sorted[i];
    if (std::size_t(r.prop_id) >= n_rotors)
      throw DataError("speed row for prop_id " + std::to_string(r.prop_id) + " but only " + std::to_string(n_rotors) +
                      " rotors");
    latest[std::size_t(r.prop_id)] = r.rpm;
    // Emit once per timestamp, after all rows sharing it.
    if (i + 1 < sorted.size() && sorted[i + 1].t_ref == r.t_ref) continue;
    if (std::any_of(latest.begin(), latest.end(), [](const auto& v) { return !v.has_value(); })) continue;
    SpeedSample s{r.t_ref, {}};
    for (const auto& v : latest) s.rpm.push_back(*v);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace rotorsense
