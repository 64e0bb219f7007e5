#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "rotorsense/dynamics.hpp"
#include "rotorsense/event_core.hpp"
#include "rotorsense/motion_comp.hpp"
#include "rotorsense/propeller_sim.hpp"
#include "rotorsense/state_fusion.hpp"

namespace rotorsense {

// Shortest text that reads back to the same value.
std::string format_number(double v);
std::string format_number(long double v);

// Comma-separated table with a fixed header line. '#' lines are skipped.
struct CsvTable {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};
CsvTable read_csv_table(const std::filesystem::path& path, std::span<const std::string_view> header);

double parse_double(std::string_view field, std::size_t line, std::string_view column);
long double parse_long_double(std::string_view field, std::size_t line, std::string_view column);
long long parse_integer(std::string_view field, std::size_t line, std::string_view column);

// t,prop_id,rpm
struct RpmTruthRow {
  Timestamp t = 0;
  int prop_id = 0;
  double rpm = 0.0;
};
void write_rpm_truth(const std::filesystem::path& path, std::span<const RpmTruthRow> rows);
std::vector<RpmTruthRow> read_rpm_truth(const std::filesystem::path& path);

// t,x,y,z,vx,vy,vz,command
void write_flight_truth(const std::filesystem::path& path, std::span<const FlightSample> rows);
std::vector<FlightSample> read_flight_truth(const std::filesystem::path& path);

// t,x,y,z
void write_gps(const std::filesystem::path& path, std::span<const GpsSample> rows);
std::vector<GpsSample> read_gps(const std::filesystem::path& path);

// t_ref,prop_id,rpm,objective
struct SpeedRow {
  Timestamp t_ref = 0;
  int prop_id = 0;
  double rpm = 0.0;
  long double objective = 0.0L;
};
void write_speeds(const std::filesystem::path& path, std::span<const SpeedRow> rows);
std::vector<SpeedRow> read_speeds(const std::filesystem::path& path);

// event_index,prop_id
struct TrackRow {
  std::size_t event_index = 0;
  int prop_id = 0;
};
void write_tracks(const std::filesystem::path& path, std::span<const TrackRow> rows);
std::vector<TrackRow> read_tracks(const std::filesystem::path& path);

// t,command
void write_commands(const std::filesystem::path& path, std::span<const CommandEvent> rows);
std::vector<CommandEvent> read_commands(const std::filesystem::path& path);

// t,x,y,z,vx,vy,vz,trace
void write_fused(const std::filesystem::path& path, std::span<const FusedState> rows);
struct FusedRow {
  Timestamp t = 0;
  Vec3 position{};
  Vec3 velocity{};
  double trace = 0.0;
};
std::vector<FusedRow> read_fused(const std::filesystem::path& path);

// Speed rows regrouped per prop_id (0..max), each in time order.
std::vector<std::vector<SpeedRow>> split_by_prop(std::span<const SpeedRow> rows);

// Joint rotor speed samples for fusion: one per speed row once every rotor
// has reported, each rotor held at its latest value.
std::vector<SpeedSample> joint_speed_samples(std::span<const SpeedRow> rows, std::size_t n_rotors);

}  // namespace rotorsense
