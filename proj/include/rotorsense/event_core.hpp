#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace rotorsense {

using Timestamp = std::uint64_t;  // microseconds

struct Event {
  Timestamp t = 0;
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::int8_t p = 1;  // -1 or +1

  friend bool operator==(const Event&, const Event&) = default;
};

struct SensorGeometry {
  int width = 0;
  int height = 0;

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  friend bool operator==(const SensorGeometry&, const SensorGeometry&) = default;
};

struct EventStream {
  std::vector<Event> events;
  SensorGeometry geometry;
};

// Events of one constant-length slice [t_start, t_end].
struct EventBundle {
  std::vector<Event> events;
  Timestamp t_start = 0;
  Timestamp t_end = 0;
};

// Time-contiguous run of bundles.
class EventBatch {
 public:
  EventBatch() = default;
  explicit EventBatch(std::vector<EventBundle> bundles);

  void append(EventBundle bundle);

  const std::vector<EventBundle>& bundles() const { return bundles_; }
  std::size_t n_bundles() const { return bundles_.size(); }
  std::size_t n_events() const { return n_events_; }
  bool empty() const { return bundles_.empty(); }
  Timestamp t_start() const;
  Timestamp t_end() const;

  // All events in time order.
  std::vector<Event> flatten() const;

 private:
  std::vector<EventBundle> bundles_;
  std::size_t n_events_ = 0;
};

enum class EventFormat { csv, bin };

// Guesses the format from the file extension (".csv" -> csv, anything else -> bin).
EventFormat format_from_path(const std::filesystem::path& path);

// Reads an event file; the result is stably sorted by timestamp.
EventStream read_events(const std::filesystem::path& path, EventFormat format);
EventStream read_events(const std::filesystem::path& path);

void write_events(std::span<const Event> events, const SensorGeometry& geometry,
                  const std::filesystem::path& path, EventFormat format);
void write_events(std::span<const Event> events, const SensorGeometry& geometry,
                  const std::filesystem::path& path);

// Checks polarity, coordinate bounds and time order. Throws DataError.
void validate_events(std::span<const Event> events, const SensorGeometry& geometry);

bool is_time_sorted(std::span<const Event> events);
void sort_by_time(std::vector<Event>& events);

// Partitions events into bundles of length dt starting at `origin` (default:
// first event time). Bundle m covers [origin + m*dt, origin + (m+1)*dt]; an
// event exactly on an edge goes to the earlier bundle. Empty bundles inside
// the span are kept so the result is time-contiguous.
std::vector<EventBundle> slice_bundles(std::span<const Event> events, Timestamp dt,
                                       std::optional<Timestamp> origin = std::nullopt);

}  // namespace rotorsense
