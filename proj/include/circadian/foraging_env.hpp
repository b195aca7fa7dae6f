#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string_view>

#include "circadian/daylight.hpp"

namespace circadian {

struct Cell {
  int row = 0;
  int col = 0;
  friend constexpr bool operator==(Cell, Cell) = default;
};

enum class Action : int { up = 0, down = 1, left = 2, right = 3, stay = 4 };
inline constexpr int kNumActions = 5;

/// Order of the orientation one-hot: (up, down, left, right).
enum class Orientation : int { up = 0, down = 1, left = 2, right = 3 };

enum class Zone { food, home, transit };

std::string_view to_string(Action a);

/// Fixed 5x5 layout: food area is the top-left 3x3 block, home is the
/// bottom-right cell, everything else is transit.
namespace grid {
inline constexpr int kRows = 5;
inline constexpr int kCols = 5;
inline constexpr int kCells = kRows * kCols;
inline constexpr int kFoodSize = 3;
inline constexpr Cell kHome{4, 4};

constexpr bool on_grid(Cell c) { return c.row >= 0 && c.row < kRows && c.col >= 0 && c.col < kCols; }
constexpr bool in_food_area(Cell c) { return c.row >= 0 && c.row < kFoodSize && c.col >= 0 && c.col < kFoodSize; }
constexpr bool is_home(Cell c) { return c == kHome; }
constexpr Zone zone_of(Cell c) {
  if (is_home(c)) return Zone::home;
  return in_food_area(c) ? Zone::food : Zone::transit;
}
constexpr int cell_index(Cell c) { return c.row * kCols + c.col; }
constexpr Cell food_cell(int i) { return {i / kFoodSize, i % kFoodSize}; }
}  // namespace grid

/// Manhattan distance to home (the grid has no obstacles).
int min_steps_to_home(Cell c);

/// Reward constants of the foraging task.
inline constexpr double kFoodReward = 1.0;
inline constexpr double kNightPenalty = -2.5;

/// Boundary crossings of a single transition, as bit flags.
enum EventFlag : unsigned {
  kLeftHome = 1u << 0,
  kEnteredFoodArea = 1u << 1,
  kLeftFoodArea = 1u << 2,
  kEnteredHome = 1u << 3,
};
using EventFlags = unsigned;

/// Flags for moving from `from` to `to`.
EventFlags crossing_events(Cell from, Cell to);

/// Agent-visible slice of the state.
///
/// `spatial` is the 5x5x2 binary tensor in row-major, channels-last order:
/// index (row * 5 + col) * 2 + channel, channel 0 = agent, channel 1 = food.
struct Observation {
  static constexpr int kSpatialSize = grid::kCells * 2;
  static constexpr int kAuxSize = 5;

  std::array<double, kSpatialSize> spatial{};
  int daylight = 0;
  Orientation orientation = Orientation::up;

  double spatial_at(int channel, int row, int col) const {
    return spatial[static_cast<std::size_t>((row * grid::kCols + col) * 2 + channel)];
  }
  /// Daylight bit followed by the orientation one-hot.
  std::array<double, kAuxSize> aux() const;
};

struct EnvState {
  Cell agent = grid::kHome;
  Cell food{0, 0};
  Orientation orientation = Orientation::up;
  Step t = 1;
  DaylightSchedule schedule = DaylightSchedule::periodic();
  std::mt19937_64 rng;
};

Observation encode_observation(const EnvState& s);

struct StepResult {
  Observation observation;
  double reward = 0.0;
  EventFlags events = 0;
  bool collected = false;
};

/// The foraging grid world. Deterministic given (schedule, seed, actions).
class ForagingEnv {
 public:
  ForagingEnv() = default;

  /// t = 1, agent at home facing up, food uniform over the food area.
  Observation reset(const DaylightSchedule& schedule, std::uint64_t seed);

  /// Moves the agent (off-grid moves are no-ops), collects and respawns food,
  /// advances time and applies the night penalty at the new step.
  StepResult step(Action action);

  const EnvState& state() const { return state_; }
  EnvState& mutable_state() { return state_; }
  Observation observe() const { return encode_observation(state_); }

 private:
  EnvState state_;
};

/// Scripted reference behaviour with access to the schedule: forage along
/// shortest paths while home is still reachable before the next night onset,
/// otherwise head home; stay home at night.
Action oracle_action(const EnvState& s);

}  // namespace circadian
