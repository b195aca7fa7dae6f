#include "circadian/foraging_env.hpp"

#include <cstdlib>

namespace circadian {

namespace {

Cell moved(Cell c, Action a) {
  switch (a) {
    case Action::up: --c.row; break;
    case Action::down: ++c.row; break;
    case Action::left: --c.col; break;
    case Action::right: ++c.col; break;
    case Action::stay: break;
  }
  return c;
}

Cell place_food(std::mt19937_64& rng, Cell exclude) {
  constexpr int kFoodCells = grid::kFoodSize * grid::kFoodSize;
  if (!grid::in_food_area(exclude)) {
    std::uniform_int_distribution<int> pick(0, kFoodCells - 1);
    return grid::food_cell(pick(rng));
  }
  // Uniform over the remaining eight cells.
  std::uniform_int_distribution<int> pick(0, kFoodCells - 2);
  int i = pick(rng);
  if (i >= exclude.row * grid::kFoodSize + exclude.col) ++i;
  return grid::food_cell(i);
}

Action toward(Cell from, Cell to) {
  if (from.row > to.row) return Action::up;
  if (from.row < to.row) return Action::down;
  if (from.col > to.col) return Action::left;
  if (from.col < to.col) return Action::right;
  return Action::stay;
}

}  // namespace

std::string_view to_string(Action a) {
  switch (a) {
    case Action::up: return "up";
    case Action::down: return "down";
    case Action::left: return "left";
    case Action::right: return "right";
    case Action::stay: return "stay";
  }
  return "?";
}

int min_steps_to_home(Cell c) {
  return std::abs(c.row - grid::kHome.row) + std::abs(c.col - grid::kHome.col);
}

EventFlags crossing_events(Cell from, Cell to) {
  EventFlags e = 0;
  if (grid::is_home(from) && !grid::is_home(to)) e |= kLeftHome;
  if (!grid::is_home(from) && grid::is_home(to)) e |= kEnteredHome;
  if (!grid::in_food_area(from) && grid::in_food_area(to)) e |= kEnteredFoodArea;
  if (grid::in_food_area(from) && !grid::in_food_area(to)) e |= kLeftFoodArea;
  return e;
}

std::array<double, Observation::kAuxSize> Observation::aux() const {
  std::array<double, kAuxSize> a{};
  a[0] = daylight;
  a[1 + static_cast<int>(orientation)] = 1.0;
  return a;
}

Observation encode_observation(const EnvState& s) {
  Observation o;
  o.spatial[static_cast<std::size_t>(grid::cell_index(s.agent) * 2 + 0)] = 1.0;
  o.spatial[static_cast<std::size_t>(grid::cell_index(s.food) * 2 + 1)] = 1.0;
  o.daylight = s.schedule.signal_at(s.t);
  o.orientation = s.orientation;
  return o;
}

Observation ForagingEnv::reset(const DaylightSchedule& schedule, std::uint64_t seed) {
  state_ = EnvState{};
  state_.schedule = schedule;
  state_.rng.seed(seed);
  state_.food = place_food(state_.rng, state_.agent);
  return observe();
}

StepResult ForagingEnv::step(Action action) {
  StepResult r;
  const Cell from = state_.agent;
  const Cell to = moved(from, action);
  if (grid::on_grid(to)) state_.agent = to;
  if (action != Action::stay) state_.orientation = static_cast<Orientation>(static_cast<int>(action));
  r.events = crossing_events(from, state_.agent);

  ++state_.t;
  if (state_.agent == state_.food) {
    r.reward += kFoodReward;
    r.collected = true;
    state_.food = place_food(state_.rng, state_.agent);
  }
  if (state_.schedule.signal_at(state_.t) == 0 && !grid::is_home(state_.agent)) r.reward += kNightPenalty;
  r.observation = observe();
  return r;
}

Action oracle_action(const EnvState& s) {
  const DaylightSchedule& sched = s.schedule;
  if (sched.signal_at(s.t + 1) == 0) return toward(s.agent, grid::kHome);
  const Step night = sched.next_night_onset(s.t);
  const Action forage = toward(s.agent, s.food);
  if (night == 0) return forage;
  const Cell next = grid::on_grid(moved(s.agent, forage)) ? moved(s.agent, forage) : s.agent;
  if (s.t + 1 + min_steps_to_home(next) <= night) return forage;
  return toward(s.agent, grid::kHome);
}

}  // namespace circadian
