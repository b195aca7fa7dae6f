#include <doctest.h>

#include <set>

#include "circadian/foraging_env.hpp"
#include "oracles.hpp"

using namespace circadian;

namespace {

void check_observation(const Observation& o, const EnvState& s) {
  double agent = 0.0, food = 0.0;
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c) {
      agent += o.spatial_at(0, r, c);
      food += o.spatial_at(1, r, c);
    }
  REQUIRE(agent == 1.0);
  REQUIRE(food == 1.0);
  REQUIRE(o.spatial_at(0, s.agent.row, s.agent.col) == 1.0);
  REQUIRE(o.spatial_at(1, s.food.row, s.food.col) == 1.0);
  const auto aux = o.aux();
  REQUIRE(aux[1] + aux[2] + aux[3] + aux[4] == 1.0);
  REQUIRE(aux[0] == s.schedule.signal_at(s.t));
}

}  // namespace

TEST_CASE("layout") {
  int food = 0, home = 0, transit = 0;
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c) {
      switch (grid::zone_of({r, c})) {
        case Zone::food: ++food; break;
        case Zone::home: ++home; break;
        case Zone::transit: ++transit; break;
      }
    }
  CHECK(food == 9);
  CHECK(home == 1);
  CHECK(transit == 15);
  CHECK(min_steps_to_home({2, 2}) == 4);
  CHECK(min_steps_to_home({4, 4}) == 0);
  CHECK(min_steps_to_home({0, 0}) == 8);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c) REQUIRE(min_steps_to_home({r, c}) == oracle::bfs_steps(r, c));
}

TEST_CASE("reset") {
  ForagingEnv a, b;
  const auto oa = a.reset(DaylightSchedule::periodic(), 7);
  const auto ob = b.reset(DaylightSchedule::periodic(), 7);
  CHECK(oa.spatial == ob.spatial);
  CHECK(a.state().t == 1);
  CHECK(a.state().agent == grid::kHome);
  CHECK(a.state().orientation == Orientation::up);
  CHECK(oa.daylight == 1);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    a.reset(DaylightSchedule::periodic(), seed);
    REQUIRE(grid::in_food_area(a.state().food));
  }
}

TEST_CASE("observation encoding") {
  EnvState s;
  s.food = {0, 0};
  s.orientation = Orientation::right;
  const auto o = encode_observation(s);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c) {
      REQUIRE(o.spatial_at(0, r, c) == (r == 4 && c == 4 ? 1.0 : 0.0));
      REQUIRE(o.spatial_at(1, r, c) == (r == 0 && c == 0 ? 1.0 : 0.0));
    }
  const auto aux = o.aux();
  CHECK(aux[1] == 0.0);
  CHECK(aux[2] == 0.0);
  CHECK(aux[3] == 0.0);
  CHECK(aux[4] == 1.0);
  s.t = 25;
  CHECK(encode_observation(s).daylight == 0);
}

TEST_CASE("reward cases") {
  ForagingEnv env;
  env.reset(DaylightSchedule::periodic(), 1);
  auto& s = env.mutable_state();

  SUBCASE("daytime collection") {
    s.agent = {1, 1};
    s.food = {1, 2};
    const auto r = env.step(Action::right);
    CHECK(r.reward == 1.0);
    CHECK(r.collected);
    CHECK(grid::in_food_area(env.state().food));
    CHECK_FALSE(env.state().food == Cell{1, 2});
  }
  SUBCASE("night in transit") {
    s.t = 25;
    s.agent = {3, 3};
    CHECK(env.step(Action::stay).reward == -2.5);
  }
  SUBCASE("night at home") {
    s.t = 25;
    CHECK(env.step(Action::stay).reward == 0.0);
  }
  SUBCASE("night collection") {
    s.t = 25;
    s.agent = {0, 0};
    s.food = {0, 1};
    CHECK(env.step(Action::right).reward == -1.5);
  }
  SUBCASE("penalty uses the post-move step") {
    s.t = 20;  // moving into step 21, the first night step
    s.agent = {3, 3};
    CHECK(env.step(Action::stay).reward == -2.5);
    s.t = 40;  // moving into step 41, daytime again
    CHECK(env.step(Action::stay).reward == 0.0);
  }
  SUBCASE("off-grid move is a no-op that still turns") {
    s.agent = {4, 4};
    env.step(Action::right);
    CHECK(env.state().agent == Cell{4, 4});
    CHECK(env.state().orientation == Orientation::right);
    env.step(Action::stay);
    CHECK(env.state().orientation == Orientation::right);
  }
}

TEST_CASE("crossing events") {
  CHECK(crossing_events({4, 4}, {3, 4}) == kLeftHome);
  CHECK(crossing_events({3, 4}, {4, 4}) == kEnteredHome);
  CHECK(crossing_events({3, 2}, {2, 2}) == kEnteredFoodArea);
  CHECK(crossing_events({2, 2}, {2, 3}) == kLeftFoodArea);
  CHECK(crossing_events({2, 2}, {2, 2}) == 0u);
}

TEST_CASE("random walks keep every invariant") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> pick(0, 4);
  const std::set<double> allowed{0.0, 1.0, -2.5, -1.5};
  for (int episode = 0; episode < 50; ++episode) {
    ForagingEnv env;
    check_observation(env.reset(DaylightSchedule::periodic(), episode), env.state());
    for (int t = 0; t < 320; ++t) {
      const Cell before = env.state().agent;
      const auto r = env.step(static_cast<Action>(pick(rng)));
      REQUIRE(allowed.count(r.reward) == 1);
      REQUIRE(grid::on_grid(env.state().agent));
      REQUIRE(grid::in_food_area(env.state().food));
      if (r.collected) REQUIRE_FALSE(env.state().food == env.state().agent);
      REQUIRE(r.events == crossing_events(before, env.state().agent));
      check_observation(r.observation, env.state());
    }
  }
}

TEST_CASE("determinism of (seed, schedule, actions)") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> pick(0, 4);
  std::vector<Action> actions;
  for (int i = 0; i < 400; ++i) actions.push_back(static_cast<Action>(pick(rng)));
  auto run = [&] {
    ForagingEnv env;
    env.reset(DaylightSchedule::phase_shifted(DaylightSchedule::periodic(), 2, ShiftKind::extend_night, 10), 99);
    std::vector<double> trace;
    for (Action a : actions) {
      const auto r = env.step(a);
      trace.push_back(r.reward);
      trace.push_back(env.state().agent.row * 5 + env.state().agent.col);
      trace.push_back(env.state().food.row * 5 + env.state().food.col);
      trace.push_back(r.events);
    }
    return trace;
  };
  CHECK(run() == run());
}

TEST_CASE("respawn is uniform over the other eight cells") {
  // Collect from the centre repeatedly; every other food cell should be hit
  // equally often.
  ForagingEnv env;
  env.reset(DaylightSchedule::periodic(), 5);
  std::vector<long> counts(9, 0);
  const int draws = 90000;
  for (int i = 0; i < draws; ++i) {
    auto& s = env.mutable_state();
    s.t = 1;
    s.agent = {1, 0};
    s.food = {1, 1};
    env.step(Action::right);
    const Cell f = env.state().food;
    ++counts[static_cast<std::size_t>(f.row * 3 + f.col)];
  }
  CHECK(counts[4] == 0);
  counts.erase(counts.begin() + 4);
  // chi-square with 7 degrees of freedom; 24.3 is the 0.001 quantile
  CHECK(oracle::chi_square_uniform(counts) < 24.3);
}

TEST_CASE("oracle policy never pays a penalty on the periodic schedule") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ForagingEnv env;
    env.reset(DaylightSchedule::periodic(), seed);
    double penalties = 0.0, total = 0.0;
    for (int t = 0; t < 160; ++t) {
      const auto r = env.step(oracle_action(env.state()));
      if (r.reward < 0) penalties += r.reward;
      total += r.reward;
    }
    REQUIRE(penalties == 0.0);
    REQUIRE(total > 0.0);
  }
}
