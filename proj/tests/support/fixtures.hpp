#pragma once

#include <random>

#include "circadian/foraging_env.hpp"
#include "circadian/q_network.hpp"
#include "circadian/trainer.hpp"

namespace fixture {

inline circadian::NetworkConfig tiny_network(int width = 4) {
  circadian::NetworkConfig c;
  c.conv_channels = 2;
  c.fc_widths = {6};
  c.recurrent_width = width;
  return c;
}

// Small, fast trainer settings: warmup and update cadence as in the defaults,
// episode length and counts cut down.
inline circadian::TrainerConfig tiny_trainer(int episodes = 40) {
  circadian::TrainerConfig c;
  c.episodes = episodes;
  c.steps_per_episode = 12;
  c.sample_episodes = 3;
  c.train_steps_per_env_step = 1;
  c.eval_every = 5;
  c.replay_capacity = 20;
  c.day_len = 6;
  c.night_len = 6;
  c.checkpoints = {5, 8, 10};
  return c;
}

// Episode with uniformly random actions.
inline circadian::EpisodeRecord random_episode(int steps, std::uint64_t seed, int index = 0) {
  using namespace circadian;
  ForagingEnv env;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, kNumActions - 1);
  EpisodeRecord e;
  e.episode_index = index;
  e.spatial.resize(Observation::kSpatialSize, steps + 1);
  e.aux.resize(Observation::kAuxSize, steps + 1);
  write_observation(env.reset(DaylightSchedule::periodic(), seed), e.spatial, e.aux, 0);
  for (int t = 0; t < steps; ++t) {
    const int a = pick(rng);
    const auto r = env.step(static_cast<Action>(a));
    e.actions.push_back(a);
    e.rewards.push_back(r.reward);
    write_observation(r.observation, e.spatial, e.aux, t + 1);
  }
  return e;
}

}  // namespace fixture
