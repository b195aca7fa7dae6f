#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "circadian/daylight.hpp"
#include "circadian/foraging_env.hpp"
#include "circadian/nn/optimizer.hpp"
#include "circadian/q_network.hpp"

namespace circadian {

/// Episodes at which a checkpoint is written: every episode inside
/// [dense_begin, dense_end], every `every` episodes, plus episode 0 and the
/// final episode.
struct CheckpointSchedule {
  int dense_begin = 33;
  int dense_end = 132;
  int every = 100;

  bool due(int episode, int final_episode) const;
  friend bool operator==(const CheckpointSchedule&, const CheckpointSchedule&) = default;
};

struct TrainerConfig {
  int episodes = 37500;
  int steps_per_episode = 160;
  double gamma = 0.99;
  double learning_rate = 0.001;
  double target_beta = 0.001;
  int replay_capacity = 1000;
  int sample_episodes = 16;
  int train_steps_per_env_step = 4;
  int warmup_episodes = 32;
  double epsilon_start = 1.0;
  double epsilon_end = 0.1;
  double epsilon_anneal_fraction = 0.75;
  int eval_every = 10;
  /// Truncation length for backpropagation through time; 0 = whole episode.
  int bptt_length = 0;
  /// Bootstrap from the target network at an episode's last step instead of
  /// treating it as terminal.
  bool bootstrap_final_step = false;
  CheckpointSchedule checkpoints;
  nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
  std::uint64_t seed = 1;
  /// Daylight cycle used for training and evaluation episodes.
  int day_len = 20;
  int night_len = 20;

  long long total_env_steps() const { return static_cast<long long>(episodes) * steps_per_episode; }
  /// Throws std::invalid_argument on inconsistent values.
  void validate() const;
  friend bool operator==(const TrainerConfig&, const TrainerConfig&) = default;
};

/// Linear from epsilon_start at step 0 to epsilon_end at
/// anneal_fraction * total steps, constant afterwards.
double epsilon_at(long long env_step, const TrainerConfig& config);

/// One complete training episode. Observations hold steps + 1 columns (the
/// observation after reset followed by one per step); actions and rewards
/// hold one entry per step.
struct EpisodeRecord {
  int episode_index = 0;
  Matrix spatial;  // 50 x (steps + 1)
  Matrix aux;      // 5 x (steps + 1)
  std::vector<int> actions;
  std::vector<double> rewards;

  int steps() const { return static_cast<int>(actions.size()); }
};

/// Episode-level FIFO replay memory.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity);

  /// Appends, evicting the oldest episode when full.
  void push(EpisodeRecord episode);
  std::size_t size() const { return episodes_.size(); }
  std::size_t capacity() const { return capacity_; }
  /// i = 0 is the oldest stored episode.
  const EpisodeRecord& at(std::size_t i) const { return episodes_.at(i); }

  /// Indices drawn uniformly with replacement.
  std::vector<std::size_t> sample_indices(std::size_t count, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::deque<EpisodeRecord> episodes_;
};

/// Packs episodes time-major into a network batch. With `with_final` the
/// observation after the last step is included (steps + 1 columns per episode).
ObservationBatch pack_episodes(std::span<const EpisodeRecord* const> episodes, bool with_final);

/// y (steps x batch, time-major like the batch columns) from the target
/// network's Q-values over steps + 1 observations.
Matrix compute_targets(std::span<const EpisodeRecord* const> episodes, const Matrix& target_q, double gamma,
                       bool bootstrap_final_step);

struct LossResult {
  double loss = 0.0;     // mean squared TD error plus penalty
  double penalty = 0.0;  // regularization part
};

/// Mean of (y - Q(h, a))^2 over every (episode, step) pair, with gradients
/// accumulated into params (which are zeroed first).
LossResult loss_and_gradients(const QNetwork& net, NetworkParams& params,
                              std::span<const EpisodeRecord* const> episodes, const Matrix& targets,
                              int bptt_length = 0);

/// target <- beta * online + (1 - beta) * target, elementwise.
void ema_update(NetworkParams& target, const NetworkParams& online, double beta);

struct EpisodeStats {
  int episode = 0;
  double train_reward = 0.0;
  double mean_loss = 0.0;  // NaN-free: 0 when no update ran
  long long updates = 0;
  double epsilon = 0.0;    // at the episode's last step
};

struct EvalRecord {
  int episode = 0;
  double reward = 0.0;
  double mean_loss = 0.0;  // over the training episodes since the previous evaluation
  double epsilon = 0.0;
};

struct TrainingLog {
  std::vector<EpisodeStats> episodes;
  std::vector<EvalRecord> evaluations;

  void write_eval_csv(std::ostream& os) const;
  void write_episode_csv(std::ostream& os) const;
  friend bool operator==(const TrainingLog&, const TrainingLog&);
};

/// State handed to the checkpoint callback.
struct TrainingSnapshot {
  int episode = 0;
  const NetworkParams& online;
  const NetworkParams& target;
  const TrainingLog& log;
  std::string rng_state;
};

using CheckpointSink = std::function<void(const TrainingSnapshot&)>;
using ProgressSink = std::function<void(const EpisodeStats&, const EvalRecord*)>;

struct TrainingResult {
  NetworkParams online;
  NetworkParams target;
  TrainingLog log;
};

/// Greedy episode on the periodic training schedule. Returns total reward.
double evaluate_greedy(const QNetwork& net, const NetworkParams& params, const DaylightSchedule& schedule,
                       int steps, std::uint64_t seed);

/// Runs the full training loop. Episode indices are 1-based; the checkpoint
/// sink also receives episode 0 (the initial parameters).
TrainingResult train(const NetworkConfig& net_config, const TrainerConfig& config,
                     const CheckpointSink& on_checkpoint = {}, const ProgressSink& on_progress = {});

/// Reproducible per-purpose seed from a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index);

}  // namespace circadian
