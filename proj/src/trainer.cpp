#include "circadian/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace circadian {

bool CheckpointSchedule::due(int episode, int final_episode) const {
  if (episode == 0 || episode == final_episode) return true;
  if (episode >= dense_begin && episode <= dense_end) return true;
  return every > 0 && episode % every == 0;
}

void TrainerConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid trainer config: ") + what);
  };
  require(episodes >= 1, "episodes must be >= 1");
  require(steps_per_episode >= 1, "steps_per_episode must be >= 1");
  require(gamma >= 0.0 && gamma <= 1.0, "gamma must lie in [0, 1]");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(target_beta > 0.0 && target_beta <= 1.0, "target_beta must lie in (0, 1]");
  require(replay_capacity >= 1, "replay_capacity must be >= 1");
  require(sample_episodes >= 1, "sample_episodes must be >= 1");
  require(train_steps_per_env_step >= 0, "train_steps_per_env_step must be >= 0");
  require(warmup_episodes >= 0, "warmup_episodes must be >= 0");
  require(epsilon_end >= 0.0 && epsilon_end <= epsilon_start && epsilon_start <= 1.0,
          "need 0 <= epsilon_end <= epsilon_start <= 1");
  require(epsilon_anneal_fraction > 0.0 && epsilon_anneal_fraction <= 1.0,
          "epsilon_anneal_fraction must lie in (0, 1]");
  require(eval_every >= 1, "eval_every must be >= 1");
  require(bptt_length >= 0, "bptt_length must be >= 0");
  require(day_len >= 1 && night_len >= 1, "day_len and night_len must be >= 1");
}

double epsilon_at(long long env_step, const TrainerConfig& config) {
  const double horizon = config.epsilon_anneal_fraction * static_cast<double>(config.total_env_steps());
  if (static_cast<double>(env_step) >= horizon) return config.epsilon_end;
  const double frac = static_cast<double>(env_step) / horizon;
  return config.epsilon_start + frac * (config.epsilon_end - config.epsilon_start);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
  // splitmix64 over a mix of the three words
  std::uint64_t z = master * 0x9E3779B97F4A7C15ULL ^ (stream + 0x632BE59BD9B4E019ULL) * 0xBF58476D1CE4E5B9ULL ^
                    (index + 1) * 0x94D049BB133111EBULL;
  for (int i = 0; i < 2; ++i) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
  }
  return z;
}

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
}

void ReplayMemory::push(EpisodeRecord episode) {
  if (episodes_.size() == capacity_) episodes_.pop_front();
  episodes_.push_back(std::move(episode));
}

std::vector<std::size_t> ReplayMemory::sample_indices(std::size_t count, std::mt19937_64& rng) const {
  if (episodes_.empty()) throw std::logic_error("sampling from empty replay memory");
  std::uniform_int_distribution<std::size_t> pick(0, episodes_.size() - 1);
  std::vector<std::size_t> out(count);
  for (auto& i : out) i = pick(rng);
  return out;
}

ObservationBatch pack_episodes(std::span<const EpisodeRecord* const> episodes, bool with_final) {
  if (episodes.empty()) throw std::invalid_argument("no episodes to pack");
  const int steps = episodes.front()->steps();
  const int cols = with_final ? steps + 1 : steps;
  const auto B = static_cast<Eigen::Index>(episodes.size());
  ObservationBatch batch;
  batch.steps = cols;
  batch.batch = B;
  batch.spatial.resize(Observation::kSpatialSize, cols * B);
  batch.aux.resize(Observation::kAuxSize, cols * B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const EpisodeRecord& e = *episodes[static_cast<std::size_t>(b)];
    if (e.steps() != steps) throw std::invalid_argument("episodes differ in length");
    for (int t = 0; t < cols; ++t) {
      batch.spatial.col(t * B + b) = e.spatial.col(t);
      batch.aux.col(t * B + b) = e.aux.col(t);
    }
  }
  return batch;
}

Matrix compute_targets(std::span<const EpisodeRecord* const> episodes, const Matrix& target_q, double gamma,
                       bool bootstrap_final_step) {
  const auto B = static_cast<Eigen::Index>(episodes.size());
  const int T = episodes.front()->steps();
  if (target_q.cols() != (T + 1) * B) throw std::invalid_argument("target Q must cover steps + 1 observations");
  Matrix y(T, B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const EpisodeRecord& e = *episodes[static_cast<std::size_t>(b)];
    for (int t = 0; t < T; ++t) {
      const double r = e.rewards[static_cast<std::size_t>(t)];
      const bool terminal = t == T - 1 && !bootstrap_final_step;
      y(t, b) = terminal ? r : r + gamma * target_q.col((t + 1) * B + b).maxCoeff();
    }
  }
  return y;
}

namespace {

LossResult loss_from_batch(const QNetwork& net, NetworkParams& params, std::span<const EpisodeRecord* const> episodes,
                           const ObservationBatch& online_batch, const Matrix& targets, int bptt_length) {
  const auto B = online_batch.batch;
  const int T = online_batch.steps;
  const auto trace = net.forward(params, online_batch, true);
  const double n = static_cast<double>(T * B);
  Matrix dq = Matrix::Zero(kNumActions, T * B);
  double sq = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    const EpisodeRecord& e = *episodes[static_cast<std::size_t>(b)];
    for (int t = 0; t < T; ++t) {
      const Eigen::Index col = t * B + b;
      const int a = e.actions[static_cast<std::size_t>(t)];
      const double err = trace.q(a, col) - targets(t, b);
      sq += err * err;
      dq(a, col) = 2.0 * err / n;
    }
  }
  params.zero_grad();
  net.backward(params, trace, dq, bptt_length);
  LossResult out;
  const auto& cfg = net.config();
  if (cfg.l1 != 0.0 || cfg.l2 != 0.0) {
    std::vector<nn::ParamArray*> reg;
    for (auto k : net.regularized_arrays()) reg.push_back(&params[k]);
    out.penalty = nn::apply_regularization(reg, cfg.l1, cfg.l2);
  }
  out.loss = sq / n + out.penalty;
  return out;
}

ObservationBatch leading_steps(const ObservationBatch& full, int steps) {
  ObservationBatch out;
  out.steps = steps;
  out.batch = full.batch;
  out.spatial = full.spatial.leftCols(steps * full.batch);
  out.aux = full.aux.leftCols(steps * full.batch);
  return out;
}

}  // namespace

LossResult loss_and_gradients(const QNetwork& net, NetworkParams& params,
                              std::span<const EpisodeRecord* const> episodes, const Matrix& targets,
                              int bptt_length) {
  const ObservationBatch batch = pack_episodes(episodes, false);
  return loss_from_batch(net, params, episodes, batch, targets, bptt_length);
}

void ema_update(NetworkParams& target, const NetworkParams& online, double beta) {
  if (target.size() != online.size()) throw std::invalid_argument("parameter sets differ in structure");
  for (std::size_t k = 0; k < target.size(); ++k) {
    auto& t = target[k].value;
    const auto& o = online[k].value;
    if (t.rows() != o.rows() || t.cols() != o.cols()) throw std::invalid_argument("parameter shapes differ");
    t += beta * (o - t);
  }
}

void TrainingLog::write_eval_csv(std::ostream& os) const {
  std::ostringstream line;
  line.precision(17);
  line << "episode,eval_reward,mean_loss,epsilon\n";
  for (const auto& e : evaluations) line << e.episode << ',' << e.reward << ',' << e.mean_loss << ',' << e.epsilon << '\n';
  os << line.str();
}

void TrainingLog::write_episode_csv(std::ostream& os) const {
  std::ostringstream line;
  line.precision(17);
  line << "episode,train_reward,mean_loss,updates,epsilon\n";
  for (const auto& e : episodes)
    line << e.episode << ',' << e.train_reward << ',' << e.mean_loss << ',' << e.updates << ',' << e.epsilon << '\n';
  os << line.str();
}

bool operator==(const TrainingLog& a, const TrainingLog& b) {
  auto same_ep = [](const EpisodeStats& x, const EpisodeStats& y) {
    return x.episode == y.episode && x.train_reward == y.train_reward && x.mean_loss == y.mean_loss &&
           x.updates == y.updates && x.epsilon == y.epsilon;
  };
  auto same_ev = [](const EvalRecord& x, const EvalRecord& y) {
    return x.episode == y.episode && x.reward == y.reward && x.mean_loss == y.mean_loss && x.epsilon == y.epsilon;
  };
  return std::equal(a.episodes.begin(), a.episodes.end(), b.episodes.begin(), b.episodes.end(), same_ep) &&
         std::equal(a.evaluations.begin(), a.evaluations.end(), b.evaluations.begin(), b.evaluations.end(), same_ev);
}

double evaluate_greedy(const QNetwork& net, const NetworkParams& params, const DaylightSchedule& schedule,
                       int steps, std::uint64_t seed) {
  ForagingEnv env;
  Observation o = env.reset(schedule, seed);
  auto state = net.initial_state(1);
  double total = 0.0;
  for (int s = 0; s < steps; ++s) {
    const QOutput q = net.step(params, o, state);
    const auto r = env.step(static_cast<Action>(greedy_action(q.q)));
    total += r.reward;
    o = r.observation;
  }
  return total;
}

TrainingResult train(const NetworkConfig& net_config, const TrainerConfig& config, const CheckpointSink& on_checkpoint,
                     const ProgressSink& on_progress) {
  config.validate();
  nn::keep_heap_blocks();
  const QNetwork net(net_config);
  TrainingResult result;
  result.online = net.init_params(derive_seed(config.seed, 0, 0));
  result.target = result.online;
  NetworkParams& online = result.online;
  NetworkParams& target = result.target;
  TrainingLog& log = result.log;

  nn::OptimizerSettings opt_settings;
  opt_settings.kind = config.optimizer;
  opt_settings.learning_rate = config.learning_rate;
  nn::Optimizer optimizer(opt_settings);

  ReplayMemory replay(static_cast<std::size_t>(config.replay_capacity));
  std::mt19937_64 action_rng(derive_seed(config.seed, 2, 0));
  std::mt19937_64 replay_rng(derive_seed(config.seed, 3, 0));
  const auto schedule = DaylightSchedule::periodic(config.day_len, config.night_len);
  const int T = config.steps_per_episode;

  auto rng_state = [&] {
    std::ostringstream os;
    os << action_rng << ' ' << replay_rng;
    return os.str();
  };
  auto checkpoint = [&](int episode) {
    if (on_checkpoint) on_checkpoint(TrainingSnapshot{episode, online, target, log, rng_state()});
  };
  checkpoint(0);

  long long env_step = 0;
  double loss_since_eval = 0.0;
  long long updates_since_eval = 0;
  std::vector<const EpisodeRecord*> picked(static_cast<std::size_t>(config.sample_episodes));
  ForagingEnv env;

  for (int episode = 1; episode <= config.episodes; ++episode) {
    EpisodeRecord rec;
    rec.episode_index = episode;
    rec.spatial.resize(Observation::kSpatialSize, T + 1);
    rec.aux.resize(Observation::kAuxSize, T + 1);
    rec.actions.reserve(static_cast<std::size_t>(T));
    rec.rewards.reserve(static_cast<std::size_t>(T));
    Observation o = env.reset(schedule, derive_seed(config.seed, 1, static_cast<std::uint64_t>(episode)));
    write_observation(o, rec.spatial, rec.aux, 0);
    auto state = net.initial_state(1);
    EpisodeStats stats;
    stats.episode = episode;
    double loss_sum = 0.0;
    const bool learning = episode > config.warmup_episodes;

    for (int s = 0; s < T; ++s) {
      const double eps = epsilon_at(env_step, config);
      stats.epsilon = eps;
      const QOutput q = net.step(online, o, state);
      const Action a = select_action(q.q, eps, action_rng);
      const auto r = env.step(a);
      o = r.observation;
      rec.actions.push_back(static_cast<int>(a));
      rec.rewards.push_back(r.reward);
      write_observation(o, rec.spatial, rec.aux, s + 1);
      stats.train_reward += r.reward;
      ++env_step;

      if (learning) {
        for (int k = 0; k < config.train_steps_per_env_step; ++k) {
          const auto idx = replay.sample_indices(picked.size(), replay_rng);
          for (std::size_t i = 0; i < idx.size(); ++i) picked[i] = &replay.at(idx[i]);
          const ObservationBatch full = pack_episodes(picked, true);
          const auto target_trace = net.forward(target, full, false);
          const Matrix y = compute_targets(picked, target_trace.q, config.gamma, config.bootstrap_final_step);
          const ObservationBatch head = leading_steps(full, full.steps - 1);
          const LossResult lr = loss_from_batch(net, online, picked, head, y, config.bptt_length);
          optimizer.step(online.arrays);
          loss_sum += lr.loss;
          ++stats.updates;
        }
      }
      ema_update(target, online, config.target_beta);
    }
    stats.mean_loss = stats.updates > 0 ? loss_sum / static_cast<double>(stats.updates) : 0.0;
    loss_since_eval += loss_sum;
    updates_since_eval += stats.updates;
    replay.push(std::move(rec));
    log.episodes.push_back(stats);

    const EvalRecord* eval = nullptr;
    if (episode % config.eval_every == 0) {
      EvalRecord ev;
      ev.episode = episode;
      ev.reward = evaluate_greedy(net, online, schedule, T, derive_seed(config.seed, 4, static_cast<std::uint64_t>(episode)));
      ev.mean_loss = updates_since_eval > 0 ? loss_since_eval / static_cast<double>(updates_since_eval) : 0.0;
      ev.epsilon = stats.epsilon;
      log.evaluations.push_back(ev);
      eval = &log.evaluations.back();
      loss_since_eval = 0.0;
      updates_since_eval = 0;
    }
    if (on_progress) on_progress(stats, eval);
    if (config.checkpoints.due(episode, config.episodes)) checkpoint(episode);
  }
  return result;
}

}  // namespace circadian
