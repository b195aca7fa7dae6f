#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "circadian/chrono_analysis.hpp"
#include "circadian/daylight.hpp"
#include "circadian/foraging_env.hpp"
#include "circadian/q_network.hpp"
#include "circadian/store.hpp"

namespace circadian {

/// Either a network with fixed parameters (acting greedily) or the scripted
/// oracle policy, which has no activations.
class Policy {
 public:
  static Policy network(const NetworkConfig& config, NetworkParams params);
  static Policy oracle();

  bool is_oracle() const { return !net_; }
  int width() const { return net_ ? net_->config().recurrent_width : 0; }
  const QNetwork* net() const { return net_.get(); }
  const NetworkParams& params() const { return params_; }

 private:
  std::shared_ptr<const QNetwork> net_;
  NetworkParams params_;
};

/// An in-progress greedy test run. Rows are produced one global step at a
/// time; `branch` copies the complete state so that a perturbed schedule can
/// take over from the next row onwards.
class Rollout {
 public:
  Rollout(const Policy& policy, DaylightSchedule schedule, std::uint64_t seed, int run_id = 0);

  /// Produces rows up to and including global step `last`.
  void run_through(Step last);
  /// Global step of the next row.
  Step next_step() const { return env_.state().t; }
  Rollout branch(DaylightSchedule schedule) const;

  const ActivationTrace& trace() const { return trace_; }
  ActivationTrace take_trace() { return std::move(trace_); }

 private:
  const Policy* policy_;
  ForagingEnv env_;
  nn::RecurrentState state_;
  ActivationTrace trace_;
};

/// Greedy run of `horizon` steps from a zero recurrent state.
ActivationTrace run_test_episode(const Policy& policy, const DaylightSchedule& schedule, int horizon,
                                 std::uint64_t seed, int run_id = 0);

/// Environment seed of test run i.
std::uint64_t run_seed(std::uint64_t base, int run);

/// Runs `fn(i)` for i in [0, n) on up to `jobs` threads.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

// ---------------------------------------------------------------------------
// Protocol results. Each has a writer that emits its CSV files into a
// directory; manifests are written separately by the caller.

/// Full per-step traces kept by the behavior protocol (runs 0..9).
inline constexpr int kSampleTraces = 10;

struct BehaviorResult {
  int runs = 0;
  EventHistogram histogram;
  std::vector<int> daylight;
  std::vector<double> mean_activation;
  std::vector<ActivationTrace> sample_traces;
};
BehaviorResult behavior_experiment(const Policy& policy, const ProtocolConfig& cfg);
void write_behavior(const std::filesystem::path& dir, const BehaviorResult& r);

/// One row per step: run_id, t, day_rel_step, daylight, agent and food cells,
/// action, reward, event flags.
void write_trace_csv(const std::filesystem::path& path, std::span<const ActivationTrace> traces,
                     const DaylightSchedule& schedule);

struct EndogeneityResult {
  int clamp_value = 1;
  int clamp_start = 161;
  std::string schedule;
  std::vector<int> daylight;                         // per step of run 0
  std::vector<double> mean_activation;               // per step, over neurons and runs
  std::vector<std::vector<double>> neuron_mean;      // [neuron][step], over runs
  EventHistogram exits;                              // left_food_area only
  std::vector<double> mean_periodogram;              // of mean_activation over the clamp window
  std::vector<std::vector<double>> neuron_periodograms;
  int window_length = 0;
  SpectralPeak peak;
};
EndogeneityResult endogeneity_experiment(const Policy& policy, int clamp_value, const ProtocolConfig& cfg);
void write_endogeneity(const std::filesystem::path& dir, const EndogeneityResult& r);

/// A checkpoint's parameters tagged with its episode index.
struct CheckpointRef {
  int episode = 0;
  std::filesystem::path path;
};
/// Checkpoints `episode_NNNNNN.ckpt` found in `dir`, sorted by episode.
std::vector<CheckpointRef> list_checkpoints(const std::filesystem::path& dir);
std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int episode);

struct BifurcationResult {
  int neuron = -1;
  int clamp_value = 1;
  int delay = 10;
  std::vector<int> episodes;
  std::vector<double> amplitudes;
  std::vector<std::vector<std::array<double, 2>>> pairs;
  std::vector<int> missing;
};
/// One clamp run per checkpoint; series = chosen neuron or layer mean.
BifurcationResult bifurcation_scan(const std::vector<CheckpointRef>& checkpoints, std::span<const int> episodes,
                                   int clamp_value, const ProtocolConfig& cfg);
void write_bifurcation(const std::filesystem::path& dir, const BifurcationResult& r);

struct SpectrogramResult {
  int neuron = 0;
  int clamp_value = 1;
  int window_length = 0;
  Spectrogram neuron_rows;
  Spectrogram mean_rows;
  std::vector<int> missing;
};
SpectrogramResult spectrogram_scan(const std::vector<CheckpointRef>& checkpoints, std::span<const int> episodes,
                                   int clamp_value, const ProtocolConfig& cfg);
void write_spectrogram(const std::filesystem::path& dir, const SpectrogramResult& r);

inline constexpr std::array<std::string_view, 7> kJetlagVariants{
    "baseline", "extend_day2_daytime_10", "extend_day2_night_10", "reverse",
    "period_23_23", "ratio_17_23", "ratio_23_17"};

/// Schedule of a jet-lag variant; perturbations start with day 2.
DaylightSchedule jetlag_schedule(std::string_view variant);

struct JetlagResult {
  std::string variant;
  std::string schedule;
  int horizon = 0;
  int n_days = 8;
  int cycle_len = 40;  // longest day in the horizon
  std::vector<int> daylight;
  std::vector<double> mean_activation;
  EventHistogram exits;
  /// Median day-relative step of each run's last food-area exit, per day
  /// (NaN when no run exits that day).
  std::vector<double> median_exit;
  std::vector<double> baseline_median_exit;
  std::vector<double> periodogram;  // mean activation from day 3 on
  int periodogram_length = 0;
};
JetlagResult jetlag_experiment(const Policy& policy, std::string_view variant, const ProtocolConfig& cfg);
void write_jetlag(const std::filesystem::path& dir, const JetlagResult& r);

enum class PrcMode { light_pulse_on_night, dark_pulse_on_day };
std::string_view to_string(PrcMode m);

struct PrcResult {
  PrcMode mode = PrcMode::light_pulse_on_night;
  int width = 0;
  int runs = 0;
  std::vector<int> pulse_steps;            // global steps 161..200
  /// shift[p][k]: mean shift for pulse position p and neuron k; entry
  /// [p][width] is the mean over neurons. NaN when every run was undefined.
  std::vector<std::vector<double>> shift;
  std::vector<std::vector<int>> excluded;  // undefined runs per [p][k]
  /// Control-vs-control shifts per neuron (mean over seed pairs; NaN when undefined).
  std::vector<double> null_shift;
  int rhythmic_neurons = 0;
  int null_within_one = 0;
};
PrcResult prc_experiment(const Policy& policy, PrcMode mode, const ProtocolConfig& cfg);
void write_prc(const std::filesystem::path& dir, const PrcResult& r);

struct TrainingCurve {
  std::vector<int> episodes;
  std::vector<double> mean;
  std::vector<double> stddev;
  bool truncated = false;
};
/// Central moving average (window clipped at the ends) per seed, then the
/// mean and population standard deviation across seeds.
TrainingCurve training_curve(const std::vector<std::vector<EvalRecord>>& logs, int window = 11);
std::vector<EvalRecord> read_eval_csv(const std::filesystem::path& path);
void write_training_curve(const std::filesystem::path& dir, const TrainingCurve& c);

struct EvalSummary {
  std::vector<double> rewards;
  double mean = 0.0;
};
EvalSummary evaluate_policy(const Policy& policy, const DaylightSchedule& schedule, int runs, int steps,
                            std::uint64_t seed, int jobs);

}  // namespace circadian
