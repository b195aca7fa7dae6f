#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "circadian/daylight.hpp"
#include "circadian/foraging_env.hpp"

namespace circadian {

/// Per-step record of one test run. Row t (0-based) describes global step
/// t + 1: the agent's position and the daylight bit observed at that step,
/// the action taken there, the reward received for it, and the recurrent
/// activation after processing the step's observation.
struct ActivationTrace {
  int run_id = 0;
  std::string schedule;
  int width = 0;
  std::vector<double> activations;  // T x width, row-major
  std::vector<Cell> positions;
  std::vector<Cell> food;            // food cell observed at the step
  std::vector<unsigned> events;      // crossing flags of the step's move
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<int> daylight;

  int length() const { return static_cast<int>(positions.size()); }
  double activation(int t, int neuron) const {
    return activations[static_cast<std::size_t>(t) * static_cast<std::size_t>(width) + static_cast<std::size_t>(neuron)];
  }
  /// Mean over neurons at each step.
  std::vector<double> mean_activation() const;
  /// One neuron's series.
  std::vector<double> neuron_series(int neuron) const;
};

enum class EventKind { left_home = 0, entered_food_area = 1, left_food_area = 2, entered_home = 3 };
inline constexpr std::array<EventKind, 4> kEventKinds{EventKind::left_home, EventKind::entered_food_area,
                                                       EventKind::left_food_area, EventKind::entered_home};
std::string_view to_string(EventKind k);

struct BehavioralEvent {
  EventKind kind = EventKind::left_home;
  Step t = 0;
  int day = 0;
  int day_rel_step = 0;
};

/// Boundary crossings in a position trace whose first entry is global step
/// `first_step`. An event is attributed to the step at which the agent first
/// occupies the new cell.
std::vector<BehavioralEvent> detect_events(std::span<const Cell> positions, const DaylightSchedule& schedule,
                                           Step first_step = 1);

/// probability[kind][day - 1][day_rel_step - 1] = events per run.
struct EventHistogram {
  int n_days = 0;
  int cycle_len = 0;
  int runs = 0;
  std::array<std::vector<std::vector<double>>, 4> probability;

  double at(EventKind k, int day, int day_rel_step) const {
    return probability[static_cast<int>(k)][static_cast<std::size_t>(day - 1)][static_cast<std::size_t>(day_rel_step - 1)];
  }
};

/// Counts events per (kind, day, day-relative step), divided by the number of
/// runs. Events outside days 1..n_days or beyond cycle_len are dropped.
EventHistogram event_histograms(std::span<const std::vector<BehavioralEvent>> runs, int cycle_len, int n_days);

/// max - min over [begin, end). Throws on an empty window.
double amplitude(std::span<const double> series, std::size_t begin, std::size_t end);
double amplitude(std::span<const double> series);

/// Index of the first amplitude reaching `fraction` of the last one (the
/// onset of oscillation in an amplitude-vs-checkpoint series). nullopt when
/// the series is empty or its last value is not positive.
std::optional<std::size_t> amplitude_onset(std::span<const double> amplitudes, double fraction = 0.5);

/// Pairs (x_t, x_{t-delay}) for every t with t - delay in range.
std::vector<std::array<double, 2>> delay_embedding(std::span<const double> series, int delay = 10);

/// Power at frequencies k / T for k = 0..T/2: |DFT(x - mean)|^2 / T.
std::vector<double> periodogram(std::span<const double> series);

struct SpectralPeak {
  int bin = 0;
  double period = 0.0;  // T / bin
  double power = 0.0;
  double median_power = 0.0;  // over bins 1..T/2
  double ratio() const { return median_power > 0.0 ? power / median_power : (power > 0.0 ? INFINITY : 0.0); }
};

/// Strongest non-zero-frequency bin (lowest bin on ties).
SpectralPeak dominant_peak(std::span<const double> power, int series_length);

/// Rows of equal-length periodograms, one per checkpoint.
struct Spectrogram {
  std::vector<int> episodes;
  std::vector<std::vector<double>> rows;
};

/// Stacks rows in episode order. Throws on length mismatch.
Spectrogram stack_spectrogram(std::vector<int> episodes, std::vector<std::vector<double>> rows);

/// Per-bin mean across neurons' periodograms (linear power).
std::vector<double> mean_power(std::span<const std::vector<double>> periodograms);

/// Lag s in (-cycle/2, cycle/2] maximizing sum_t p(t) * b(t + s) (indices
/// circular); positive s means the perturbed rhythm leads. Both windows are
/// mean-removed here. Returns nullopt when either window is flat.
std::optional<int> estimate_phase_shift(std::span<const double> perturbed, std::span<const double> baseline);

/// Alternative estimator: circular distance between the argmax steps.
std::optional<int> estimate_phase_shift_peak(std::span<const double> perturbed, std::span<const double> baseline);

/// Variance below which a window is treated as having no rhythm.
inline constexpr double kFlatVariance = 1e-9;

}  // namespace circadian
