#include "circadian/chrono_analysis.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numeric>
#include <stdexcept>

namespace circadian {

std::vector<double> ActivationTrace::mean_activation() const {
  std::vector<double> out(static_cast<std::size_t>(length()), 0.0);
  for (int t = 0; t < length(); ++t) {
    double s = 0.0;
    for (int k = 0; k < width; ++k) s += activation(t, k);
    out[static_cast<std::size_t>(t)] = s / width;
  }
  return out;
}

std::vector<double> ActivationTrace::neuron_series(int neuron) const {
  std::vector<double> out(static_cast<std::size_t>(length()));
  for (int t = 0; t < length(); ++t) out[static_cast<std::size_t>(t)] = activation(t, neuron);
  return out;
}

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::left_home: return "left_home";
    case EventKind::entered_food_area: return "entered_food_area";
    case EventKind::left_food_area: return "left_food_area";
    case EventKind::entered_home: return "entered_home";
  }
  return "?";
}

std::vector<BehavioralEvent> detect_events(std::span<const Cell> positions, const DaylightSchedule& schedule,
                                           Step first_step) {
  std::vector<BehavioralEvent> out;
  for (std::size_t i = 1; i < positions.size(); ++i) {
    const EventFlags f = crossing_events(positions[i - 1], positions[i]);
    if (!f) continue;
    const Step t = first_step + static_cast<Step>(i);
    const DayPosition where = schedule.locate(t);
    auto emit = [&](EventKind k) { out.push_back({k, t, where.day, where.day_rel_step}); };
    if (f & kLeftHome) emit(EventKind::left_home);
    if (f & kLeftFoodArea) emit(EventKind::left_food_area);
    if (f & kEnteredFoodArea) emit(EventKind::entered_food_area);
    if (f & kEnteredHome) emit(EventKind::entered_home);
  }
  return out;
}

EventHistogram event_histograms(std::span<const std::vector<BehavioralEvent>> runs, int cycle_len, int n_days) {
  if (cycle_len < 1 || n_days < 1) throw std::invalid_argument("histogram needs cycle_len, n_days >= 1");
  EventHistogram h;
  h.n_days = n_days;
  h.cycle_len = cycle_len;
  h.runs = static_cast<int>(runs.size());
  for (auto& per_kind : h.probability)
    per_kind.assign(static_cast<std::size_t>(n_days), std::vector<double>(static_cast<std::size_t>(cycle_len), 0.0));
  for (const auto& events : runs)
    for (const auto& e : events) {
      if (e.day < 1 || e.day > n_days || e.day_rel_step < 1 || e.day_rel_step > cycle_len) continue;
      h.probability[static_cast<int>(e.kind)][static_cast<std::size_t>(e.day - 1)]
                   [static_cast<std::size_t>(e.day_rel_step - 1)] += 1.0;
    }
  if (!runs.empty())
    for (auto& per_kind : h.probability)
      for (auto& day : per_kind)
        for (auto& p : day) p /= static_cast<double>(runs.size());
  return h;
}

double amplitude(std::span<const double> series, std::size_t begin, std::size_t end) {
  if (begin >= end || end > series.size()) throw std::invalid_argument("amplitude window is empty or out of range");
  const auto [lo, hi] = std::minmax_element(series.begin() + static_cast<std::ptrdiff_t>(begin),
                                            series.begin() + static_cast<std::ptrdiff_t>(end));
  return *hi - *lo;
}

double amplitude(std::span<const double> series) { return amplitude(series, 0, series.size()); }

std::optional<std::size_t> amplitude_onset(std::span<const double> amplitudes, double fraction) {
  if (amplitudes.empty() || !(amplitudes.back() > 0.0)) return std::nullopt;
  const double bar = fraction * amplitudes.back();
  for (std::size_t i = 0; i < amplitudes.size(); ++i)
    if (amplitudes[i] >= bar) return i;
  return std::nullopt;
}

std::vector<std::array<double, 2>> delay_embedding(std::span<const double> series, int delay) {
  if (delay < 0) throw std::invalid_argument("delay must be non-negative");
  std::vector<std::array<double, 2>> out;
  for (std::size_t t = static_cast<std::size_t>(delay); t < series.size(); ++t)
    out.push_back({series[t], series[t - static_cast<std::size_t>(delay)]});
  return out;
}

namespace {
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

std::vector<double> periodogram(std::span<const double> series) {
  const int n = static_cast<int>(series.size());
  if (n < 2) throw std::invalid_argument("periodogram needs at least 2 samples");
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / n;
  const int bins = n / 2 + 1;
  double* in = fftw_alloc_real(static_cast<std::size_t>(n));
  fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(bins));
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
  }
  for (int i = 0; i < n; ++i) in[i] = series[static_cast<std::size_t>(i)] - mean;
  fftw_execute(plan);
  std::vector<double> power(static_cast<std::size_t>(bins));
  for (int k = 0; k < bins; ++k) power[static_cast<std::size_t>(k)] = (out[k][0] * out[k][0] + out[k][1] * out[k][1]) / n;
  power[0] = 0.0;  // exact after mean removal, up to rounding
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);
  return power;
}

SpectralPeak dominant_peak(std::span<const double> power, int series_length) {
  if (power.size() < 2) throw std::invalid_argument("need at least one non-zero frequency bin");
  SpectralPeak p;
  p.bin = 1;
  for (std::size_t k = 2; k < power.size(); ++k)
    if (power[k] > power[static_cast<std::size_t>(p.bin)]) p.bin = static_cast<int>(k);
  p.power = power[static_cast<std::size_t>(p.bin)];
  p.period = static_cast<double>(series_length) / p.bin;
  std::vector<double> rest(power.begin() + 1, power.end());
  const std::size_t mid = rest.size() / 2;
  std::nth_element(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(mid), rest.end());
  if (rest.size() % 2 == 1) {
    p.median_power = rest[mid];
  } else {
    const double upper = rest[mid];
    const double lower = *std::max_element(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(mid));
    p.median_power = 0.5 * (lower + upper);
  }
  return p;
}

Spectrogram stack_spectrogram(std::vector<int> episodes, std::vector<std::vector<double>> rows) {
  if (episodes.size() != rows.size()) throw std::invalid_argument("one episode index per spectrogram row");
  for (const auto& r : rows)
    if (r.size() != rows.front().size()) throw std::invalid_argument("spectrogram rows differ in length");
  std::vector<std::size_t> order(episodes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return episodes[a] < episodes[b]; });
  Spectrogram s;
  for (auto i : order) {
    s.episodes.push_back(episodes[i]);
    s.rows.push_back(std::move(rows[i]));
  }
  return s;
}

std::vector<double> mean_power(std::span<const std::vector<double>> periodograms) {
  if (periodograms.empty()) throw std::invalid_argument("no periodograms to average");
  std::vector<double> out(periodograms.front().size(), 0.0);
  for (const auto& p : periodograms) {
    if (p.size() != out.size()) throw std::invalid_argument("periodograms differ in length");
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += p[k];
  }
  for (auto& x : out) x /= static_cast<double>(periodograms.size());
  return out;
}

namespace {

std::vector<double> centered(std::span<const double> x) {
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  std::vector<double> out(x.begin(), x.end());
  for (auto& v : out) v -= mean;
  return out;
}

double variance(const std::vector<double>& centered_values) {
  double s = 0.0;
  for (double v : centered_values) s += v * v;
  return s / static_cast<double>(centered_values.size());
}

// Lags cover (-n/2, n/2].
int lowest_lag(int n) { return -((n - 1) / 2); }

// Candidate lags in tie-break order: 0, -1, 1, -2, 2, ...
std::vector<int> lag_order(int n) {
  std::vector<int> lags{0};
  for (int m = 1; m <= n / 2; ++m) {
    if (-m >= lowest_lag(n)) lags.push_back(-m);
    lags.push_back(m);
  }
  return lags;
}

int wrap_lag(int s, int n) {
  const int lo = lowest_lag(n);
  return ((s - lo) % n + n) % n + lo;
}

}  // namespace

std::optional<int> estimate_phase_shift(std::span<const double> perturbed, std::span<const double> baseline) {
  if (perturbed.size() != baseline.size()) throw std::invalid_argument("phase windows differ in length");
  const int n = static_cast<int>(baseline.size());
  if (n < 2) throw std::invalid_argument("phase window needs at least 2 samples");
  const auto p = centered(perturbed);
  const auto b = centered(baseline);
  if (variance(b) < kFlatVariance || variance(p) < kFlatVariance) return std::nullopt;
  auto score_at = [&](int s) {
    double score = 0.0;
    for (int t = 0; t < n; ++t) score += p[static_cast<std::size_t>(t)] * b[static_cast<std::size_t>(((t + s) % n + n) % n)];
    return score;
  };
  int best = 0;
  double best_score = score_at(0);
  // Scores are compared with a relative tolerance so that lags tied up to
  // rounding resolve by the preference order.
  for (int s : lag_order(n)) {
    const double score = score_at(s);
    if (score > best_score + 1e-12 * std::max(1.0, std::abs(best_score))) {
      best_score = score;
      best = s;
    }
  }
  return best;
}

std::optional<int> estimate_phase_shift_peak(std::span<const double> perturbed, std::span<const double> baseline) {
  if (perturbed.size() != baseline.size()) throw std::invalid_argument("phase windows differ in length");
  const int n = static_cast<int>(baseline.size());
  const auto p = centered(perturbed);
  const auto b = centered(baseline);
  if (variance(b) < kFlatVariance || variance(p) < kFlatVariance) return std::nullopt;
  const auto ip = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
  const auto ib = static_cast<int>(std::max_element(b.begin(), b.end()) - b.begin());
  // perturbed peaks earlier than baseline -> advance (positive)
  return wrap_lag(ib - ip, n);
}

}  // namespace circadian
