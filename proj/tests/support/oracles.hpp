#pragma once

// Slow, obviously-correct reference implementations used by the tests.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <deque>
#include <numbers>
#include <span>
#include <vector>

namespace oracle {

// Plain O(n^2) DFT of the mean-removed series, |X_k|^2 / n for k = 0..n/2.
inline std::vector<double> naive_periodogram(std::span<const double> x) {
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(n);
      acc += (x[t] - mean) * std::polar(1.0, angle);
    }
    out[k] = std::norm(acc) / static_cast<double>(n);
  }
  return out;
}

// An asymmetric waveform with period `cycle` (no mirror symmetry, so every
// lag is distinguishable).
inline double waveform(long t, int cycle) {
  const long m = ((t % cycle) + cycle) % cycle;
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(m) / cycle;
  return std::sin(phase) + 0.6 * std::cos(2.0 * phase + 0.4) + 0.25 * std::sin(3.0 * phase + 1.1);
}

// Baseline window b(t) = f(t) and a copy that leads it by k steps,
// p(t) = f(t + k), both sampled over one window of length n.
struct ShiftedPair {
  std::vector<double> baseline;
  std::vector<double> perturbed;
};
inline ShiftedPair shifted_pair(int n, int cycle, int k, long origin = 0) {
  ShiftedPair p;
  for (int t = 0; t < n; ++t) {
    p.baseline.push_back(waveform(origin + t, cycle));
    p.perturbed.push_back(waveform(origin + t + k, cycle));
  }
  return p;
}

// Daylight of a periodic clock, written directly from its definition.
inline int periodic_signal(long t, int day_len, int night_len) {
  return ((t - 1) % (day_len + night_len)) < day_len ? 1 : 0;
}

// Breadth-first search over the 5x5 grid with the four moves.
inline int bfs_steps(int row, int col, int goal_row = 4, int goal_col = 4) {
  std::array<int, 25> dist;
  dist.fill(-1);
  std::deque<int> queue{row * 5 + col};
  dist[static_cast<std::size_t>(row * 5 + col)] = 0;
  while (!queue.empty()) {
    const int c = queue.front();
    queue.pop_front();
    const int r = c / 5, k = c % 5;
    if (r == goal_row && k == goal_col) return dist[static_cast<std::size_t>(c)];
    const int moves[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
    for (const auto& m : moves) {
      const int nr = r + m[0], nk = k + m[1];
      if (nr < 0 || nr >= 5 || nk < 0 || nk >= 5) continue;
      const int n = nr * 5 + nk;
      if (dist[static_cast<std::size_t>(n)] >= 0) continue;
      dist[static_cast<std::size_t>(n)] = dist[static_cast<std::size_t>(c)] + 1;
      queue.push_back(n);
    }
  }
  return -1;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Scalar LSTM step with gate blocks (i, f, g, o). W is 4H x in, U is 4H x H,
// all row-major nested vectors.
struct LstmState {
  std::vector<double> h, c;
};
inline LstmState lstm_step(const std::vector<std::vector<double>>& W, const std::vector<std::vector<double>>& U,
                           const std::vector<double>& b, const std::vector<double>& x, const LstmState& prev) {
  const std::size_t H = prev.h.size();
  std::vector<double> z(4 * H);
  for (std::size_t r = 0; r < 4 * H; ++r) {
    double s = b[r];
    for (std::size_t j = 0; j < x.size(); ++j) s += W[r][j] * x[j];
    for (std::size_t j = 0; j < H; ++j) s += U[r][j] * prev.h[j];
    z[r] = s;
  }
  LstmState next{std::vector<double>(H), std::vector<double>(H)};
  for (std::size_t k = 0; k < H; ++k) {
    const double i = sigmoid(z[k]), f = sigmoid(z[H + k]), g = std::tanh(z[2 * H + k]), o = sigmoid(z[3 * H + k]);
    next.c[k] = f * prev.c[k] + i * g;
    next.h[k] = o * std::tanh(next.c[k]);
  }
  return next;
}

// Pearson chi-square statistic of observed counts against equal expectation.
inline double chi_square_uniform(std::span<const long> counts) {
  long total = 0;
  for (long c : counts) total += c;
  const double expected = static_cast<double>(total) / static_cast<double>(counts.size());
  double chi = 0.0;
  for (long c : counts) chi += (c - expected) * (c - expected) / expected;
  return chi;
}

// Median of a copy.
inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace oracle
