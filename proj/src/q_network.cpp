#include "circadian/q_network.hpp"

#include <cstring>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>

namespace circadian {

using nn::Activation;
using nn::Init;
using nn::ParamArray;

const ParamArray* NetworkParams::find(std::string_view name) const {
  for (const auto& p : arrays)
    if (p.name == name) return &p;
  return nullptr;
}

Eigen::Index NetworkParams::total_values() const {
  Eigen::Index n = 0;
  for (const auto& p : arrays) n += p.size();
  return n;
}

void NetworkParams::zero_grad() {
  for (auto& p : arrays) p.zero_grad();
}

std::array<double, kNumActions> dueling_combine(double v, const std::array<double, kNumActions>& a) {
  double best = a[0];
  for (double x : a) best = std::max(best, x);
  std::array<double, kNumActions> q{};
  for (int i = 0; i < kNumActions; ++i) q[i] = v + (a[i] - best);
  return q;
}

int greedy_action(std::span<const double> q) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(q.size()); ++i)
    if (q[i] > q[best]) best = i;
  return best;
}

Action select_action(std::span<const double> q, double epsilon, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < epsilon) {
    std::uniform_int_distribution<int> pick(0, kNumActions - 1);
    return static_cast<Action>(pick(rng));
  }
  return static_cast<Action>(greedy_action(q));
}

void write_observation(const Observation& o, Matrix& spatial, Matrix& aux, Eigen::Index col) {
  spatial.col(col) = Eigen::Map<const nn::Vector>(o.spatial.data(), Observation::kSpatialSize);
  const auto x = o.aux();
  aux.col(col) = Eigen::Map<const nn::Vector>(x.data(), Observation::kAuxSize);
}

QNetwork::QNetwork(NetworkConfig config) : config_(std::move(config)) {
  if (config_.fc_widths.empty()) throw std::invalid_argument("network needs at least one dense layer");
  if (config_.recurrent_width < 1 || config_.conv_channels < 1)
    throw std::invalid_argument("layer widths must be positive");
  rec_ = 2 + 2 * config_.fc_widths.size();
  heads_ = rec_ + 3;
}

nn::ConvGeometry QNetwork::conv_geometry() const {
  nn::ConvGeometry g;
  g.height = grid::kRows;
  g.width = grid::kCols;
  g.in_channels = 2;
  g.out_channels = config_.conv_channels;
  g.kernel = config_.conv_kernel;
  return g;
}

NetworkParams QNetwork::zero_params() const {
  const auto g = conv_geometry();
  const int H = config_.recurrent_width;
  const int G = nn::gate_count(config_.cell);
  NetworkParams p;
  auto add = [&](std::string name, std::vector<int> shape, Eigen::Index rows, Eigen::Index cols) {
    p.arrays.emplace_back(std::move(name), std::move(shape), rows, cols);
  };
  add("conv/kernel", {g.out_channels, g.kernel, g.kernel, g.in_channels}, g.out_channels, g.patch_size());
  add("conv/bias", {g.out_channels}, g.out_channels, 1);
  int in = g.output_size() + Observation::kAuxSize;
  for (std::size_t k = 0; k < config_.fc_widths.size(); ++k) {
    const int w = config_.fc_widths[k];
    add("dense" + std::to_string(k) + "/kernel", {w, in}, w, in);
    add("dense" + std::to_string(k) + "/bias", {w}, w, 1);
    in = w;
  }
  add("recurrent/kernel", {G * H, in}, G * H, in);
  add("recurrent/recurrent_kernel", {G * H, H}, G * H, H);
  add("recurrent/bias", {G * H}, G * H, 1);
  add("value/kernel", {1, H}, 1, H);
  add("value/bias", {1}, 1, 1);
  add("advantage/kernel", {kNumActions, H}, kNumActions, H);
  add("advantage/bias", {kNumActions}, kNumActions, 1);
  return p;
}

NetworkParams QNetwork::init_params(std::uint64_t seed) const {
  NetworkParams p = zero_params();
  std::mt19937_64 rng(seed);
  const auto g = conv_geometry();
  const int H = config_.recurrent_width;
  const int G = nn::gate_count(config_.cell);
  const int k2 = g.kernel * g.kernel;
  nn::initialize(p[0].value, Init::glorot_uniform, k2 * g.in_channels, k2 * g.out_channels, rng);
  for (std::size_t k = 0; k < config_.fc_widths.size(); ++k) {
    auto& w = p[2 + 2 * k].value;
    nn::initialize(w, Init::glorot_uniform, int(w.cols()), int(w.rows()), rng);
  }
  auto& kernel = p[rec_].value;
  auto& recurrent = p[rec_ + 1].value;
  const int in = int(kernel.cols());
  if (config_.recurrent_init == Init::he_normal) {
    nn::initialize(kernel, Init::he_normal, in, G * H, rng);
    nn::initialize(recurrent, Init::he_normal, H, G * H, rng);
  } else {
    nn::initialize(kernel, config_.recurrent_init, in, G * H, rng);
    nn::initialize(recurrent, Init::orthogonal, H, G * H, rng);
  }
  if (config_.cell == nn::CellKind::lstm) p[rec_ + 2].value.middleRows(H, H).setOnes();
  nn::initialize(p[heads_].value, Init::glorot_uniform, H, 1, rng);
  nn::initialize(p[heads_ + 2].value, Init::glorot_uniform, H, kNumActions, rng);
  return p;
}

Matrix QNetwork::features(const NetworkParams& params, const Matrix& spatial, const Matrix& aux,
                          Trace* trace) const {
  const auto g = conv_geometry();
  Matrix conv = nn::conv2d_forward(spatial, params[0].value, params[1].value, g, Activation::relu,
                                   trace ? &trace->conv : nullptr);
  Matrix x(conv.rows() + aux.rows(), conv.cols());
  x.topRows(conv.rows()) = conv;
  x.bottomRows(aux.rows()) = aux;
  if (trace) trace->dense.resize(config_.fc_widths.size());
  for (std::size_t k = 0; k < config_.fc_widths.size(); ++k)
    x = nn::dense_forward(x, params[2 + 2 * k].value, params[3 + 2 * k].value, Activation::tanh,
                          trace ? &trace->dense[k] : nullptr);
  return x;
}

void QNetwork::heads(const NetworkParams& params, const Matrix& hidden, Trace& out, bool keep_cache) const {
  const auto act = config_.head_activation;
  out.v = nn::dense_forward(hidden, params[heads_].value, params[heads_ + 1].value, act,
                            keep_cache ? &out.value_head : nullptr);
  out.a = nn::dense_forward(hidden, params[heads_ + 2].value, params[heads_ + 3].value, act,
                            keep_cache ? &out.advantage_head : nullptr);
  const Eigen::Index n = hidden.cols();
  out.q.resize(kNumActions, n);
  out.best_advantage.resize(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    int m = 0;
    for (int i = 1; i < kNumActions; ++i)
      if (out.a(i, j) > out.a(m, j)) m = i;
    out.best_advantage[static_cast<std::size_t>(j)] = m;
    const double best = out.a(m, j);
    for (int i = 0; i < kNumActions; ++i) out.q(i, j) = out.v(0, j) + (out.a(i, j) - best);
  }
  nn::require_finite(out.q, "q-network output");
}

namespace {

// Groups identical observation columns. Returns the index of each column's
// first occurrence among the distinct columns, in order of appearance.
std::vector<int> distinct_columns(const Matrix& spatial, const Matrix& aux, Matrix& spatial_out, Matrix& aux_out) {
  const Eigen::Index n = spatial.cols();
  const Eigen::Index rs = spatial.rows(), ra = aux.rows();
  std::string key(static_cast<std::size_t>(rs + ra) * sizeof(double), '\0');
  std::unordered_map<std::string, int> seen;
  seen.reserve(static_cast<std::size_t>(n));
  std::vector<int> source(static_cast<std::size_t>(n));
  std::vector<Eigen::Index> firsts;
  for (Eigen::Index j = 0; j < n; ++j) {
    std::memcpy(key.data(), spatial.col(j).data(), static_cast<std::size_t>(rs) * sizeof(double));
    std::memcpy(key.data() + rs * sizeof(double), aux.col(j).data(), static_cast<std::size_t>(ra) * sizeof(double));
    auto [it, inserted] = seen.try_emplace(key, static_cast<int>(firsts.size()));
    if (inserted) firsts.push_back(j);
    source[static_cast<std::size_t>(j)] = it->second;
  }
  const auto u = static_cast<Eigen::Index>(firsts.size());
  spatial_out.resize(rs, u);
  aux_out.resize(ra, u);
  for (Eigen::Index k = 0; k < u; ++k) {
    spatial_out.col(k) = spatial.col(firsts[static_cast<std::size_t>(k)]);
    aux_out.col(k) = aux.col(firsts[static_cast<std::size_t>(k)]);
  }
  return source;
}

}  // namespace

QNetwork::Trace QNetwork::forward(const NetworkParams& params, const ObservationBatch& batch,
                                  bool keep_cache) const {
  Trace t;
  Matrix spatial, aux;
  t.source_column = distinct_columns(batch.spatial, batch.aux, spatial, aux);
  t.distinct = spatial.cols();
  const Matrix xu = features(params, spatial, aux, keep_cache ? &t : nullptr);
  Matrix x(xu.rows(), batch.spatial.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) x.col(j) = xu.col(t.source_column[static_cast<std::size_t>(j)]);
  if (keep_cache) {
    nn::recurrent_forward(config_.cell, x, batch.steps, batch.batch, recurrent_weights(params), &t.recurrent);
  } else {
    t.recurrent.hidden = nn::recurrent_forward(config_.cell, x, batch.steps, batch.batch, recurrent_weights(params));
  }
  heads(params, t.recurrent.hidden, t, keep_cache);
  return t;
}

void QNetwork::backward(NetworkParams& params, const Trace& trace, const Matrix& dq, int bptt) const {
  const auto act = config_.head_activation;
  const Eigen::Index n = dq.cols();
  Matrix dv = dq.colwise().sum();
  Matrix da = dq;
  for (Eigen::Index j = 0; j < n; ++j) da(trace.best_advantage[static_cast<std::size_t>(j)], j) -= dv(0, j);

  Matrix dh_value, dh_adv;
  nn::dense_backward(dv, trace.value_head, params[heads_].value, act, params[heads_].grad,
                     params[heads_ + 1].grad, &dh_value);
  nn::dense_backward(da, trace.advantage_head, params[heads_ + 2].value, act, params[heads_ + 2].grad,
                     params[heads_ + 3].grad, &dh_adv);
  const Matrix dh = dh_value + dh_adv;

  Matrix dx_seq;
  nn::recurrent_backward(dh, trace.recurrent, recurrent_weights(params),
                         {params[rec_].grad, params[rec_ + 1].grad, params[rec_ + 2].grad}, &dx_seq, bptt);
  Matrix dx = Matrix::Zero(dx_seq.rows(), trace.distinct);
  for (Eigen::Index j = 0; j < n; ++j) dx.col(trace.source_column[static_cast<std::size_t>(j)]) += dx_seq.col(j);

  for (std::size_t k = config_.fc_widths.size(); k-- > 0;) {
    Matrix din;
    nn::dense_backward(dx, trace.dense[k], params[2 + 2 * k].value, Activation::tanh, params[2 + 2 * k].grad,
                       params[3 + 2 * k].grad, &din);
    dx = std::move(din);
  }
  const auto g = conv_geometry();
  const Matrix dconv = dx.topRows(g.output_size());
  nn::conv2d_backward(dconv, trace.conv, params[0].value, g, Activation::relu, params[0].grad, params[1].grad);
}

QNetwork::StepResult QNetwork::step(const NetworkParams& params, const Matrix& spatial, const Matrix& aux,
                                    nn::RecurrentState& state) const {
  const Matrix x = features(params, spatial, aux, nullptr);
  state = nn::recurrent_step(config_.cell, x, state, recurrent_weights(params));
  Trace t;
  heads(params, state.h, t, false);
  return {std::move(t.q), std::move(t.v), std::move(t.a), state.h};
}

QOutput QNetwork::step(const NetworkParams& params, const Observation& o, nn::RecurrentState& state) const {
  Matrix spatial(Observation::kSpatialSize, 1);
  Matrix aux(Observation::kAuxSize, 1);
  write_observation(o, spatial, aux, 0);
  const StepResult r = step(params, spatial, aux, state);
  QOutput out;
  for (int i = 0; i < kNumActions; ++i) {
    out.q[i] = r.q(i, 0);
    out.a[i] = r.a(i, 0);
  }
  out.v = r.v(0, 0);
  out.recurrent_activation = r.hidden.col(0);
  return out;
}

std::vector<QOutput> QNetwork::forward_sequence(const NetworkParams& params,
                                                std::span<const Observation> observations) const {
  ObservationBatch batch;
  batch.steps = static_cast<int>(observations.size());
  batch.batch = 1;
  batch.spatial.resize(Observation::kSpatialSize, batch.steps);
  batch.aux.resize(Observation::kAuxSize, batch.steps);
  for (int t = 0; t < batch.steps; ++t) write_observation(observations[t], batch.spatial, batch.aux, t);
  const Trace tr = forward(params, batch, false);
  std::vector<QOutput> out(observations.size());
  for (int t = 0; t < batch.steps; ++t) {
    auto& o = out[t];
    for (int i = 0; i < kNumActions; ++i) {
      o.q[i] = tr.q(i, t);
      o.a[i] = tr.a(i, t);
    }
    o.v = tr.v(0, t);
    o.recurrent_activation = tr.recurrent.hidden.col(t);
  }
  return out;
}

}  // namespace circadian
