#include "circadian/gradcheck_suite.hpp"

#include <random>
#include <string>

#include "circadian/nn/layers.hpp"
#include "circadian/nn/recurrent.hpp"
#include "circadian/q_network.hpp"
#include "circadian/trainer.hpp"

namespace circadian {

using nn::GradCheckReport;
using nn::Matrix;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

std::span<double> span_of(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<const double> span_of(const Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }

double dot(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).sum(); }

std::string_view act_name(nn::Activation a) {
  switch (a) {
    case nn::Activation::relu: return "relu";
    case nn::Activation::tanh: return "tanh";
    case nn::Activation::linear: return "linear";
  }
  return "?";
}

void check_conv(std::vector<GradCheckReport>& out, std::mt19937_64& rng) {
  nn::ConvGeometry g;
  Matrix input = random_matrix(g.input_size(), 3, rng);
  Matrix kernel = random_matrix(g.out_channels, g.patch_size(), rng, 0.5);
  Matrix bias = random_matrix(g.out_channels, 1, rng, 0.1);
  const Matrix w = random_matrix(g.output_size(), 3, rng);
  auto loss = [&] { return dot(w, nn::conv2d_forward(input, kernel, bias, g, nn::Activation::relu)); };
  nn::ConvCache cache;
  nn::conv2d_forward(input, kernel, bias, g, nn::Activation::relu, &cache);
  Matrix dk = Matrix::Zero(kernel.rows(), kernel.cols()), db = Matrix::Zero(bias.rows(), 1), dx;
  nn::conv2d_backward(w, cache, kernel, g, nn::Activation::relu, dk, db, &dx);
  out.push_back(nn::finite_difference_check("conv/kernel", loss, span_of(kernel), span_of(dk)));
  out.push_back(nn::finite_difference_check("conv/bias", loss, span_of(bias), span_of(db)));
  out.push_back(nn::finite_difference_check("conv/input", loss, span_of(input), span_of(dx)));
}

void check_dense(std::vector<GradCheckReport>& out, std::mt19937_64& rng) {
  for (auto act : {nn::Activation::tanh, nn::Activation::relu, nn::Activation::linear}) {
    Matrix x = random_matrix(7, 4, rng);
    Matrix weight = random_matrix(5, 7, rng, 0.4);
    Matrix bias = random_matrix(5, 1, rng, 0.1);
    const Matrix w = random_matrix(5, 4, rng);
    auto loss = [&] { return dot(w, nn::dense_forward(x, weight, bias, act)); };
    nn::DenseCache cache;
    nn::dense_forward(x, weight, bias, act, &cache);
    Matrix dw = Matrix::Zero(5, 7), db = Matrix::Zero(5, 1), dx;
    nn::dense_backward(w, cache, weight, act, dw, db, &dx);
    const std::string prefix = "dense_" + std::string(act_name(act));
    out.push_back(nn::finite_difference_check(prefix + "/kernel", loss, span_of(weight), span_of(dw)));
    out.push_back(nn::finite_difference_check(prefix + "/bias", loss, span_of(bias), span_of(db)));
    out.push_back(nn::finite_difference_check(prefix + "/input", loss, span_of(x), span_of(dx)));
  }
}

void check_recurrent(std::vector<GradCheckReport>& out, std::mt19937_64& rng) {
  const int T = 10, B = 2, in = 4, H = 3;
  for (auto kind : {nn::CellKind::lstm, nn::CellKind::gru, nn::CellKind::rnn}) {
    const int G = nn::gate_count(kind);
    Matrix x = random_matrix(in, T * B, rng);
    Matrix kernel = random_matrix(G * H, in, rng, 0.5);
    Matrix recurrent = random_matrix(G * H, H, rng, 0.5);
    Matrix bias = random_matrix(G * H, 1, rng, 0.2);
    const Matrix w = random_matrix(H, T * B, rng);
    auto loss = [&] { return dot(w, nn::recurrent_forward(kind, x, T, B, {kernel, recurrent, bias})); };
    nn::RecurrentCache cache;
    nn::recurrent_forward(kind, x, T, B, {kernel, recurrent, bias}, &cache);
    Matrix dk = Matrix::Zero(kernel.rows(), kernel.cols());
    Matrix dr = Matrix::Zero(recurrent.rows(), recurrent.cols());
    Matrix db = Matrix::Zero(bias.rows(), 1), dx;
    nn::recurrent_backward(w, cache, {kernel, recurrent, bias}, {dk, dr, db}, &dx);
    const std::string prefix = std::string(nn::to_string(kind));
    out.push_back(nn::finite_difference_check(prefix + "/kernel", loss, span_of(kernel), span_of(dk)));
    out.push_back(nn::finite_difference_check(prefix + "/recurrent_kernel", loss, span_of(recurrent), span_of(dr)));
    out.push_back(nn::finite_difference_check(prefix + "/bias", loss, span_of(bias), span_of(db)));
    out.push_back(nn::finite_difference_check(prefix + "/input", loss, span_of(x), span_of(dx)));
  }
}

NetworkConfig toy_network() {
  NetworkConfig c;
  c.conv_channels = 3;
  c.fc_widths = {8, 6};
  c.recurrent_width = 5;
  return c;
}

EpisodeRecord toy_episode(int steps, std::uint64_t seed, int index) {
  ForagingEnv env;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, kNumActions - 1);
  EpisodeRecord e;
  e.episode_index = index;
  e.spatial.resize(Observation::kSpatialSize, steps + 1);
  e.aux.resize(Observation::kAuxSize, steps + 1);
  write_observation(env.reset(DaylightSchedule::periodic(3, 2), seed), e.spatial, e.aux, 0);
  for (int t = 0; t < steps; ++t) {
    const int a = pick(rng);
    const auto r = env.step(static_cast<Action>(a));
    e.actions.push_back(a);
    e.rewards.push_back(r.reward);
    write_observation(r.observation, e.spatial, e.aux, t + 1);
  }
  return e;
}

// Zero-initialized biases put relu units exactly on their kink wherever the
// binary input leaves the receptive field empty; central differences are
// meaningless there, so the checks start from shifted biases.
void move_off_relu_kinks(NetworkParams& params) {
  for (auto& p : params.arrays) {
    if (p.name == "value/bias" || p.name == "advantage/bias") p.value.array() += 0.3;
    if (p.name == "conv/bias") p.value.array() += 0.05;
  }
}

void check_network(std::vector<GradCheckReport>& out, std::uint64_t seed) {
  const NetworkConfig cfg = toy_network();
  const QNetwork net(cfg);
  const EpisodeRecord e1 = toy_episode(5, seed + 1, 1), e2 = toy_episode(5, seed + 2, 2);
  const EpisodeRecord* eps[] = {&e1, &e2};

  // Dueling heads under a random linear functional of q, which routes
  // gradient through the max-advantage subtraction.
  {
    NetworkParams params = net.init_params(seed);
    move_off_relu_kinks(params);
    const ObservationBatch batch = pack_episodes(eps, false);
    std::mt19937_64 rng(seed + 3);
    const Matrix w = random_matrix(kNumActions, batch.spatial.cols(), rng);
    auto loss = [&] { return dot(w, net.forward(params, batch, false).q); };
    params.zero_grad();
    net.backward(params, net.forward(params, batch, true), w);
    for (auto& p : params.arrays) {
      if (!p.name.starts_with("value/") && !p.name.starts_with("advantage/")) continue;
      const Matrix grad = p.grad;
      out.push_back(nn::finite_difference_check("dueling/" + p.name, loss, span_of(p.value), span_of(grad)));
    }
  }

  // Full training loss with targets from a separate target network and a
  // weight penalty on the recurrent layer.
  {
    NetworkConfig reg_cfg = cfg;
    reg_cfg.l2 = 1e-3;
    reg_cfg.l1 = 1e-4;
    const QNetwork reg_net(reg_cfg);
    NetworkParams params = reg_net.init_params(seed);
    move_off_relu_kinks(params);
    const NetworkParams target = reg_net.init_params(seed + 10);
    const auto target_q = reg_net.forward(target, pack_episodes(eps, true), false).q;
    const Matrix y = compute_targets(eps, target_q, 0.99, false);
    NetworkParams scratch = params;
    auto loss = [&] {
      for (std::size_t k = 0; k < params.size(); ++k) scratch[k].value = params[k].value;
      return loss_and_gradients(reg_net, scratch, eps, y).loss;
    };
    loss_and_gradients(reg_net, params, eps, y);
    for (auto& p : params.arrays) {
      const Matrix grad = p.grad;
      out.push_back(nn::finite_difference_check("loss/" + p.name, loss, span_of(p.value), span_of(grad)));
    }
  }
}

}  // namespace

std::vector<GradCheckReport> run_gradcheck_suite(std::uint64_t seed) {
  std::vector<GradCheckReport> out;
  std::mt19937_64 rng(seed);
  check_conv(out, rng);
  check_dense(out, rng);
  check_recurrent(out, rng);
  check_network(out, seed);
  return out;
}

}  // namespace circadian
