#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "circadian/foraging_env.hpp"
#include "circadian/nn/layers.hpp"
#include "circadian/nn/recurrent.hpp"
#include "circadian/nn/tensor.hpp"

namespace circadian {

using nn::Matrix;

struct NetworkConfig {
  int conv_channels = 6;
  int conv_kernel = 3;
  std::vector<int> fc_widths{32, 32};
  nn::CellKind cell = nn::CellKind::lstm;
  int recurrent_width = 128;
  /// Activation of the value and advantage heads.
  nn::Activation head_activation = nn::Activation::relu;
  /// Initializer for the recurrent layer's weights. glorot_uniform pairs an
  /// orthogonal recurrent matrix with a Glorot input kernel; he_normal uses
  /// He-normal for both.
  nn::Init recurrent_init = nn::Init::glorot_uniform;
  /// Weight penalties on the recurrent layer (kernel and recurrent matrix).
  double l1 = 0.0;
  double l2 = 0.0;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Ordered parameter arrays of one network instance.
struct NetworkParams {
  std::vector<nn::ParamArray> arrays;

  nn::ParamArray& operator[](std::size_t i) { return arrays[i]; }
  const nn::ParamArray& operator[](std::size_t i) const { return arrays[i]; }
  const nn::ParamArray* find(std::string_view name) const;
  std::size_t size() const { return arrays.size(); }
  Eigen::Index total_values() const;
  void zero_grad();
};

/// Per-step network output.
struct QOutput {
  std::array<double, kNumActions> q{};
  double v = 0.0;
  std::array<double, kNumActions> a{};
  nn::Vector recurrent_activation;
};

/// q_i = v + a_i - max_j a_j.
std::array<double, kNumActions> dueling_combine(double v, const std::array<double, kNumActions>& a);

/// Greedy action with lowest-index tie-break.
int greedy_action(std::span<const double> q);

/// Epsilon-greedy selection. Always consumes one uniform draw, plus one more
/// when exploring, so the random stream does not depend on q.
Action select_action(std::span<const double> q, double epsilon, std::mt19937_64& rng);

/// Observations of several sequences packed time-major: column t * batch + b.
struct ObservationBatch {
  Matrix spatial;  // 50 x T*B
  Matrix aux;      // 5 x T*B
  int steps = 0;
  Eigen::Index batch = 0;
};

void write_observation(const Observation& o, Matrix& spatial, Matrix& aux, Eigen::Index col);

/// The dueling recurrent Q-network:
/// conv(3x3, relu) -> flatten ++ (daylight, orientation) -> dense(tanh)* ->
/// recurrent -> value head (1) and advantage head (5) -> dueling combine.
class QNetwork {
 public:
  explicit QNetwork(NetworkConfig config);

  const NetworkConfig& config() const { return config_; }

  NetworkParams init_params(std::uint64_t seed) const;
  /// Parameter arrays with the right names and shapes, all zero.
  NetworkParams zero_params() const;

  /// Runs one sequence from a zero recurrent state.
  std::vector<QOutput> forward_sequence(const NetworkParams& params,
                                        std::span<const Observation> observations) const;

  /// Everything the backward pass needs.
  struct Trace {
    // Feed-forward layers run once per distinct observation column;
    // `source_column[j]` is the distinct column feeding sequence column j.
    std::vector<int> source_column;
    Eigen::Index distinct = 0;
    nn::ConvCache conv;
    std::vector<nn::DenseCache> dense;
    nn::RecurrentCache recurrent;
    nn::DenseCache value_head;
    nn::DenseCache advantage_head;
    Matrix q;  // 5 x T*B
    Matrix v;  // 1 x T*B
    Matrix a;  // 5 x T*B
    std::vector<int> best_advantage;
  };

  /// Batched forward over whole sequences. With keep_cache = false only q, v, a
  /// and the recurrent hidden states are filled in.
  Trace forward(const NetworkParams& params, const ObservationBatch& batch, bool keep_cache) const;

  /// Accumulates dLoss/dparams into params[k].grad given dLoss/dq.
  /// bptt > 0 truncates backpropagation through time to chunks of that length.
  void backward(NetworkParams& params, const Trace& trace, const Matrix& dq, int bptt = 0) const;

  /// Batched single step for B independent rollouts (used for acting).
  struct StepResult {
    Matrix q;       // 5 x B
    Matrix v;       // 1 x B
    Matrix a;       // 5 x B
    Matrix hidden;  // W x B
  };
  StepResult step(const NetworkParams& params, const Matrix& spatial, const Matrix& aux,
                  nn::RecurrentState& state) const;

  QOutput step(const NetworkParams& params, const Observation& o, nn::RecurrentState& state) const;

  nn::RecurrentState initial_state(Eigen::Index batch = 1) const {
    return nn::RecurrentState::zeros(config_.recurrent_width, batch);
  }

  /// Arrays that receive weight penalties (recurrent kernel and recurrent matrix).
  std::vector<std::size_t> regularized_arrays() const { return {rec_ + 0, rec_ + 1}; }

  nn::ConvGeometry conv_geometry() const;

 private:
  Matrix features(const NetworkParams& params, const Matrix& spatial, const Matrix& aux, Trace* trace) const;
  void heads(const NetworkParams& params, const Matrix& hidden, Trace& out, bool keep_cache) const;
  nn::RecurrentWeights recurrent_weights(const NetworkParams& p) const {
    return {p[rec_].value, p[rec_ + 1].value, p[rec_ + 2].value};
  }

  NetworkConfig config_;
  std::size_t rec_ = 0;    // index of the recurrent kernel
  std::size_t heads_ = 0;  // index of the value-head kernel
};

}  // namespace circadian
