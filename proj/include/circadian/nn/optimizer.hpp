#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "circadian/nn/tensor.hpp"

namespace circadian::nn {

enum class OptimizerKind { adam, sgd, rmsprop };

std::string_view to_string(OptimizerKind k);

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double rms_decay = 0.9;
  double rms_epsilon = 1e-7;
};

/// First-order optimizer over a fixed list of parameter arrays. Moment
/// buffers are allocated on the first step and must keep matching shapes.
class Optimizer {
 public:
  explicit Optimizer(OptimizerSettings s = {}) : settings_(s) {}

  /// Applies one update using each array's `grad`.
  void step(std::span<ParamArray> params);

  const OptimizerSettings& settings() const { return settings_; }
  long long iterations() const { return iterations_; }

  // Moment buffers, exposed for checkpointing.
  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  void set_iterations(long long n) { iterations_ = n; }

 private:
  OptimizerSettings settings_;
  long long iterations_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

/// Adds l1*sum|w| + l2*sum w^2 over `params` to the loss and its gradient to
/// each array's grad. Returns the penalty.
double apply_regularization(std::span<ParamArray* const> params, double l1, double l2);

}  // namespace circadian::nn
