#include "circadian/nn/optimizer.hpp"

#include <cmath>

namespace circadian::nn {

std::string_view to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::rmsprop: return "rmsprop";
  }
  return "?";
}

void Optimizer::step(std::span<ParamArray> params) {
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (const auto& p : params) {
      m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
  }
  ++iterations_;
  const auto& s = settings_;
  switch (s.kind) {
    case OptimizerKind::sgd:
      for (auto& p : params) p.value.noalias() -= s.learning_rate * p.grad;
      return;
    case OptimizerKind::rmsprop:
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k];
        v_[k] = s.rms_decay * v_[k] + (1.0 - s.rms_decay) * p.grad.cwiseAbs2();
        p.value.array() -= s.learning_rate * p.grad.array() / (v_[k].array().sqrt() + s.rms_epsilon);
      }
      return;
    case OptimizerKind::adam: {
      const double t = static_cast<double>(iterations_);
      const double c1 = 1.0 - std::pow(s.beta1, t);
      const double c2 = 1.0 - std::pow(s.beta2, t);
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k];
        m_[k] = s.beta1 * m_[k] + (1.0 - s.beta1) * p.grad;
        v_[k] = s.beta2 * v_[k] + (1.0 - s.beta2) * p.grad.cwiseAbs2();
        p.value.array() -=
            s.learning_rate * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + s.adam_epsilon);
      }
      return;
    }
  }
}

double apply_regularization(std::span<ParamArray* const> params, double l1, double l2) {
  if (l1 == 0.0 && l2 == 0.0) return 0.0;
  double penalty = 0.0;
  for (ParamArray* p : params) {
    penalty += l1 * p->value.cwiseAbs().sum() + l2 * p->value.squaredNorm();
    if (l1 != 0.0) p->grad.array() += l1 * p->value.array().sign();
    if (l2 != 0.0) p->grad.noalias() += 2.0 * l2 * p->value;
  }
  return penalty;
}

}  // namespace circadian::nn
