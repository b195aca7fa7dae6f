#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace circadian::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised when a forward or backward pass produces NaN or infinity.
class NumericFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Activation { relu, tanh, linear };
enum class Init { glorot_uniform, he_normal, orthogonal, zeros, ones };

/// A named parameter tensor together with its gradient accumulator.
///
/// Values are stored as a matrix; `shape` keeps the logical dimensions (for a
/// conv kernel [out, kh, kw, in] flattened to out x (kh*kw*in)).
struct ParamArray {
  std::string name;
  std::vector<int> shape;
  Matrix value;
  Matrix grad;

  ParamArray() = default;
  ParamArray(std::string n, std::vector<int> s, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), shape(std::move(s)), value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}

  Eigen::Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(); }
};

/// Fill `m` according to `init`. fan_in / fan_out are those of the layer the
/// matrix belongs to (they differ from rows/cols for fused gate matrices).
void initialize(Matrix& m, Init init, int fan_in, int fan_out, std::mt19937_64& rng);

Matrix apply_activation(const Matrix& z, Activation act);
/// Multiplies `upstream` in place by the activation derivative, expressed in
/// terms of the activation output `y`.
void activation_backward(Matrix& upstream, const Matrix& y, Activation act);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Elementwise logistic function; saturates cleanly for large |x|.
template <typename Derived>
auto sigmoid_array(const Eigen::ArrayBase<Derived>& x) {
  return (1.0 + (-x).exp()).inverse();
}

/// Elementwise tanh through the vectorized exp (Eigen's double tanh is
/// scalar). Absolute error stays at machine precision.
template <typename Derived>
auto fast_tanh(const Eigen::ArrayBase<Derived>& x) {
  return 2.0 / (1.0 + (-2.0 * x).exp()) - 1.0;
}

void require_finite(const Matrix& m, const char* where);

/// Keeps large freed blocks in the heap instead of returning them to the OS.
/// Training allocates and frees the same multi-megabyte buffers every update,
/// and the page faults otherwise dominate the cost. No-op off glibc.
void keep_heap_blocks();

}  // namespace circadian::nn
