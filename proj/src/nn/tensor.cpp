#include "circadian/nn/tensor.hpp"

#include <cmath>
#include <string>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace circadian::nn {

void initialize(Matrix& m, Init init, int fan_in, int fan_out, std::mt19937_64& rng) {
  switch (init) {
    case Init::zeros:
      m.setZero();
      return;
    case Init::ones:
      m.setOnes();
      return;
    case Init::glorot_uniform: {
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
      return;
    }
    case Init::he_normal: {
      std::normal_distribution<double> n(0.0, std::sqrt(2.0 / fan_in));
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = n(rng);
      return;
    }
    case Init::orthogonal: {
      // Orthonormal columns (or rows, for wide matrices) from the QR factor
      // of a Gaussian matrix, sign-corrected so the result is Haar-distributed.
      const bool tall = m.rows() >= m.cols();
      Matrix a(tall ? m.rows() : m.cols(), tall ? m.cols() : m.rows());
      std::normal_distribution<double> n(0.0, 1.0);
      for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, j) = n(rng);
      Eigen::HouseholderQR<Matrix> qr(a);
      Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
      const Matrix r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
      for (Eigen::Index j = 0; j < q.cols(); ++j)
        if (r(j, j) < 0) q.col(j) = -q.col(j);
      m = tall ? q : Matrix(q.transpose());
      return;
    }
  }
}

Matrix apply_activation(const Matrix& z, Activation act) {
  switch (act) {
    case Activation::relu: return z.cwiseMax(0.0);
    case Activation::tanh: return fast_tanh(z.array()).matrix();
    case Activation::linear: return z;
  }
  return z;
}

void activation_backward(Matrix& upstream, const Matrix& y, Activation act) {
  switch (act) {
    case Activation::relu:
      upstream.array() *= (y.array() > 0.0).cast<double>();
      return;
    case Activation::tanh:
      upstream.array() *= 1.0 - y.array().square();
      return;
    case Activation::linear:
      return;
  }
}

void require_finite(const Matrix& m, const char* where) {
  if (!m.allFinite()) throw NumericFailure(std::string("non-finite values in ") + where);
}

void keep_heap_blocks() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace circadian::nn
