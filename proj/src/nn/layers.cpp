#include "circadian/nn/layers.hpp"

#include <cassert>

namespace circadian::nn {

namespace {

template <typename Visit>
void for_each_tap(const ConvGeometry& g, Visit&& visit) {
  const int pad = g.kernel / 2;
  for (int r = 0; r < g.height; ++r)
    for (int c = 0; c < g.width; ++c)
      for (int kr = 0; kr < g.kernel; ++kr) {
        const int rr = r + kr - pad;
        if (rr < 0 || rr >= g.height) continue;
        for (int kc = 0; kc < g.kernel; ++kc) {
          const int cc = c + kc - pad;
          if (cc < 0 || cc >= g.width) continue;
          // output position, input position, kernel tap
          visit(r * g.width + c, rr * g.width + cc, kr * g.kernel + kc);
        }
      }
}

}  // namespace

Matrix lower_conv_kernel(const Matrix& kernel, const ConvGeometry& g) {
  Matrix op = Matrix::Zero(g.output_size(), g.input_size());
  for_each_tap(g, [&](int out_pos, int in_pos, int tap) {
    for (int k = 0; k < g.out_channels; ++k)
      for (int ch = 0; ch < g.in_channels; ++ch)
        op(out_pos * g.out_channels + k, in_pos * g.in_channels + ch) = kernel(k, tap * g.in_channels + ch);
  });
  return op;
}

void fold_conv_gradient(const Matrix& doperator, const ConvGeometry& g, Matrix& dkernel) {
  for_each_tap(g, [&](int out_pos, int in_pos, int tap) {
    for (int k = 0; k < g.out_channels; ++k)
      for (int ch = 0; ch < g.in_channels; ++ch)
        dkernel(k, tap * g.in_channels + ch) +=
            doperator(out_pos * g.out_channels + k, in_pos * g.in_channels + ch);
  });
}

Matrix conv2d_forward(const Matrix& input, const Matrix& kernel, const Matrix& bias,
                      const ConvGeometry& g, Activation act, ConvCache* cache) {
  assert(input.rows() == g.input_size());
  assert(kernel.rows() == g.out_channels && kernel.cols() == g.patch_size());
  Matrix z = lower_conv_kernel(kernel, g) * input;
  const Vector bias_per_output = bias.col(0).replicate(g.height * g.width, 1);
  z.colwise() += bias_per_output;
  Matrix y = apply_activation(z, act);
  if (cache) {
    cache->input = input;
    cache->output = y;
  }
  return y;
}

void conv2d_backward(const Matrix& upstream, const ConvCache& cache, const Matrix& kernel,
                     const ConvGeometry& g, Activation act, Matrix& dkernel, Matrix& dbias,
                     Matrix* dinput) {
  Matrix dz = upstream;
  activation_backward(dz, cache.output, act);
  const Matrix dop = dz * cache.input.transpose();
  fold_conv_gradient(dop, g, dkernel);
  const Vector row_sums = dz.rowwise().sum();
  dbias.col(0) += row_sums.reshaped(g.out_channels, g.height * g.width).rowwise().sum();
  if (dinput) *dinput = lower_conv_kernel(kernel, g).transpose() * dz;
}

Matrix dense_forward(const Matrix& x, const Matrix& weight, const Matrix& bias, Activation act,
                     DenseCache* cache) {
  Matrix z = weight * x;
  z.colwise() += bias.col(0);
  Matrix y = apply_activation(z, act);
  if (cache) {
    cache->input = x;
    cache->output = y;
  }
  return y;
}

void dense_backward(const Matrix& upstream, const DenseCache& cache, const Matrix& weight,
                    Activation act, Matrix& dweight, Matrix& dbias, Matrix* dinput) {
  Matrix dz = upstream;
  activation_backward(dz, cache.output, act);
  dweight.noalias() += dz * cache.input.transpose();
  dbias.col(0) += dz.rowwise().sum();
  if (dinput) *dinput = weight.transpose() * dz;
}

}  // namespace circadian::nn
