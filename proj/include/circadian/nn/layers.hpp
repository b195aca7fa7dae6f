#pragma once

#include "circadian/nn/tensor.hpp"

namespace circadian::nn {

// Batched layers. Every matrix argument holds one sample per column.

/// Square-image 2D convolution, stride 1, same (zero) padding.
///
/// Input columns are (row, col, channel) flattened channels-last, i.e. element
/// (r * width + c) * in_channels + ch. Outputs follow the same convention with
/// out_channels. The kernel matrix is out_channels x (kernel * kernel * in),
/// column index (kr * kernel + kc) * in_channels + ch.
struct ConvGeometry {
  int height = 5;
  int width = 5;
  int in_channels = 2;
  int out_channels = 6;
  int kernel = 3;

  int input_size() const { return height * width * in_channels; }
  int output_size() const { return height * width * out_channels; }
  int patch_size() const { return kernel * kernel * in_channels; }
};

/// The convolution written out as a dense output_size x input_size operator
/// (a 5x5 image keeps it at 150 x 50).
Matrix lower_conv_kernel(const Matrix& kernel, const ConvGeometry& g);

/// Adds the entries of an operator-shaped gradient back onto the kernel.
void fold_conv_gradient(const Matrix& doperator, const ConvGeometry& g, Matrix& dkernel);

struct ConvCache {
  Matrix input;
  Matrix output;  // post-activation, output_size x N
};

Matrix conv2d_forward(const Matrix& input, const Matrix& kernel, const Matrix& bias,
                      const ConvGeometry& g, Activation act, ConvCache* cache = nullptr);

/// Accumulates into dkernel / dbias; writes the input gradient if requested.
void conv2d_backward(const Matrix& upstream, const ConvCache& cache, const Matrix& kernel,
                     const ConvGeometry& g, Activation act, Matrix& dkernel, Matrix& dbias,
                     Matrix* dinput = nullptr);

struct DenseCache {
  Matrix input;
  Matrix output;  // post-activation
};

/// y = act(W x + b).
Matrix dense_forward(const Matrix& x, const Matrix& weight, const Matrix& bias, Activation act,
                     DenseCache* cache = nullptr);

void dense_backward(const Matrix& upstream, const DenseCache& cache, const Matrix& weight,
                    Activation act, Matrix& dweight, Matrix& dbias, Matrix* dinput = nullptr);

}  // namespace circadian::nn
