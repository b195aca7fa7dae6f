#pragma once

#include <string_view>

#include "circadian/nn/tensor.hpp"

namespace circadian::nn {

enum class CellKind { lstm, gru, rnn };

std::string_view to_string(CellKind k);

/// Number of stacked gate blocks in the fused weight matrices.
constexpr int gate_count(CellKind k) {
  switch (k) {
    case CellKind::lstm: return 4;
    case CellKind::gru: return 3;
    case CellKind::rnn: return 1;
  }
  return 1;
}

/// Read-only view of one recurrent layer's parameters.
///
/// kernel: G*H x in, recurrent: G*H x H, bias: G*H x 1, with gate blocks
/// ordered (i, f, g, o) for LSTM, (z, r, h) for GRU.
struct RecurrentWeights {
  const Matrix& kernel;
  const Matrix& recurrent;
  const Matrix& bias;
};

struct RecurrentGrads {
  Matrix& kernel;
  Matrix& recurrent;
  Matrix& bias;
};

/// Hidden state for a batch of independent sequences (one per column).
/// `c` is only used by the LSTM.
struct RecurrentState {
  Matrix h;
  Matrix c;

  static RecurrentState zeros(int width, Eigen::Index batch) {
    return {Matrix::Zero(width, batch), Matrix::Zero(width, batch)};
  }
};

/// One step for a batch: x is in x B. Returns the new state; the output of
/// the layer is the new `h`.
RecurrentState recurrent_step(CellKind kind, const Matrix& x, const RecurrentState& prev,
                              const RecurrentWeights& w);

/// Everything the backward pass needs from a sequence forward pass.
struct RecurrentCache {
  CellKind kind = CellKind::lstm;
  int steps = 0;
  Eigen::Index batch = 0;
  Matrix input;   // in x T*B
  Matrix gates;   // G*H x T*B, post-nonlinearity
  Matrix cells;   // LSTM cell states, H x T*B
  Matrix cell_tanh;  // tanh of `cells`
  Matrix hidden;  // H x T*B
};

/// Runs `steps` time steps from a zero state. Columns are time-major:
/// column t * batch + b holds sequence b at step t.
Matrix recurrent_forward(CellKind kind, const Matrix& x, int steps, Eigen::Index batch,
                         const RecurrentWeights& w, RecurrentCache* cache = nullptr);

/// Backpropagation through time. `upstream` is dLoss/dh for every column.
/// Gradients are accumulated into `g`. With bptt > 0 the state gradient is cut
/// every `bptt` steps (truncated BPTT over consecutive chunks).
void recurrent_backward(const Matrix& upstream, const RecurrentCache& cache, const RecurrentWeights& w,
                        RecurrentGrads g, Matrix* dinput = nullptr, int bptt = 0);

}  // namespace circadian::nn
