#include "circadian/nn/recurrent.hpp"

namespace circadian::nn {

namespace {

// Advances one step. `zx` holds kernel * x + bias for the batch. Writes the
// post-nonlinearity gates and the new state.
void step_core(CellKind kind, const Matrix& zx, const Matrix& h_prev, const Matrix& c_prev,
               const Matrix& recurrent, Matrix& gates, Matrix& h, Matrix& c) {
  const Eigen::Index H = h_prev.rows();
  switch (kind) {
    case CellKind::lstm: {
      Matrix z = zx;
      z.noalias() += recurrent * h_prev;
      gates.resize(4 * H, z.cols());
      gates.topRows(2 * H) = sigmoid_array(z.topRows(2 * H).array()).matrix();
      gates.middleRows(2 * H, H) = fast_tanh(z.middleRows(2 * H, H).array()).matrix();
      gates.bottomRows(H) = sigmoid_array(z.bottomRows(H).array()).matrix();
      const auto i = gates.topRows(H).array();
      const auto f = gates.middleRows(H, H).array();
      const auto g = gates.middleRows(2 * H, H).array();
      const auto o = gates.bottomRows(H).array();
      c = (f * c_prev.array() + i * g).matrix();
      h = (o * fast_tanh(c.array())).matrix();
      return;
    }
    case CellKind::gru: {
      Matrix zr = zx.topRows(2 * H);
      zr.noalias() += recurrent.topRows(2 * H) * h_prev;
      gates.resize(3 * H, zx.cols());
      gates.topRows(2 * H) = sigmoid_array(zr.array()).matrix();
      const Matrix rh = (gates.middleRows(H, H).array() * h_prev.array()).matrix();
      Matrix a = zx.bottomRows(H);
      a.noalias() += recurrent.bottomRows(H) * rh;
      gates.bottomRows(H) = fast_tanh(a.array()).matrix();
      const auto zg = gates.topRows(H).array();
      h = (zg * h_prev.array() + (1.0 - zg) * gates.bottomRows(H).array()).matrix();
      c.resize(0, 0);
      return;
    }
    case CellKind::rnn: {
      Matrix a = zx;
      a.noalias() += recurrent * h_prev;
      gates = fast_tanh(a.array()).matrix();
      h = gates;
      c.resize(0, 0);
      return;
    }
  }
}

}  // namespace

std::string_view to_string(CellKind k) {
  switch (k) {
    case CellKind::lstm: return "lstm";
    case CellKind::gru: return "gru";
    case CellKind::rnn: return "rnn";
  }
  return "?";
}

RecurrentState recurrent_step(CellKind kind, const Matrix& x, const RecurrentState& prev,
                              const RecurrentWeights& w) {
  Matrix zx = w.kernel * x;
  zx.colwise() += w.bias.col(0);
  RecurrentState next;
  Matrix gates;
  const Matrix c_prev = kind == CellKind::lstm ? prev.c : Matrix();
  step_core(kind, zx, prev.h, c_prev, w.recurrent, gates, next.h, next.c);
  require_finite(next.h, "recurrent step");
  return next;
}

namespace {

// Fused LSTM sequence pass: gates are written in place into their cache
// columns, so the loop allocates nothing.
void lstm_forward(const Matrix& x, int steps, Eigen::Index batch, const RecurrentWeights& w,
                  Matrix& gates, Matrix& cells, Matrix& cell_tanh, Matrix& hidden) {
  const Eigen::Index H = w.recurrent.cols();
  const Eigen::Index B = batch;
  gates.noalias() = w.kernel * x;
  gates.colwise() += w.bias.col(0);
  cells.resize(H, steps * B);
  cell_tanh.resize(H, steps * B);
  hidden.resize(H, steps * B);
  for (int t = 0; t < steps; ++t) {
    const Eigen::Index col = t * B;
    auto z = gates.middleCols(col, B);
    if (t > 0) z.noalias() += w.recurrent * hidden.middleCols(col - B, B);
    z.topRows(2 * H).array() = sigmoid_array(z.topRows(2 * H).array());
    z.middleRows(2 * H, H).array() = fast_tanh(z.middleRows(2 * H, H).array());
    z.bottomRows(H).array() = sigmoid_array(z.bottomRows(H).array());
    auto c = cells.middleCols(col, B).array();
    if (t > 0) {
      c = z.middleRows(H, H).array() * cells.middleCols(col - B, B).array() +
          z.topRows(H).array() * z.middleRows(2 * H, H).array();
    } else {
      c = z.topRows(H).array() * z.middleRows(2 * H, H).array();
    }
    cell_tanh.middleCols(col, B).array() = fast_tanh(c);
    hidden.middleCols(col, B).array() = z.bottomRows(H).array() * cell_tanh.middleCols(col, B).array();
  }
}

}  // namespace

Matrix recurrent_forward(CellKind kind, const Matrix& x, int steps, Eigen::Index batch,
                         const RecurrentWeights& w, RecurrentCache* cache) {
  if (kind == CellKind::lstm) {
    Matrix gates, cells, cell_tanh, hidden;
    lstm_forward(x, steps, batch, w, gates, cells, cell_tanh, hidden);
    require_finite(hidden, "recurrent forward");
    if (cache) {
      cache->kind = kind;
      cache->steps = steps;
      cache->batch = batch;
      cache->input = x;
      cache->gates = std::move(gates);
      cache->cells = std::move(cells);
      cache->cell_tanh = std::move(cell_tanh);
      cache->hidden = hidden;
    }
    return hidden;
  }
  const Eigen::Index H = w.recurrent.cols();
  const Eigen::Index G = gate_count(kind);
  Matrix zx = w.kernel * x;
  zx.colwise() += w.bias.col(0);

  Matrix hidden(H, steps * batch);
  Matrix gates_all(G * H, steps * batch);
  Matrix cells(kind == CellKind::lstm ? H : 0, steps * batch);
  Matrix h = Matrix::Zero(H, batch);
  Matrix c = Matrix::Zero(H, batch);
  Matrix gates, h_next, c_next;
  for (int t = 0; t < steps; ++t) {
    const Eigen::Index col = t * batch;
    step_core(kind, zx.middleCols(col, batch), h, c, w.recurrent, gates, h_next, c_next);
    gates_all.middleCols(col, batch) = gates;
    hidden.middleCols(col, batch) = h_next;
    if (kind == CellKind::lstm) cells.middleCols(col, batch) = c_next;
    h.swap(h_next);
    if (kind == CellKind::lstm) c.swap(c_next);
  }
  require_finite(hidden, "recurrent forward");
  if (cache) {
    cache->kind = kind;
    cache->steps = steps;
    cache->batch = batch;
    cache->input = x;
    cache->gates = std::move(gates_all);
    cache->cells = std::move(cells);
    cache->hidden = hidden;
  }
  return hidden;
}

namespace {

bool chunk_boundary(int t, int steps, int bptt) { return bptt > 0 && t + 1 < steps && (t + 1) % bptt == 0; }

void lstm_backward(const Matrix& upstream, const RecurrentCache& cache, const RecurrentWeights& w,
                   RecurrentGrads g, Matrix* dinput, int bptt) {
  const Eigen::Index H = w.recurrent.cols();
  const Eigen::Index B = cache.batch;
  const int T = cache.steps;
  Matrix dz(4 * H, T * B);
  Matrix dh(H, B);
  Matrix dh_next = Matrix::Zero(H, B);
  Eigen::ArrayXXd dc(H, B);
  Eigen::ArrayXXd dc_next = Eigen::ArrayXXd::Zero(H, B);
  for (int t = T - 1; t >= 0; --t) {
    const Eigen::Index col = t * B;
    if (chunk_boundary(t, T, bptt)) {
      dh_next.setZero();
      dc_next.setZero();
    }
    dh = upstream.middleCols(col, B) + dh_next;
    const auto gates = cache.gates.middleCols(col, B);
    const auto i = gates.topRows(H).array();
    const auto f = gates.middleRows(H, H).array();
    const auto gg = gates.middleRows(2 * H, H).array();
    const auto o = gates.bottomRows(H).array();
    const auto tc = cache.cell_tanh.middleCols(col, B).array();
    auto dzt = dz.middleCols(col, B);
    dc = dh.array() * o * (1.0 - tc.square()) + dc_next;
    dzt.topRows(H).array() = dc * gg * i * (1.0 - i);
    if (t > 0) {
      dzt.middleRows(H, H).array() = dc * cache.cells.middleCols(col - B, B).array() * f * (1.0 - f);
    } else {
      dzt.middleRows(H, H).setZero();
    }
    dzt.middleRows(2 * H, H).array() = dc * i * (1.0 - gg.square());
    dzt.bottomRows(H).array() = dh.array() * tc * o * (1.0 - o);
    dc_next = dc * f;
    dh_next.noalias() = w.recurrent.transpose() * dzt;
  }
  // The state before step 0 is zero, so step 0 adds nothing to the recurrent gradient.
  if (T > 1)
    g.recurrent.noalias() += dz.rightCols((T - 1) * B) * cache.hidden.leftCols((T - 1) * B).transpose();
  g.kernel.noalias() += dz * cache.input.transpose();
  g.bias.col(0) += dz.rowwise().sum();
  if (dinput) *dinput = w.kernel.transpose() * dz;
  require_finite(dz, "recurrent backward");
}

}  // namespace

void recurrent_backward(const Matrix& upstream, const RecurrentCache& cache, const RecurrentWeights& w,
                        RecurrentGrads g, Matrix* dinput, int bptt) {
  if (cache.kind == CellKind::lstm) {
    lstm_backward(upstream, cache, w, g, dinput, bptt);
    return;
  }
  const Eigen::Index H = w.recurrent.cols();
  const Eigen::Index B = cache.batch;
  const int T = cache.steps;
  const Eigen::Index G = gate_count(cache.kind);
  const Matrix zero = Matrix::Zero(H, B);

  Matrix dz(G * H, T * B);       // pre-activation gradients
  Matrix hprev_all(H, T * B);    // operand of the recurrent matmul, per step
  Matrix dh_next = Matrix::Zero(H, B);
  Matrix dc_next = Matrix::Zero(H, B);

  for (int t = T - 1; t >= 0; --t) {
    const Eigen::Index col = t * B;
    if (chunk_boundary(t, T, bptt)) dh_next.setZero();
    const auto h_prev = t > 0 ? cache.hidden.middleCols(col - B, B) : zero.middleCols(0, B);
    const Matrix dh = upstream.middleCols(col, B) + dh_next;
    auto gates = cache.gates.middleCols(col, B);
    auto dzt = dz.middleCols(col, B);

    switch (cache.kind) {
      case CellKind::lstm:
        break;
      case CellKind::gru: {
        const auto zg = gates.topRows(H).array();
        const auto r = gates.middleRows(H, H).array();
        const auto hh = gates.bottomRows(H).array();
        const Eigen::ArrayXXd dzg = dh.array() * (h_prev.array() - hh);
        const Eigen::ArrayXXd dah = dh.array() * (1.0 - zg) * (1.0 - hh.square());
        dzt.bottomRows(H) = dah.matrix();
        const Matrix drh = w.recurrent.bottomRows(H).transpose() * dzt.bottomRows(H);
        const Eigen::ArrayXXd dr = drh.array() * h_prev.array();
        dzt.topRows(H) = (dzg * zg * (1.0 - zg)).matrix();
        dzt.middleRows(H, H) = (dr * r * (1.0 - r)).matrix();
        Matrix dhp = (dh.array() * zg + drh.array() * r).matrix();
        dhp.noalias() += w.recurrent.topRows(2 * H).transpose() * dzt.topRows(2 * H);
        dh_next = std::move(dhp);
        hprev_all.middleCols(col, B) = h_prev;
        // The candidate block multiplies r * h_prev; accumulate it directly.
        g.recurrent.bottomRows(H).noalias() += dzt.bottomRows(H) * (r * h_prev.array()).matrix().transpose();
        break;
      }
      case CellKind::rnn: {
        const auto hv = gates.array();
        dzt = (dh.array() * (1.0 - hv.square())).matrix();
        hprev_all.middleCols(col, B) = h_prev;
        dh_next.noalias() = w.recurrent.transpose() * dzt;
        break;
      }
    }
  }

  if (cache.kind == CellKind::gru) {
    g.recurrent.topRows(2 * H).noalias() += dz.topRows(2 * H) * hprev_all.transpose();
  } else {
    g.recurrent.noalias() += dz * hprev_all.transpose();
  }
  g.kernel.noalias() += dz * cache.input.transpose();
  g.bias.col(0) += dz.rowwise().sum();
  if (dinput) *dinput = w.kernel.transpose() * dz;
  require_finite(dz, "recurrent backward");
}

}  // namespace circadian::nn
