#include <doctest.h>

#include <random>

#include "circadian/gradcheck_suite.hpp"
#include "circadian/nn/gradcheck.hpp"
#include "circadian/nn/layers.hpp"
#include "circadian/nn/optimizer.hpp"
#include "circadian/nn/recurrent.hpp"
#include "oracles.hpp"

using namespace circadian::nn;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

std::vector<std::vector<double>> rows_of(const Matrix& m) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(r)].push_back(m(r, c));
  return out;
}

}  // namespace

TEST_CASE("conv: zero weights give zero output") {
  ConvGeometry g;
  std::mt19937_64 rng(1);
  const Matrix x = random_matrix(g.input_size(), 4, rng);
  const Matrix y = conv2d_forward(x, Matrix::Zero(6, g.patch_size()), Matrix::Zero(6, 1), g, Activation::relu);
  CHECK(y.rows() == g.output_size());
  CHECK(y.isZero(0.0));
}

TEST_CASE("conv: centre-tap kernel is the identity with same padding") {
  ConvGeometry g;
  g.in_channels = 1;
  g.out_channels = 1;
  Matrix k = Matrix::Zero(1, g.patch_size());
  k(0, 4) = 1.0;  // (kr, kc) = (1, 1)
  std::mt19937_64 rng(2);
  const Matrix x = random_matrix(25, 3, rng);
  const Matrix y = conv2d_forward(x, k, Matrix::Zero(1, 1), g, Activation::linear);
  CHECK((y - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("conv: matches a direct loop") {
  ConvGeometry g;
  std::mt19937_64 rng(3);
  const Matrix x = random_matrix(g.input_size(), 2, rng);
  const Matrix k = random_matrix(6, g.patch_size(), rng);
  const Matrix b = random_matrix(6, 1, rng);
  const Matrix y = conv2d_forward(x, k, b, g, Activation::linear);
  for (int n = 0; n < 2; ++n)
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < 5; ++c)
        for (int o = 0; o < 6; ++o) {
          double s = b(o, 0);
          for (int kr = 0; kr < 3; ++kr)
            for (int kc = 0; kc < 3; ++kc) {
              const int rr = r + kr - 1, cc = c + kc - 1;
              if (rr < 0 || rr >= 5 || cc < 0 || cc >= 5) continue;
              for (int ch = 0; ch < 2; ++ch) s += k(o, (kr * 3 + kc) * 2 + ch) * x((rr * 5 + cc) * 2 + ch, n);
            }
          REQUIRE(y((r * 5 + c) * 6 + o, n) == doctest::Approx(s).epsilon(1e-12));
        }
}

TEST_CASE("dense basics") {
  Matrix b(3, 1);
  b << 1.0, -2.0, 0.5;
  const Matrix x = Matrix::Ones(4, 2);
  const Matrix y = dense_forward(x, Matrix::Zero(3, 4), b, Activation::linear);
  CHECK(y.col(0) == b.col(0));
  CHECK(y.col(1) == b.col(0));
  CHECK(dense_forward(Matrix::Zero(4, 1), Matrix::Ones(3, 4), Matrix::Zero(3, 1), Activation::tanh).isZero(0.0));

  // tanh derivative at 0 is 1
  DenseCache cache;
  const Matrix W = Matrix::Identity(2, 2);
  dense_forward(Matrix::Zero(2, 1), W, Matrix::Zero(2, 1), Activation::tanh, &cache);
  Matrix dw = Matrix::Zero(2, 2), db = Matrix::Zero(2, 1), dx;
  dense_backward(Matrix::Ones(2, 1), cache, W, Activation::tanh, dw, db, &dx);
  CHECK(db(0, 0) == 1.0);
  CHECK(dx(1, 0) == 1.0);
}

TEST_CASE("relu gradient is exact where every unit is active") {
  std::mt19937_64 rng(4);
  Matrix x = random_matrix(3, 2, rng).cwiseAbs();
  Matrix W = random_matrix(2, 3, rng).cwiseAbs();
  const Matrix b = Matrix::Constant(2, 1, 0.5);
  const Matrix up = random_matrix(2, 2, rng);
  auto loss = [&] { return dense_forward(x, W, b, Activation::relu).cwiseProduct(up).sum(); };
  DenseCache cache;
  dense_forward(x, W, b, Activation::relu, &cache);
  Matrix dw = Matrix::Zero(2, 3), db = Matrix::Zero(2, 1), dx;
  dense_backward(up, cache, W, Activation::relu, dw, db, &dx);
  const auto report = finite_difference_check("relu", loss, {W.data(), 6}, {dw.data(), 6});
  CHECK(report.max_rel_error < 1e-8);
}

TEST_CASE("lstm forward matches a scalar reference") {
  std::mt19937_64 rng(5);
  const int T = 6, B = 2, in = 3, H = 4;
  const Matrix x = random_matrix(in, T * B, rng);
  const Matrix W = random_matrix(4 * H, in, rng, 0.5), U = random_matrix(4 * H, H, rng, 0.5);
  const Matrix b = random_matrix(4 * H, 1, rng, 0.2);
  const Matrix h = recurrent_forward(CellKind::lstm, x, T, B, {W, U, b});
  const auto Wr = rows_of(W), Ur = rows_of(U);
  std::vector<double> bias(b.data(), b.data() + b.size());
  for (int seq = 0; seq < B; ++seq) {
    oracle::LstmState s{std::vector<double>(H, 0.0), std::vector<double>(H, 0.0)};
    for (int t = 0; t < T; ++t) {
      const Eigen::Index col = t * B + seq;
      std::vector<double> xt(x.col(col).data(), x.col(col).data() + in);
      s = oracle::lstm_step(Wr, Ur, bias, xt, s);
      for (int k = 0; k < H; ++k) REQUIRE(h(k, col) == doctest::Approx(s.h[static_cast<std::size_t>(k)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("recurrent step agrees with the sequence forward") {
  std::mt19937_64 rng(6);
  for (auto kind : {CellKind::lstm, CellKind::gru, CellKind::rnn}) {
    const int T = 5, B = 3, in = 4, H = 3, G = gate_count(kind);
    const Matrix x = random_matrix(in, T * B, rng);
    const Matrix W = random_matrix(G * H, in, rng, 0.5), U = random_matrix(G * H, H, rng, 0.5);
    const Matrix b = random_matrix(G * H, 1, rng, 0.2);
    const Matrix seq = recurrent_forward(kind, x, T, B, {W, U, b});
    auto state = RecurrentState::zeros(H, B);
    for (int t = 0; t < T; ++t) {
      state = recurrent_step(kind, x.middleCols(t * B, B), state, {W, U, b});
      REQUIRE((state.h - seq.middleCols(t * B, B)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("recurrent: zero parameters and inputs stay at zero") {
  for (auto kind : {CellKind::lstm, CellKind::gru, CellKind::rnn}) {
    const int G = gate_count(kind);
    const Matrix h = recurrent_forward(kind, Matrix::Zero(3, 10), 10, 1,
                                       {Matrix::Zero(G * 4, 3), Matrix::Zero(G * 4, 4), Matrix::Zero(G * 4, 1)});
    CHECK(h.isZero(0.0));
  }
}

TEST_CASE("lstm: open forget gate and closed input gate hold the cell") {
  const int H = 2, in = 1;
  Matrix W = Matrix::Zero(4 * H, in), U = Matrix::Zero(4 * H, H), b = Matrix::Zero(4 * H, 1);
  // first step: input gate open so the cell picks up a value
  std::mt19937_64 rng(7);
  auto state = RecurrentState::zeros(H, 1);
  b.block(0, 0, H, 1).setConstant(50.0);       // i
  b.block(2 * H, 0, H, 1).setConstant(0.5);    // g
  state = recurrent_step(CellKind::lstm, Matrix::Zero(in, 1), state, {W, U, b});
  const Matrix c0 = state.c;
  b.block(0, 0, H, 1).setConstant(-50.0);      // i closed
  b.block(H, 0, H, 1).setConstant(50.0);       // f open
  for (int t = 0; t < 20; ++t) {
    state = recurrent_step(CellKind::lstm, random_matrix(in, 1, rng), state, {W, U, b});
    REQUIRE((state.c - c0).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("truncated bptt differs from full bptt only through cut paths") {
  std::mt19937_64 rng(8);
  const int T = 8, B = 1, in = 2, H = 3;
  const Matrix x = random_matrix(in, T * B, rng);
  const Matrix W = random_matrix(4 * H, in, rng, 0.5), U = random_matrix(4 * H, H, rng, 0.5);
  const Matrix b = random_matrix(4 * H, 1, rng, 0.2);
  RecurrentCache cache;
  recurrent_forward(CellKind::lstm, x, T, B, {W, U, b}, &cache);
  // upstream only at the first step: nothing crosses a chunk boundary
  Matrix up = Matrix::Zero(H, T * B);
  up.col(0) = random_matrix(H, 1, rng);
  Matrix dk1 = Matrix::Zero(W.rows(), W.cols()), dr1 = Matrix::Zero(U.rows(), U.cols()), db1 = Matrix::Zero(b.rows(), 1);
  Matrix dk2 = dk1, dr2 = dr1, db2 = db1;
  recurrent_backward(up, cache, {W, U, b}, {dk1, dr1, db1}, nullptr, 0);
  recurrent_backward(up, cache, {W, U, b}, {dk2, dr2, db2}, nullptr, 4);
  CHECK((dk1 - dk2).cwiseAbs().maxCoeff() < 1e-14);
  // upstream at the last step: chunk 4 cuts the path back to steps 0..3
  up.setZero();
  up.col(T - 1) = random_matrix(H, 1, rng);
  dk1.setZero();
  dk2.setZero();
  recurrent_backward(up, cache, {W, U, b}, {dk1, dr1, db1}, nullptr, 0);
  Matrix dx;
  recurrent_backward(up, cache, {W, U, b}, {dk2, dr2, db2}, &dx, 4);
  CHECK((dk1 - dk2).cwiseAbs().maxCoeff() > 1e-8);
  CHECK(dx.leftCols(4).isZero(0.0));
}

TEST_CASE("optimizers") {
  SUBCASE("sgd") {
    ParamArray p("w", {1}, 1, 1);
    p.value(0, 0) = 1.0;
    p.grad(0, 0) = 0.5;
    Optimizer opt({OptimizerKind::sgd, 0.001});
    opt.step({&p, 1});
    CHECK(p.value(0, 0) == doctest::Approx(0.9995).epsilon(1e-15));
  }
  SUBCASE("adam first step") {
    ParamArray p("w", {1}, 1, 1);
    p.value(0, 0) = 1.0;
    p.grad(0, 0) = 1.0;
    Optimizer opt({OptimizerKind::adam, 0.001});
    opt.step({&p, 1});
    // m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
    CHECK(p.value(0, 0) == doctest::Approx(1.0 - 0.001 / (1.0 + 1e-8)).epsilon(1e-14));
  }
  SUBCASE("zero gradients leave parameters unchanged") {
    for (auto kind : {OptimizerKind::adam, OptimizerKind::sgd, OptimizerKind::rmsprop}) {
      ParamArray p("w", {2, 2}, 2, 2);
      p.value << 1.0, -2.0, 3.0, 0.25;
      const Matrix before = p.value;
      Optimizer opt({kind, 0.01});
      for (int i = 0; i < 5; ++i) opt.step({&p, 1});
      REQUIRE(p.value == before);
    }
  }
  SUBCASE("rmsprop first step") {
    ParamArray p("w", {1}, 1, 1);
    p.value(0, 0) = 0.0;
    p.grad(0, 0) = 2.0;
    Optimizer opt({OptimizerKind::rmsprop, 0.01});
    opt.step({&p, 1});
    const double v = 0.1 * 4.0;
    CHECK(p.value(0, 0) == doctest::Approx(-0.01 * 2.0 / (std::sqrt(v) + 1e-7)).epsilon(1e-14));
  }
}

TEST_CASE("regularization") {
  ParamArray a("a", {2}, 2, 1);
  a.value << 1.0, -2.0;
  ParamArray* ps[] = {&a};
  CHECK(apply_regularization(ps, 0.0, 0.0) == 0.0);
  CHECK(a.grad.isZero(0.0));
  CHECK(apply_regularization(ps, 0.1, 0.0) == doctest::Approx(0.3));
  CHECK(a.grad(0, 0) == doctest::Approx(0.1));
  CHECK(a.grad(1, 0) == doctest::Approx(-0.1));
  ParamArray w("w", {1}, 1, 1);
  w.value(0, 0) = 2.0;
  ParamArray* ws[] = {&w};
  CHECK(apply_regularization(ws, 0.0, 0.5) == doctest::Approx(2.0));
  CHECK(w.grad(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("finite-difference checker reports a wrong gradient") {
  Matrix w(2, 1);
  w << 0.3, -0.7;
  auto loss = [&] { return w.squaredNorm(); };
  Matrix good = 2.0 * w, bad = 3.0 * w;
  CHECK(finite_difference_check("good", loss, {w.data(), 2}, {good.data(), 2}).passed());
  const auto r = finite_difference_check("bad", loss, {w.data(), 2}, {bad.data(), 2});
  CHECK_FALSE(r.passed());
  CHECK(r.exceedances == 2);
}

TEST_CASE("gradient check suite") {
  const auto reports = circadian::run_gradcheck_suite();
  CHECK(reports.size() > 20);
  for (const auto& r : reports) {
    INFO(r.name << " " << r.max_rel_error);
    CHECK(r.passed());
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("he_normal variance") {
  std::mt19937_64 rng(9);
  Matrix m(256, 512);
  initialize(m, Init::he_normal, 512, 256, rng);
  const double var = m.squaredNorm() / static_cast<double>(m.size());
  CHECK(var == doctest::Approx(2.0 / 512).epsilon(0.2));
}

TEST_CASE("orthogonal init") {
  std::mt19937_64 rng(10);
  Matrix m(16, 16);
  initialize(m, Init::orthogonal, 16, 16, rng);
  CHECK((m.transpose() * m - Matrix::Identity(16, 16)).cwiseAbs().maxCoeff() < 1e-12);
}
