#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>
#include <vector>

#include "flowpose/params.hpp"
#include "flowpose/tape.hpp"
#include "oracles.hpp"

using namespace flowpose;
using ad::Tape;
using ad::Var;

namespace {

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

// Reduces an arbitrary output to a scalar with a fixed random weighting so
// every output entry participates in the check.
Var weighted_sum(Tape& t, Var y, uint64_t seed) {
  Rng rng(seed);
  const Mat& v = t.val(y);
  Mat w = oracle::random_mat(rng, static_cast<int>(v.rows()), static_cast<int>(v.cols()));
  return t.sum(t.cmul(y, t.constant(w)));
}

double evaluate(const Builder& f, const std::vector<Mat>& inputs) {
  Tape t;
  std::vector<Var> vars;
  for (const Mat& m : inputs) vars.push_back(t.leaf(m, false));
  return t.scalar_val(weighted_sum(t, f(t, vars), 99));
}

void check_grads(const Builder& f, std::vector<Mat> inputs, double tol = 5e-6) {
  Tape t;
  std::vector<Var> vars;
  for (const Mat& m : inputs) vars.push_back(t.leaf(m, true));
  Var out = weighted_sum(t, f(t, vars), 99);
  t.backward(out);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Mat analytic = t.grad(vars[i]);
    Mat fd = oracle::fd_grad([&] { return evaluate(f, inputs); }, inputs[i]);
    const double err = oracle::max_rel_err(analytic, fd);
    INFO("input ", i, " max rel err ", err);
    CHECK(err < tol);
  }
}

}  // namespace

TEST_CASE("elementwise and broadcast ops: values and gradients") {
  Rng rng(1);
  Mat a = oracle::random_mat(rng, 4, 5);
  Mat b = oracle::random_mat(rng, 4, 5);
  Mat r = oracle::random_mat(rng, 1, 5);
  Mat c = oracle::random_mat(rng, 4, 1);

  check_grads([](Tape& t, const std::vector<Var>& v) { return t.add(v[0], v[1]); }, {a, b});
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.sub(v[0], v[1]); }, {a, b});
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.cmul(v[0], v[1]); }, {a, b});
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.scalar_mul(v[0], -2.5); }, {a});
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.add_scalar(v[0], 0.7); }, {a});
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.add_rowvec(v[0], v[1]); }, {a, r});
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.add_colvec(v[0], v[1]); }, {a, c});
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.mul_rowvec(v[0], v[1]); }, {a, r});
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.mul_colvec(v[0], v[1]); }, {a, c});
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.transpose(v[0]); }, {a});
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.cmul(v[0], v[0]); }, {a});
}

TEST_CASE("matmul value matches naive oracle; gradient checks") {
  Rng rng(2);
  Mat a = oracle::random_mat(rng, 3, 6);
  Mat b = oracle::random_mat(rng, 6, 4);
  Tape t;
  Var y = t.matmul(t.leaf(a), t.leaf(b));
  CHECK((t.val(y) - oracle::naive_matmul(a, b)).cwiseAbs().maxCoeff() < 1e-12);
  check_grads([](Tape& t2, const std::vector<Var>& v) { return t2.matmul(v[0], v[1]); }, {a, b});
}

TEST_CASE("activations") {
  Rng rng(3);
  Mat a = oracle::random_mat(rng, 5, 4);
  a.array() += 0.05;  // keep entries away from the relu kink
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.relu(v[0]); }, {a});
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.tanh_(v[0]); }, {a});
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.sigmoid(v[0]); }, {a});
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.softplus(v[0]); }, {a});
  Mat pos = a.cwiseAbs();
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.rsqrt_shift(v[0], 0.3); }, {pos});
}

TEST_CASE("reductions and shape ops") {
  Rng rng(4);
  Mat a = oracle::random_mat(rng, 6, 4);
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.row_mean(v[0]); }, {a});
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.col_mean(v[0]); }, {a});
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.row_group_mean(v[0], 3); }, {a});
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.sum(v[0]); }, {a});
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.mean(v[0]); }, {a});
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.block(v[0], 1, 1, 3, 2); }, {a});
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.reshape(v[0], 8, 3); }, {a});
  check_grads(
      [](Tape& t, const std::vector<Var>& v) { return t.vcat({v[0], v[1], v[0]}); },
      {a, oracle::random_mat(rng, 2, 4)});
  check_grads(
      [](Tape& t, const std::vector<Var>& v) { return t.hcat({v[0], v[1]}); },
      {a, oracle::random_mat(rng, 6, 3)});
}

TEST_CASE("reshape is row-major") {
  Mat a(2, 3);
  a << 1, 2, 3, 4, 5, 6;
  Tape t;
  const Mat y = t.val(t.reshape(t.leaf(a), 3, 2));
  Mat want(3, 2);
  want << 1, 2, 3, 4, 5, 6;
  CHECK((y - want).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("softmax rows: stochastic output, shift invariance, gradient") {
  Rng rng(5);
  Mat a = oracle::random_mat(rng, 5, 7, 2.0);
  Tape t;
  Var y = t.softmax_rows(t.leaf(a));
  for (int r = 0; r < 5; ++r) {
    CHECK(t.val(y).row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(t.val(y).row(r).minCoeff() >= 0.0);
  }
  Tape t2;
  Var shifted = t2.softmax_rows(t2.add_scalar(t2.leaf(a), 17.0));
  CHECK((t.val(y) - t2.val(shifted)).cwiseAbs().maxCoeff() < 1e-12);
  check_grads([](Tape& tt, const std::vector<Var>& v) { return tt.softmax_rows(v[0]); }, {a});
}

TEST_CASE("rowwise geometry ops") {
  Rng rng(6);
  Mat a = oracle::random_mat(rng, 5, 3);
  Mat b = oracle::random_mat(rng, 5, 3);
  a.array() += 0.5;  // keep rows away from zero norm
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.row_dot(v[0], v[1]); }, {a, b});
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.cross_rows(v[0], v[1]); }, {a, b});
  check_grads([](Tape& t, const std::vector<Var>& v) { return t.l2_normalize_rows(v[0]); }, {a});
}

TEST_CASE("gather with padding indices") {
  Mat a(2, 3);
  a << 1, 2, 3, 4, 5, 6;
  auto idx = std::make_shared<Eigen::MatrixXi>(2, 2);
  (*idx) << 0, 5, -1, 2;
  Tape t;
  const Mat y = t.val(t.gather(t.leaf(a), idx));
  CHECK(y(0, 0) == 1.0);
  CHECK(y(0, 1) == 6.0);
  CHECK(y(1, 0) == 0.0);
  CHECK(y(1, 1) == 3.0);
  Rng rng(7);
  Mat big = oracle::random_mat(rng, 4, 4);
  auto idx2 = std::make_shared<Eigen::MatrixXi>(3, 5);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 5; ++c) (*idx2)(r, c) = ((r * 5 + c) % 17) - 1;
  check_grads([&](Tape& t2, const std::vector<Var>& v) { return t2.gather(v[0], idx2); }, {big});
}

TEST_CASE("dropout: deterministic given seed, zero rate is identity") {
  Rng rng(8);
  Mat a = oracle::random_mat(rng, 6, 6);
  Tape t;
  Var x = t.leaf(a, true);
  CHECK(t.dropout(x, 0.0, rng).idx == x.idx);
  Rng d1(123), d2(123);
  Tape ta, tb;
  const Mat ya = ta.val(ta.dropout(ta.leaf(a), 0.4, d1));
  const Mat yb = tb.val(tb.dropout(tb.leaf(a), 0.4, d2));
  CHECK((ya - yb).cwiseAbs().maxCoeff() == 0.0);
  check_grads(
      [](Tape& t2, const std::vector<Var>& v) {
        Rng local(55);
        return t2.dropout(v[0], 0.3, local);
      },
      {a});
}

TEST_CASE("bilinear sample: interior values and position gradients") {
  const int w = 6, h = 5;
  Rng rng(9);
  auto field = std::make_shared<Mat>(oracle::random_mat(rng, w * h, 2));
  Mat pos(3, 2);
  pos << 1.3, 2.6, 0.4, 0.2, 4.55, 3.45;  // fractional, interior
  // 4-corner bilinear oracle on a linearly varying field must be exact.
  auto linear_field = std::make_shared<Mat>(w * h, 2);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      (*linear_field)(y * w + x, 0) = 2.0 * x - 0.5 * y + 1.0;
      (*linear_field)(y * w + x, 1) = -1.0 * x + 3.0 * y;
    }
  Tape t;
  const Mat y = t.val(t.bilinear_sample(t.leaf(pos), linear_field, w));
  for (int j = 0; j < 3; ++j) {
    CHECK(y(j, 0) == doctest::Approx(2.0 * pos(j, 0) - 0.5 * pos(j, 1) + 1.0).epsilon(1e-12));
    CHECK(y(j, 1) == doctest::Approx(-pos(j, 0) + 3.0 * pos(j, 1)).epsilon(1e-12));
  }
  check_grads(
      [&](Tape& t2, const std::vector<Var>& v) { return t2.bilinear_sample(v[0], field, w); },
      {pos});
  // Border clamp: out-of-range positions sample the edge and have dead gradients.
  Mat outside(1, 2);
  outside << -3.0, 2.2;
  Tape t3;
  Var p3 = t3.leaf(outside, true);
  Var s3 = t3.bilinear_sample(p3, field, w);
  const double v00 = t3.val(s3)(0, 0);
  CHECK(v00 == doctest::Approx(0.8 * (*field)(2 * w, 0) + 0.2 * (*field)(3 * w, 0)));
  t3.backward(t3.sum(s3));
  CHECK(t3.grad(p3)(0, 0) == 0.0);
  CHECK(t3.grad(p3)(0, 1) != 0.0);
}

TEST_CASE("3x3 stack ops match per-block products") {
  Rng rng(10);
  const int n = 4;
  Mat a = oracle::random_mat(rng, 3 * n, 3);
  Mat b = oracle::random_mat(rng, 3 * n, 3);
  Mat x = oracle::random_mat(rng, n, 3);
  Tape t;
  const Mat y = t.val(t.mat3_stack_mul(t.leaf(a), t.leaf(b)));
  const Mat z = t.val(t.mat3_stack_vec_mul(t.leaf(a), t.leaf(x)));
  for (int i = 0; i < n; ++i) {
    CHECK((y.middleRows<3>(3 * i) - a.middleRows<3>(3 * i) * b.middleRows<3>(3 * i))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
    CHECK((z.row(i).transpose() - a.middleRows<3>(3 * i) * x.row(i).transpose())
              .cwiseAbs()
              .maxCoeff() < 1e-12);
  }
  check_grads([](Tape& t2, const std::vector<Var>& v) { return t2.mat3_stack_mul(v[0], v[1]); },
              {a, b});
  check_grads(
      [](Tape& t2, const std::vector<Var>& v) { return t2.mat3_stack_vec_mul(v[0], v[1]); },
      {a, x});
}

TEST_CASE("layer_norm composite gradient") {
  Rng rng(11);
  Mat x = oracle::random_mat(rng, 4, 6);
  Mat gamma = oracle::random_mat(rng, 1, 6);
  Mat beta = oracle::random_mat(rng, 1, 6);
  check_grads(
      [](Tape& t, const std::vector<Var>& v) { return t.layer_norm(v[0], v[1], v[2]); },
      {x, gamma, beta}, 2e-5);
}

TEST_CASE("parameter nodes are memoized so gradients accumulate") {
  ad::ParamStore store;
  Rng rng(12);
  const int pid = store.add("w", "gen", oracle::random_mat(rng, 3, 3));
  Tape t(&store);
  Var w1 = t.param(pid);
  Var w2 = t.param(pid);
  CHECK(w1.idx == w2.idx);
  Var y = t.sum(t.add(w1, t.cmul(w2, w2)));
  t.backward(y);
  const Mat expect = Mat::Ones(3, 3) + 2.0 * store.entry(pid).value;
  CHECK((*t.param_grad(pid) - expect).cwiseAbs().maxCoeff() < 1e-12);
}
