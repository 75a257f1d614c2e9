#include "flowpose/tape.hpp"

#include <cmath>

#include "flowpose/params.hpp"

namespace flowpose::ad {

namespace {

double stable_softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

int Tape::push(Node n) {
  FLOWPOSE_REQUIRE(!swept_, "tape already swept; build a fresh tape");
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::leaf(Mat v, bool requires_grad) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(v);
  n.requires_grad = requires_grad;
  return Var{push(std::move(n))};
}

Var Tape::scalar_leaf(double v, bool requires_grad) {
  Mat m(1, 1);
  m(0, 0) = v;
  return leaf(std::move(m), requires_grad);
}

Var Tape::param(int pid) {
  FLOWPOSE_REQUIRE(params_ != nullptr, "tape has no parameter store bound");
  auto it = param_nodes_.find(pid);
  if (it != param_nodes_.end()) return Var{it->second};
  Var v = leaf(params_->entry(pid).value, true);
  param_nodes_.emplace(pid, v.idx);
  return v;
}

Var Tape::unary(Op op, Var a, double scalar) {
  Node n;
  n.op = op;
  n.a = a.idx;
  n.scalar = scalar;
  n.requires_grad = nodes_[a.idx].requires_grad;
  const Mat& x = nodes_[a.idx].value;
  switch (op) {
    case Op::ScalarMul: n.value = scalar * x; break;
    case Op::AddScalar: n.value = x.array() + scalar; break;
    case Op::Transpose: n.value = x.transpose(); break;
    case Op::Relu: n.value = x.cwiseMax(0.0); break;
    case Op::Tanh: n.value = x.array().tanh(); break;
    case Op::Sigmoid: n.value = x.unaryExpr([](double t) { return sigmoid_scalar(t); }); break;
    case Op::Softplus: n.value = x.unaryExpr([](double t) { return stable_softplus(t); }); break;
    case Op::RsqrtShift:
      n.value = (x.array() + scalar).pow(-0.5);
      break;
    case Op::RowMean: n.value = x.rowwise().mean(); break;
    case Op::ColMean: n.value = x.colwise().mean(); break;
    case Op::Sum: {
      Mat s(1, 1);
      s(0, 0) = x.sum();
      n.value = s;
      break;
    }
    case Op::SoftmaxRows: {
      Mat y(x.rows(), x.cols());
      for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mx = x.row(r).maxCoeff();
        Eigen::ArrayXd e = (x.row(r).array() - mx).exp();
        y.row(r) = (e / e.sum()).matrix();
      }
      n.value = y;
      break;
    }
    case Op::L2NormalizeRows: {
      Mat y(x.rows(), x.cols());
      for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double nr = x.row(r).norm();
        FLOWPOSE_REQUIRE(nr > 1e-12, "l2_normalize_rows: zero row");
        y.row(r) = x.row(r) / nr;
      }
      n.value = y;
      break;
    }
    default: FLOWPOSE_REQUIRE(false, "bad unary op");
  }
  return Var{push(std::move(n))};
}

Var Tape::binary(Op op, Var a, Var b) {
  Node n;
  n.op = op;
  n.a = a.idx;
  n.b = b.idx;
  n.requires_grad = nodes_[a.idx].requires_grad || nodes_[b.idx].requires_grad;
  const Mat& x = nodes_[a.idx].value;
  const Mat& y = nodes_[b.idx].value;
  switch (op) {
    case Op::Add:
      FLOWPOSE_REQUIRE(x.rows() == y.rows() && x.cols() == y.cols(), "add: shape mismatch");
      n.value = x + y;
      break;
    case Op::Sub:
      FLOWPOSE_REQUIRE(x.rows() == y.rows() && x.cols() == y.cols(), "sub: shape mismatch");
      n.value = x - y;
      break;
    case Op::CMul:
      FLOWPOSE_REQUIRE(x.rows() == y.rows() && x.cols() == y.cols(), "cmul: shape mismatch");
      n.value = x.cwiseProduct(y);
      break;
    case Op::MatMul:
      FLOWPOSE_REQUIRE(x.cols() == y.rows(), "matmul: inner dims");
      n.value = x * y;
      break;
    case Op::AddRowVec:
      FLOWPOSE_REQUIRE(y.rows() == 1 && y.cols() == x.cols(), "add_rowvec: shape");
      n.value = x.rowwise() + y.row(0);
      break;
    case Op::AddColVec:
      FLOWPOSE_REQUIRE(y.cols() == 1 && y.rows() == x.rows(), "add_colvec: shape");
      n.value = x.colwise() + y.col(0);
      break;
    case Op::MulRowVec:
      FLOWPOSE_REQUIRE(y.rows() == 1 && y.cols() == x.cols(), "mul_rowvec: shape");
      n.value = x.array().rowwise() * y.row(0).array();
      break;
    case Op::MulColVec:
      FLOWPOSE_REQUIRE(y.cols() == 1 && y.rows() == x.rows(), "mul_colvec: shape");
      n.value = x.array().colwise() * y.col(0).array();
      break;
    case Op::RowDot:
      FLOWPOSE_REQUIRE(x.rows() == y.rows() && x.cols() == y.cols(), "row_dot: shape");
      n.value = x.cwiseProduct(y).rowwise().sum();
      break;
    case Op::CrossRows: {
      FLOWPOSE_REQUIRE(x.cols() == 3 && y.cols() == 3 && x.rows() == y.rows(), "cross_rows: shape");
      Mat z(x.rows(), 3);
      for (Eigen::Index r = 0; r < x.rows(); ++r)
        z.row(r) = Vec3(x.row(r)).cross(Vec3(y.row(r))).transpose();
      n.value = z;
      break;
    }
    case Op::Mat3StackMul: {
      FLOWPOSE_REQUIRE(x.cols() == 3 && y.cols() == 3 && x.rows() == y.rows() &&
                           x.rows() % 3 == 0,
                       "mat3_stack_mul: shape");
      Mat z(x.rows(), 3);
      for (Eigen::Index i = 0; i < x.rows() / 3; ++i)
        z.middleRows<3>(3 * i) = x.middleRows<3>(3 * i) * y.middleRows<3>(3 * i);
      n.value = z;
      break;
    }
    case Op::Mat3StackVecMul: {
      FLOWPOSE_REQUIRE(x.cols() == 3 && y.cols() == 3 && x.rows() == 3 * y.rows(),
                       "mat3_stack_vec_mul: shape");
      Mat z(y.rows(), 3);
      for (Eigen::Index i = 0; i < y.rows(); ++i)
        z.row(i) = (x.middleRows<3>(3 * i) * y.row(i).transpose()).transpose();
      n.value = z;
      break;
    }
    default: FLOWPOSE_REQUIRE(false, "bad binary op");
  }
  return Var{push(std::move(n))};
}

Var Tape::add(Var a, Var b) { return binary(Op::Add, a, b); }
Var Tape::sub(Var a, Var b) { return binary(Op::Sub, a, b); }
Var Tape::cmul(Var a, Var b) { return binary(Op::CMul, a, b); }
Var Tape::matmul(Var a, Var b) { return binary(Op::MatMul, a, b); }
Var Tape::scalar_mul(Var a, double c) { return unary(Op::ScalarMul, a, c); }
Var Tape::add_scalar(Var a, double c) { return unary(Op::AddScalar, a, c); }
Var Tape::add_rowvec(Var a, Var r) { return binary(Op::AddRowVec, a, r); }
Var Tape::add_colvec(Var a, Var c) { return binary(Op::AddColVec, a, c); }
Var Tape::mul_rowvec(Var a, Var r) { return binary(Op::MulRowVec, a, r); }
Var Tape::mul_colvec(Var a, Var c) { return binary(Op::MulColVec, a, c); }
Var Tape::transpose(Var a) { return unary(Op::Transpose, a); }
Var Tape::softmax_rows(Var a) { return unary(Op::SoftmaxRows, a); }
Var Tape::relu(Var a) { return unary(Op::Relu, a); }
Var Tape::tanh_(Var a) { return unary(Op::Tanh, a); }
Var Tape::sigmoid(Var a) { return unary(Op::Sigmoid, a); }
Var Tape::softplus(Var a) { return unary(Op::Softplus, a); }
Var Tape::rsqrt_shift(Var a, double shift) { return unary(Op::RsqrtShift, a, shift); }
Var Tape::row_mean(Var a) { return unary(Op::RowMean, a); }
Var Tape::col_mean(Var a) { return unary(Op::ColMean, a); }
Var Tape::sum(Var a) { return unary(Op::Sum, a); }
Var Tape::row_dot(Var a, Var b) { return binary(Op::RowDot, a, b); }
Var Tape::cross_rows(Var a, Var b) { return binary(Op::CrossRows, a, b); }
Var Tape::l2_normalize_rows(Var a) { return unary(Op::L2NormalizeRows, a); }
Var Tape::mat3_stack_mul(Var a, Var b) { return binary(Op::Mat3StackMul, a, b); }
Var Tape::mat3_stack_vec_mul(Var a, Var x) { return binary(Op::Mat3StackVecMul, a, x); }

Var Tape::mean(Var a) {
  const Mat& x = val(a);
  return scalar_mul(sum(a), 1.0 / static_cast<double>(x.size()));
}

Var Tape::block(Var a, int r0, int c0, int rows, int cols) {
  const Mat& x = val(a);
  FLOWPOSE_REQUIRE(r0 >= 0 && c0 >= 0 && r0 + rows <= x.rows() && c0 + cols <= x.cols(),
                   "block: out of range");
  Node n;
  n.op = Op::Block;
  n.a = a.idx;
  n.r0 = r0;
  n.c0 = c0;
  n.rr = rows;
  n.cc = cols;
  n.requires_grad = nodes_[a.idx].requires_grad;
  n.value = x.block(r0, c0, rows, cols);
  return Var{push(std::move(n))};
}

Var Tape::row_group_mean(Var a, int group) {
  const Mat& x = val(a);
  FLOWPOSE_REQUIRE(group > 0 && x.rows() % group == 0, "row_group_mean: bad group");
  Node n;
  n.op = Op::RowGroupMean;
  n.a = a.idx;
  n.r0 = group;
  n.requires_grad = nodes_[a.idx].requires_grad;
  Mat y(x.rows() / group, x.cols());
  for (Eigen::Index g = 0; g < y.rows(); ++g)
    y.row(g) = x.middleRows(g * group, group).colwise().mean();
  n.value = std::move(y);
  return Var{push(std::move(n))};
}

Var Tape::vcat(const std::vector<Var>& parts) {
  FLOWPOSE_REQUIRE(!parts.empty(), "vcat: empty");
  Node n;
  n.op = Op::VCat;
  Eigen::Index rows = 0;
  const Eigen::Index cols = val(parts[0]).cols();
  for (Var p : parts) {
    FLOWPOSE_REQUIRE(val(p).cols() == cols, "vcat: column mismatch");
    rows += val(p).rows();
    n.multi.push_back(p.idx);
    n.requires_grad = n.requires_grad || nodes_[p.idx].requires_grad;
  }
  Mat y(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    y.middleRows(at, val(p).rows()) = val(p);
    at += val(p).rows();
  }
  n.value = std::move(y);
  return Var{push(std::move(n))};
}

Var Tape::hcat(const std::vector<Var>& parts) {
  FLOWPOSE_REQUIRE(!parts.empty(), "hcat: empty");
  Node n;
  n.op = Op::HCat;
  Eigen::Index cols = 0;
  const Eigen::Index rows = val(parts[0]).rows();
  for (Var p : parts) {
    FLOWPOSE_REQUIRE(val(p).rows() == rows, "hcat: row mismatch");
    cols += val(p).cols();
    n.multi.push_back(p.idx);
    n.requires_grad = n.requires_grad || nodes_[p.idx].requires_grad;
  }
  Mat y(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    y.middleCols(at, val(p).cols()) = val(p);
    at += val(p).cols();
  }
  n.value = std::move(y);
  return Var{push(std::move(n))};
}

Var Tape::gather(Var a, std::shared_ptr<const Eigen::MatrixXi> idx) {
  const Mat& x = val(a);
  Node n;
  n.op = Op::Gather;
  n.a = a.idx;
  n.idx = std::move(idx);
  n.requires_grad = nodes_[a.idx].requires_grad;
  const auto& map = *n.idx;
  const int total = static_cast<int>(x.size());
  Mat y(map.rows(), map.cols());
  const Eigen::Index xc = x.cols();
  for (Eigen::Index r = 0; r < map.rows(); ++r)
    for (Eigen::Index c = 0; c < map.cols(); ++c) {
      const int f = map(r, c);
      if (f < 0) {
        y(r, c) = 0.0;
      } else {
        FLOWPOSE_REQUIRE(f < total, "gather: index out of range");
        y(r, c) = x(f / xc, f % xc);
      }
    }
  n.value = std::move(y);
  return Var{push(std::move(n))};
}

Var Tape::reshape(Var a, int rows, int cols) {
  const Mat& x = val(a);
  FLOWPOSE_REQUIRE(static_cast<Eigen::Index>(rows) * cols == x.size(), "reshape: size mismatch");
  Node n;
  n.op = Op::Reshape;
  n.a = a.idx;
  n.rr = rows;
  n.cc = cols;
  n.requires_grad = nodes_[a.idx].requires_grad;
  Mat y(rows, cols);
  const Eigen::Index xc = x.cols();
  for (Eigen::Index k = 0; k < x.size(); ++k)
    y(k / cols, k % cols) = x(k / xc, k % xc);
  n.value = std::move(y);
  return Var{push(std::move(n))};
}

Var Tape::dropout(Var a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  FLOWPOSE_REQUIRE(rate < 1.0, "dropout: rate must be < 1");
  const Mat& x = val(a);
  auto mask = std::make_shared<Mat>(x.rows(), x.cols());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      (*mask)(r, c) = rng.uniform() < rate ? 0.0 : keep_scale;
  Node n;
  n.op = Op::DropoutMask;
  n.a = a.idx;
  n.aux = mask;
  n.requires_grad = nodes_[a.idx].requires_grad;
  n.value = x.cwiseProduct(*mask);
  return Var{push(std::move(n))};
}

namespace {

// Shared by forward and backward of BilinearSample. Returns the 4 corner flat
// rows and weights for border-clamped sampling at (x, y); `inside` flags tell
// whether the coordinate influences the sample (zero derivative outside).
struct Corners {
  int r00, r01, r10, r11;
  double wx, wy;
  bool dx_live, dy_live;
};

Corners corners(double x, double y, int width, int height) {
  Corners c;
  c.dx_live = x > 0.0 && x < width - 1;
  c.dy_live = y > 0.0 && y < height - 1;
  const double xc = std::clamp(x, 0.0, double(width - 1));
  const double yc = std::clamp(y, 0.0, double(height - 1));
  int x0 = static_cast<int>(std::floor(xc));
  int y0 = static_cast<int>(std::floor(yc));
  if (x0 > width - 2) x0 = width - 2 >= 0 ? width - 2 : 0;
  if (y0 > height - 2) y0 = height - 2 >= 0 ? height - 2 : 0;
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  c.wx = xc - x0;
  c.wy = yc - y0;
  c.r00 = y0 * width + x0;
  c.r01 = y0 * width + x1;
  c.r10 = y1 * width + x0;
  c.r11 = y1 * width + x1;
  return c;
}

}  // namespace

Var Tape::bilinear_sample(Var positions, std::shared_ptr<const Mat> field, int width) {
  const Mat& pos = val(positions);
  FLOWPOSE_REQUIRE(pos.cols() == 2, "bilinear_sample: positions must be J x 2");
  FLOWPOSE_REQUIRE(field->rows() % width == 0, "bilinear_sample: field rows not H*W");
  const int height = static_cast<int>(field->rows()) / width;
  Node n;
  n.op = Op::BilinearSample;
  n.a = positions.idx;
  n.aux = field;
  n.rr = width;
  n.cc = height;
  n.requires_grad = nodes_[positions.idx].requires_grad;
  Mat y(pos.rows(), field->cols());
  for (Eigen::Index j = 0; j < pos.rows(); ++j) {
    const Corners c = corners(pos(j, 0), pos(j, 1), width, height);
    y.row(j) = (1 - c.wy) * ((1 - c.wx) * field->row(c.r00) + c.wx * field->row(c.r01)) +
               c.wy * ((1 - c.wx) * field->row(c.r10) + c.wx * field->row(c.r11));
  }
  n.value = std::move(y);
  return Var{push(std::move(n))};
}

Var Tape::linear(Var x, Var w, Var bias) {
  Var y = matmul(x, w);
  if (bias.valid()) y = add_rowvec(y, bias);
  return y;
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
  Var mu = row_mean(x);
  Var xc = add_colvec(x, scalar_mul(mu, -1.0));
  Var var = row_mean(cmul(xc, xc));
  Var inv = rsqrt_shift(var, eps);
  Var xn = mul_colvec(xc, inv);
  return add_rowvec(mul_rowvec(xn, gamma), beta);
}

const Mat& Tape::grad(Var v) const {
  FLOWPOSE_REQUIRE(swept_, "grad: call backward first");
  FLOWPOSE_REQUIRE(has_grad(v), "grad: node has no gradient");
  return grads_[v.idx];
}

bool Tape::has_grad(Var v) const {
  return swept_ && v.idx >= 0 && static_cast<std::size_t>(v.idx) < grads_.size() &&
         grads_[v.idx].size() > 0;
}

const Mat* Tape::param_grad(int pid) const {
  auto it = param_nodes_.find(pid);
  if (it == param_nodes_.end()) return nullptr;
  if (!swept_ || grads_[it->second].size() == 0) return nullptr;
  return &grads_[it->second];
}

void Tape::accumulate(int i, std::vector<Mat>& g) const {
  const Node& n = nodes_[i];
  const Mat& gy = g[i];
  auto need = [&](int p) {
    return p >= 0 && nodes_[p].requires_grad;
  };
  auto ensure = [&](int p) -> Mat& {
    if (g[p].size() == 0) g[p] = Mat::Zero(nodes_[p].value.rows(), nodes_[p].value.cols());
    return g[p];
  };
  const Mat* av = n.a >= 0 ? &nodes_[n.a].value : nullptr;
  const Mat* bv = n.b >= 0 ? &nodes_[n.b].value : nullptr;
  switch (n.op) {
    case Op::Leaf: break;
    case Op::Add:
      if (need(n.a)) ensure(n.a) += gy;
      if (need(n.b)) ensure(n.b) += gy;
      break;
    case Op::Sub:
      if (need(n.a)) ensure(n.a) += gy;
      if (need(n.b)) ensure(n.b) -= gy;
      break;
    case Op::CMul:
      if (need(n.a)) ensure(n.a) += gy.cwiseProduct(*bv);
      if (need(n.b)) ensure(n.b) += gy.cwiseProduct(*av);
      break;
    case Op::MatMul:
      if (need(n.a)) ensure(n.a).noalias() += gy * bv->transpose();
      if (need(n.b)) ensure(n.b).noalias() += av->transpose() * gy;
      break;
    case Op::ScalarMul:
      if (need(n.a)) ensure(n.a) += n.scalar * gy;
      break;
    case Op::AddScalar:
      if (need(n.a)) ensure(n.a) += gy;
      break;
    case Op::AddRowVec:
      if (need(n.a)) ensure(n.a) += gy;
      if (need(n.b)) ensure(n.b) += gy.colwise().sum();
      break;
    case Op::AddColVec:
      if (need(n.a)) ensure(n.a) += gy;
      if (need(n.b)) ensure(n.b) += gy.rowwise().sum();
      break;
    case Op::MulRowVec:
      if (need(n.a)) ensure(n.a) += (gy.array().rowwise() * bv->row(0).array()).matrix();
      if (need(n.b)) ensure(n.b) += gy.cwiseProduct(*av).colwise().sum();
      break;
    case Op::MulColVec:
      if (need(n.a)) ensure(n.a) += (gy.array().colwise() * bv->col(0).array()).matrix();
      if (need(n.b)) ensure(n.b) += gy.cwiseProduct(*av).rowwise().sum();
      break;
    case Op::Transpose:
      if (need(n.a)) ensure(n.a) += gy.transpose();
      break;
    case Op::Block:
      if (need(n.a)) ensure(n.a).block(n.r0, n.c0, n.rr, n.cc) += gy;
      break;
    case Op::VCat: {
      Eigen::Index at = 0;
      for (int p : n.multi) {
        const Eigen::Index rows = nodes_[p].value.rows();
        if (need(p)) ensure(p) += gy.middleRows(at, rows);
        at += rows;
      }
      break;
    }
    case Op::HCat: {
      Eigen::Index at = 0;
      for (int p : n.multi) {
        const Eigen::Index cols = nodes_[p].value.cols();
        if (need(p)) ensure(p) += gy.middleCols(at, cols);
        at += cols;
      }
      break;
    }
    case Op::SoftmaxRows:
      if (need(n.a)) {
        Mat& ga = ensure(n.a);
        const Mat& y = n.value;
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
          const double dot = gy.row(r).dot(y.row(r));
          ga.row(r) += (gy.row(r).array() - dot).matrix().cwiseProduct(y.row(r));
        }
      }
      break;
    case Op::Relu:
      if (need(n.a))
        ensure(n.a) += gy.cwiseProduct(
            av->unaryExpr([](double t) { return t > 0.0 ? 1.0 : 0.0; }));
      break;
    case Op::Tanh:
      if (need(n.a))
        ensure(n.a) += gy.cwiseProduct((1.0 - n.value.array().square()).matrix());
      break;
    case Op::Sigmoid:
      if (need(n.a))
        ensure(n.a) += gy.cwiseProduct(
            n.value.cwiseProduct((1.0 - n.value.array()).matrix()));
      break;
    case Op::Softplus:
      if (need(n.a))
        ensure(n.a) += gy.cwiseProduct(
            av->unaryExpr([](double t) { return sigmoid_scalar(t); }));
      break;
    case Op::RsqrtShift:
      if (need(n.a))
        ensure(n.a) += gy.cwiseProduct((-0.5 * n.value.array().cube()).matrix());
      break;
    case Op::RowMean:
      if (need(n.a)) {
        const double inv = 1.0 / static_cast<double>(av->cols());
        ensure(n.a) += (gy * inv).replicate(1, av->cols());
      }
      break;
    case Op::ColMean:
      if (need(n.a)) {
        const double inv = 1.0 / static_cast<double>(av->rows());
        ensure(n.a) += (gy * inv).replicate(av->rows(), 1);
      }
      break;
    case Op::RowGroupMean:
      if (need(n.a)) {
        const int group = n.r0;
        const double inv = 1.0 / group;
        Mat& ga = ensure(n.a);
        for (Eigen::Index gr = 0; gr < n.value.rows(); ++gr)
          ga.middleRows(gr * group, group) += (gy.row(gr) * inv).replicate(group, 1);
      }
      break;
    case Op::Sum:
      if (need(n.a)) ensure(n.a).array() += gy(0, 0);
      break;
    case Op::RowDot:
      if (need(n.a)) ensure(n.a) += (bv->array().colwise() * gy.col(0).array()).matrix();
      if (need(n.b)) ensure(n.b) += (av->array().colwise() * gy.col(0).array()).matrix();
      break;
    case Op::CrossRows:
      // c = a x b: ga_i += b_i x gy_i, gb_i += gy_i x a_i
      if (need(n.a)) {
        Mat& ga = ensure(n.a);
        for (Eigen::Index r = 0; r < gy.rows(); ++r)
          ga.row(r) += Vec3(bv->row(r)).cross(Vec3(gy.row(r))).transpose();
      }
      if (need(n.b)) {
        Mat& gb = ensure(n.b);
        for (Eigen::Index r = 0; r < gy.rows(); ++r)
          gb.row(r) += Vec3(gy.row(r)).cross(Vec3(av->row(r))).transpose();
      }
      break;
    case Op::L2NormalizeRows:
      if (need(n.a)) {
        Mat& ga = ensure(n.a);
        for (Eigen::Index r = 0; r < gy.rows(); ++r) {
          const double nr = av->row(r).norm();
          const Eigen::RowVectorXd y = n.value.row(r);
          ga.row(r) += (gy.row(r) - gy.row(r).dot(y) * y) / nr;
        }
      }
      break;
    case Op::Gather:
      if (need(n.a)) {
        Mat& ga = ensure(n.a);
        const auto& map = *n.idx;
        const Eigen::Index xc = ga.cols();
        for (Eigen::Index r = 0; r < map.rows(); ++r)
          for (Eigen::Index c = 0; c < map.cols(); ++c) {
            const int f = map(r, c);
            if (f >= 0) ga(f / xc, f % xc) += gy(r, c);
          }
      }
      break;
    case Op::Reshape:
      if (need(n.a)) {
        Mat& ga = ensure(n.a);
        const Eigen::Index xc = ga.cols();
        const Eigen::Index yc = gy.cols();
        for (Eigen::Index k = 0; k < gy.size(); ++k)
          ga(k / xc, k % xc) += gy(k / yc, k % yc);
      }
      break;
    case Op::DropoutMask:
      if (need(n.a)) ensure(n.a) += gy.cwiseProduct(*n.aux);
      break;
    case Op::BilinearSample:
      if (need(n.a)) {
        Mat& ga = ensure(n.a);
        const Mat& field = *n.aux;
        const int width = n.rr;
        const int height = n.cc;
        for (Eigen::Index j = 0; j < av->rows(); ++j) {
          const Corners c = corners((*av)(j, 0), (*av)(j, 1), width, height);
          if (c.dx_live) {
            const Eigen::RowVectorXd dvdx =
                (1 - c.wy) * (field.row(c.r01) - field.row(c.r00)) +
                c.wy * (field.row(c.r11) - field.row(c.r10));
            ga(j, 0) += gy.row(j).dot(dvdx);
          }
          if (c.dy_live) {
            const Eigen::RowVectorXd dvdy =
                (1 - c.wx) * (field.row(c.r10) - field.row(c.r00)) +
                c.wx * (field.row(c.r11) - field.row(c.r01));
            ga(j, 1) += gy.row(j).dot(dvdy);
          }
        }
      }
      break;
    case Op::Mat3StackMul:
      if (need(n.a)) {
        Mat& ga = ensure(n.a);
        for (Eigen::Index i = 0; i < gy.rows() / 3; ++i)
          ga.middleRows<3>(3 * i).noalias() +=
              gy.middleRows<3>(3 * i) * bv->middleRows<3>(3 * i).transpose();
      }
      if (need(n.b)) {
        Mat& gb = ensure(n.b);
        for (Eigen::Index i = 0; i < gy.rows() / 3; ++i)
          gb.middleRows<3>(3 * i).noalias() +=
              av->middleRows<3>(3 * i).transpose() * gy.middleRows<3>(3 * i);
      }
      break;
    case Op::Mat3StackVecMul:
      // y_i = A_i x_i with x_i, y_i row vectors
      if (need(n.a)) {
        Mat& ga = ensure(n.a);
        for (Eigen::Index i = 0; i < gy.rows(); ++i)
          ga.middleRows<3>(3 * i).noalias() +=
              gy.row(i).transpose() * bv->row(i);
      }
      if (need(n.b)) {
        Mat& gb = ensure(n.b);
        for (Eigen::Index i = 0; i < gy.rows(); ++i)
          gb.row(i).noalias() +=
              (av->middleRows<3>(3 * i).transpose() * gy.row(i).transpose()).transpose();
      }
      break;
  }
}

void Tape::backward(Var f) {
  FLOWPOSE_REQUIRE(!swept_, "backward: tape already swept");
  FLOWPOSE_REQUIRE(f.valid() && val(f).rows() == 1 && val(f).cols() == 1,
                   "backward: output must be 1x1");
  grads_.assign(nodes_.size(), Mat());
  swept_ = true;
  grads_[f.idx] = Mat::Ones(1, 1);
  for (int i = f.idx; i >= 0; --i) {
    if (!nodes_[i].requires_grad) continue;
    if (grads_[i].size() == 0) continue;
    accumulate(i, grads_);
  }
}

}  // namespace flowpose::ad
