#pragma once

#include <memory>
#include <unordered_map>
#include <vector>

#include "flowpose/rng.hpp"
#include "flowpose/types.hpp"

namespace flowpose::ad {

// Reverse-mode tape over dense double matrices. Nodes are appended in
// topological order during the forward pass; backward() sweeps them in
// reverse. Handles are trivially copyable indices into one tape.
struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  CMul,        // elementwise
  MatMul,
  ScalarMul,   // by compile-time constant
  AddScalar,
  AddRowVec,   // a (N x C) + r (1 x C) broadcast
  AddColVec,   // a (N x C) + c (N x 1) broadcast
  MulRowVec,
  MulColVec,
  Transpose,
  Block,
  VCat,
  HCat,
  SoftmaxRows,
  Relu,
  Tanh,
  Sigmoid,
  Softplus,
  RsqrtShift,  // (a + shift)^(-1/2), elementwise
  RowMean,     // N x C -> N x 1
  ColMean,     // N x C -> 1 x C
  RowGroupMean,  // (G*g) x C -> G x C, consecutive row groups of size g
  Sum,         // -> 1 x 1
  RowDot,      // rowwise dot of two N x C -> N x 1
  CrossRows,   // rowwise cross of two N x 3 -> N x 3
  L2NormalizeRows,
  Gather,      // out(i,j) = a.flat_rm(idx(i,j)), idx < 0 reads as 0
  Reshape,     // row-major reinterpretation
  DropoutMask,  // elementwise multiply by a fixed mask
  BilinearSample,  // positions (J x 2) sampled in a constant (H*W) x C field
  Mat3StackMul,     // (N*3 x 3) per-block 3x3 product
  Mat3StackVecMul,  // (N*3 x 3) blocks times rows of (N x 3) -> N x 3
};

struct Node {
  Op op = Op::Leaf;
  int a = -1;
  int b = -1;
  double scalar = 0.0;
  int r0 = 0, c0 = 0, rr = 0, cc = 0;  // block geometry / reshape dims / field W
  std::shared_ptr<const Eigen::MatrixXi> idx;  // gather map
  std::shared_ptr<const Mat> aux;              // dropout mask or sample field
  std::vector<int> multi;                      // concat parents
  Mat value;
  bool requires_grad = false;
};

class ParamStore;

class Tape {
 public:
  Tape() = default;
  explicit Tape(const ParamStore* params) : params_(params) {}

  // Leaves ------------------------------------------------------------
  Var leaf(Mat v, bool requires_grad = false);
  Var constant(Mat v) { return leaf(std::move(v), false); }
  Var scalar_leaf(double v, bool requires_grad = false);
  // Memoized leaf for a registered parameter; repeated calls return the
  // same node so gradients accumulate across uses.
  Var param(int pid);

  const Mat& val(Var v) const { return nodes_[v.idx].value; }
  double scalar_val(Var v) const { return nodes_[v.idx].value(0, 0); }
  const Mat& grad(Var v) const;
  bool has_grad(Var v) const;
  const Mat* param_grad(int pid) const;  // nullptr when unused this tape
  std::size_t size() const { return nodes_.size(); }

  // Runs reverse sweep from a 1x1 node.
  void backward(Var f);

  // Ops ----------------------------------------------------------------
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var cmul(Var a, Var b);
  Var matmul(Var a, Var b);
  Var scalar_mul(Var a, double c);
  Var add_scalar(Var a, double c);
  Var add_rowvec(Var a, Var r);
  Var add_colvec(Var a, Var c);
  Var mul_rowvec(Var a, Var r);
  Var mul_colvec(Var a, Var c);
  Var transpose(Var a);
  Var block(Var a, int r0, int c0, int rows, int cols);
  Var row(Var a, int r) { return block(a, r, 0, 1, static_cast<int>(val(a).cols())); }
  Var vcat(const std::vector<Var>& parts);
  Var hcat(const std::vector<Var>& parts);
  Var softmax_rows(Var a);
  Var relu(Var a);
  Var tanh_(Var a);
  Var sigmoid(Var a);
  Var softplus(Var a);
  Var rsqrt_shift(Var a, double shift);
  Var row_mean(Var a);
  Var col_mean(Var a);
  Var row_group_mean(Var a, int group);
  Var sum(Var a);
  Var mean(Var a);
  Var sum_sq(Var a) { return sum(cmul(a, a)); }
  Var row_dot(Var a, Var b);
  Var cross_rows(Var a, Var b);
  Var l2_normalize_rows(Var a);
  Var gather(Var a, std::shared_ptr<const Eigen::MatrixXi> idx);
  Var reshape(Var a, int rows, int cols);
  // Multiplies by mask/(1-rate) with entries dropped at `rate`; identity when
  // rate == 0.
  Var dropout(Var a, double rate, Rng& rng);
  // field is (H*W) x C, row-major pixel order (row = y*W + x); positions are
  // (x, y) pixel coordinates, border-clamped.
  Var bilinear_sample(Var positions, std::shared_ptr<const Mat> field, int width);
  Var mat3_stack_mul(Var a, Var b);
  Var mat3_stack_vec_mul(Var a, Var x);

  // Composites ----------------------------------------------------------
  Var linear(Var x, Var w, Var bias);  // x*w + bias row-broadcast; bias may be invalid
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-6);

 private:
  int push(Node n);
  Var unary(Op op, Var a, double scalar = 0.0);
  Var binary(Op op, Var a, Var b);
  void accumulate(int i, std::vector<Mat>& grads) const;

  std::vector<Node> nodes_;
  std::vector<Mat> grads_;
  std::unordered_map<int, int> param_nodes_;
  const ParamStore* params_ = nullptr;
  bool swept_ = false;
};

}  // namespace flowpose::ad
