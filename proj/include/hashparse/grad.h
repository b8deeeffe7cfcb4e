#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

// Define-by-run reverse-mode differentiation over dense row-major matrices.
namespace hashparse::grad {

enum class Op {
  constant,
  parameter,
  add,
  add_row,
  subtract,
  multiply,
  scale,
  offset,
  negate,
  matmul,
  matmul_nt,
  head_product,
  logistic,
  tanh,
  exp,
  log1p_exp,
  log_sum_exp,
  segment_log_sum_exp,
  segment_mean,
  sum,
  row_sum,
  mean,
  max,
  gather,
  prefix_sum_2d,
  rectangle_mean,
};

const char* op_name(Op op);

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Raised when an op produces a NaN or infinity in its forward or backward
// pass.
class NumericFault : public std::runtime_error {
 public:
  NumericFault(Op op, const std::string& detail);
  Op op() const { return op_; }

 private:
  Op op_;
};

// Reference to one element of one of the sources handed to gather().
struct Ref {
  int source = 0;
  int index = 0;
};

// Inclusive cell rectangle [i0, i1] x [j0, j1] of an n x n plane.
struct Rect {
  int i0 = 0, i1 = 0, j0 = 0, j1 = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var constant(std::vector<double> values, int rows, int cols);
  // Leaf whose storage lives outside the tape; it must outlive the tape.
  Var parameter(std::string name, std::span<const double> values, int rows, int cols);

  Var add(Var a, Var b);
  Var add_row(Var a, Var row);  // adds a 1 x cols row to every row of a
  Var subtract(Var a, Var b);
  Var multiply(Var a, Var b);  // element-wise
  Var scale(Var a, double factor);
  Var offset(Var a, double shift);
  Var negate(Var a);
  Var matmul(Var a, Var b);     // (r x k)(k x c)
  Var matmul_nt(Var a, Var b);  // (r x k)(c x k)^T
  // q, k: n x (heads * head_dim). Result: heads x (n * n) with
  // out[h][i * n + j] = factor * <q_i, k_j> restricted to head h.
  Var head_product(Var q, Var k, int heads, double factor);
  Var logistic(Var a);
  Var tanh(Var a);
  Var exp(Var a);
  Var log1p_exp(Var a);
  Var log_sum_exp(Var a);  // scalar
  // Column vector of log-sum-exps over consecutive segments of a's elements;
  // offsets has one more entry than there are segments.
  Var segment_log_sum_exp(Var a, std::vector<int> offsets);
  Var segment_mean(Var a, std::vector<int> offsets);
  Var sum(Var a);
  Var row_sum(Var a);
  Var mean(Var a);
  Var max(Var a);  // scalar; gradient goes to the first maximizer
  Var gather(std::vector<Var> sources, std::vector<Ref> refs, int rows, int cols);
  Var gather(Var source, std::vector<int> indices, int rows, int cols);
  // s: planes x (n * n). Result: planes x ((n+1) * (n+1)) inclusive prefix
  // sums with a zero first row and column.
  Var prefix_sum_2d(Var s, int n);
  // Mean of each rectangle read from a prefix table in O(1). Result:
  // rects.size() x planes.
  Var rectangle_mean(Var prefix, int n, std::vector<Rect> rects);

  std::span<const double> value(Var v) const;
  double scalar(Var v) const { return value(v)[0]; }
  int rows(Var v) const { return nodes_[v.id].rows; }
  int cols(Var v) const { return nodes_[v.id].cols; }
  Op op(Var v) const { return nodes_[v.id].op; }
  size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar.
  void backward(Var loss);
  // Reverse sweep seeded with explicit output gradients.
  void backward(std::span<const std::pair<Var, std::vector<double>>> seeds);

  // Gradient of the last backward pass; empty if the node was not reached.
  std::span<const double> gradient(Var v) const;

 private:
  struct Node {
    Op op;
    int rows = 0;
    int cols = 0;
    std::vector<double> value;
    std::span<const double> external;
    std::vector<double> grad;
    std::function<void(Tape&, int)> back;
    std::string name;
  };

  Var push(Op op, int rows, int cols, std::vector<double> value, std::function<void(Tape&, int)> back);
  std::vector<double>& grad_of(int id);
  const std::vector<double>& out_grad(int id) const { return nodes_[id].grad; }
  std::span<const double> val(int id) const { return value(Var{id}); }
  void sweep();

  std::vector<Node> nodes_;
};

}  // namespace hashparse::grad
