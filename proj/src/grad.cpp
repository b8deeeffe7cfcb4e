#include "hashparse/grad.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hashparse/chart.h"

namespace hashparse::grad {

const char* op_name(Op op) {
  switch (op) {
    case Op::constant: return "constant";
    case Op::parameter: return "parameter";
    case Op::add: return "add";
    case Op::add_row: return "add_row";
    case Op::subtract: return "subtract";
    case Op::multiply: return "multiply";
    case Op::scale: return "scale";
    case Op::offset: return "offset";
    case Op::negate: return "negate";
    case Op::matmul: return "matmul";
    case Op::matmul_nt: return "matmul_nt";
    case Op::head_product: return "head_product";
    case Op::logistic: return "logistic";
    case Op::tanh: return "tanh";
    case Op::exp: return "exp";
    case Op::log1p_exp: return "log1p_exp";
    case Op::log_sum_exp: return "log_sum_exp";
    case Op::segment_log_sum_exp: return "segment_log_sum_exp";
    case Op::segment_mean: return "segment_mean";
    case Op::sum: return "sum";
    case Op::row_sum: return "row_sum";
    case Op::mean: return "mean";
    case Op::max: return "max";
    case Op::gather: return "gather";
    case Op::prefix_sum_2d: return "prefix_sum_2d";
    case Op::rectangle_mean: return "rectangle_mean";
  }
  return "unknown";
}

NumericFault::NumericFault(Op op, const std::string& detail)
    : std::runtime_error(std::string("non-finite value in op ") + op_name(op) + ": " + detail), op_(op) {}

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

Var Tape::push(Op op, int rows, int cols, std::vector<double> value, std::function<void(Tape&, int)> back) {
  if (!all_finite(value)) throw NumericFault(op, "forward");
  Node node;
  node.op = op;
  node.rows = rows;
  node.cols = cols;
  node.value = std::move(value);
  node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

std::span<const double> Tape::value(Var v) const {
  const Node& node = nodes_.at(v.id);
  if (node.op == Op::parameter) return node.external;
  return node.value;
}

std::vector<double>& Tape::grad_of(int id) {
  Node& node = nodes_[id];
  if (node.grad.empty()) node.grad.assign(static_cast<size_t>(node.rows) * node.cols, 0.0);
  return node.grad;
}

std::span<const double> Tape::gradient(Var v) const { return nodes_.at(v.id).grad; }

Var Tape::constant(std::vector<double> values, int rows, int cols) {
  require(values.size() == static_cast<size_t>(rows) * cols, "constant: size does not match shape");
  return push(Op::constant, rows, cols, std::move(values), nullptr);
}

Var Tape::parameter(std::string name, std::span<const double> values, int rows, int cols) {
  require(values.size() == static_cast<size_t>(rows) * cols, "parameter: size does not match shape");
  if (!all_finite(values)) throw NumericFault(Op::parameter, name);
  Node node;
  node.op = Op::parameter;
  node.rows = rows;
  node.cols = cols;
  node.external = values;
  node.name = std::move(name);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::add(Var a, Var b) {
  require(rows(a) == rows(b) && cols(a) == cols(b), "add: shape mismatch");
  auto x = val(a.id), y = val(b.id);
  std::vector<double> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return push(Op::add, rows(a), cols(a), std::move(out), [a, b](Tape& t, int self) {
    const auto& g = t.out_grad(self);
    auto& ga = t.grad_of(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    auto& gb = t.grad_of(b.id);
    for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
  });
}

Var Tape::add_row(Var a, Var row) {
  require(rows(row) == 1 && cols(row) == cols(a), "add_row: shape mismatch");
  const int r = rows(a), c = cols(a);
  auto x = val(a.id), y = val(row.id);
  std::vector<double> out(x.size());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<size_t>(i) * c + j] = x[static_cast<size_t>(i) * c + j] + y[j];
  return push(Op::add_row, r, c, std::move(out), [a, row, r, c](Tape& t, int self) {
    const auto& g = t.out_grad(self);
    auto& ga = t.grad_of(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    auto& gr = t.grad_of(row.id);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) gr[j] += g[static_cast<size_t>(i) * c + j];
  });
}

Var Tape::subtract(Var a, Var b) {
  require(rows(a) == rows(b) && cols(a) == cols(b), "subtract: shape mismatch");
  auto x = val(a.id), y = val(b.id);
  std::vector<double> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return push(Op::subtract, rows(a), cols(a), std::move(out), [a, b](Tape& t, int self) {
    const auto& g = t.out_grad(self);
    auto& ga = t.grad_of(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    auto& gb = t.grad_of(b.id);
    for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

Var Tape::multiply(Var a, Var b) {
  require(rows(a) == rows(b) && cols(a) == cols(b), "multiply: shape mismatch");
  auto x = val(a.id), y = val(b.id);
  std::vector<double> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return push(Op::multiply, rows(a), cols(a), std::move(out), [a, b](Tape& t, int self) {
    const auto& g = t.out_grad(self);
    auto x = t.val(a.id), y = t.val(b.id);
    if (t.nodes_[a.id].op != Op::constant) {
      auto& ga = t.grad_of(a.id);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (t.nodes_[b.id].op != Op::constant) {
      auto& gb = t.grad_of(b.id);
      for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

Var Tape::scale(Var a, double factor) {
  auto x = val(a.id);
  std::vector<double> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return push(Op::scale, rows(a), cols(a), std::move(out), [a, factor](Tape& t, int self) {
    const auto& g = t.out_grad(self);
    auto& ga = t.grad_of(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

Var Tape::offset(Var a, double shift) {
  auto x = val(a.id);
  std::vector<double> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] + shift;
  return push(Op::offset, rows(a), cols(a), std::move(out), [a](Tape& t, int self) {
    const auto& g = t.out_grad(self);
    auto& ga = t.grad_of(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var Tape::negate(Var a) {
  auto x = val(a.id);
  std::vector<double> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = -x[i];
  return push(Op::negate, rows(a), cols(a), std::move(out), [a](Tape& t, int self) {
    const auto& g = t.out_grad(self);
    auto& ga = t.grad_of(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
  });
}

Var Tape::matmul(Var a, Var b) {
  require(cols(a) == rows(b), "matmul: inner dimensions differ");
  const int r = rows(a), k = cols(a), c = cols(b);
  auto x = val(a.id), y = val(b.id);
  std::vector<double> out(static_cast<size_t>(r) * c, 0.0);
  for (int i = 0; i < r; ++i)
    for (int p = 0; p < k; ++p) {
      double xv = x[static_cast<size_t>(i) * k + p];
      if (xv == 0.0) continue;
      for (int j = 0; j < c; ++j) out[static_cast<size_t>(i) * c + j] += xv * y[static_cast<size_t>(p) * c + j];
    }
  return push(Op::matmul, r, c, std::move(out), [a, b, r, k, c](Tape& t, int self) {
    const auto& g = t.out_grad(self);
    auto x = t.val(a.id), y = t.val(b.id);
    if (t.nodes_[a.id].op != Op::constant) {
      auto& ga = t.grad_of(a.id);
      for (int i = 0; i < r; ++i)
        for (int p = 0; p < k; ++p) {
          double acc = 0.0;
          for (int j = 0; j < c; ++j) acc += g[static_cast<size_t>(i) * c + j] * y[static_cast<size_t>(p) * c + j];
          ga[static_cast<size_t>(i) * k + p] += acc;
        }
    }
    if (t.nodes_[b.id].op != Op::constant) {
      auto& gb = t.grad_of(b.id);
      for (int i = 0; i < r; ++i)
        for (int p = 0; p < k; ++p) {
          double xv = x[static_cast<size_t>(i) * k + p];
          if (xv == 0.0) continue;
          for (int j = 0; j < c; ++j) gb[static_cast<size_t>(p) * c + j] += xv * g[static_cast<size_t>(i) * c + j];
        }
    }
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  require(cols(a) == cols(b), "matmul_nt: inner dimensions differ");
  const int r = rows(a), k = cols(a), c = rows(b);
  auto x = val(a.id), y = val(b.id);
  std::vector<double> out(static_cast<size_t>(r) * c, 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += x[static_cast<size_t>(i) * k + p] * y[static_cast<size_t>(j) * k + p];
      out[static_cast<size_t>(i) * c + j] = acc;
    }
  return push(Op::matmul_nt, r, c, std::move(out), [a, b, r, k, c](Tape& t, int self) {
    const auto& g = t.out_grad(self);
    auto x = t.val(a.id), y = t.val(b.id);
    if (t.nodes_[a.id].op != Op::constant) {
      auto& ga = t.grad_of(a.id);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) {
          double gv = g[static_cast<size_t>(i) * c + j];
          if (gv == 0.0) continue;
          for (int p = 0; p < k; ++p) ga[static_cast<size_t>(i) * k + p] += gv * y[static_cast<size_t>(j) * k + p];
        }
    }
    if (t.nodes_[b.id].op != Op::constant) {
      auto& gb = t.grad_of(b.id);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) {
          double gv = g[static_cast<size_t>(i) * c + j];
          if (gv == 0.0) continue;
          for (int p = 0; p < k; ++p) gb[static_cast<size_t>(j) * k + p] += gv * x[static_cast<size_t>(i) * k + p];
        }
    }
  });
}

Var Tape::head_product(Var q, Var k, int heads, double factor) {
  require(rows(q) == rows(k) && cols(q) == cols(k) && cols(q) % heads == 0, "head_product: shape mismatch");
  const int n = rows(q), width = cols(q), dh = width / heads;
  auto x = val(q.id), y = val(k.id);
  std::vector<double> out(static_cast<size_t>(heads) * n * n);
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int p = 0; p < dh; ++p) acc += x[static_cast<size_t>(i) * width + h * dh + p] * y[static_cast<size_t>(j) * width + h * dh + p];
        out[(static_cast<size_t>(h) * n + i) * n + j] = acc * factor;
      }
  return push(Op::head_product, heads, n * n, std::move(out), [q, k, heads, n, width, dh, factor](Tape& t, int self) {
    const auto& g = t.out_grad(self);
    auto x = t.val(q.id), y = t.val(k.id);
    auto& gq = t.grad_of(q.id);
    auto& gk = t.grad_of(k.id);
    for (int h = 0; h < heads; ++h)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          double gv = g[(static_cast<size_t>(h) * n + i) * n + j] * factor;
          for (int p = 0; p < dh; ++p) {
            size_t qi = static_cast<size_t>(i) * width + h * dh + p, kj = static_cast<size_t>(j) * width + h * dh + p;
            gq[qi] += gv * y[kj];
            gk[kj] += gv * x[qi];
          }
        }
  });
}

Var Tape::logistic(Var a) {
  auto x = val(a.id);
  std::vector<double> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = hashparse::logistic(x[i]);
  return push(Op::logistic, rows(a), cols(a), std::move(out), [a](Tape& t, int self) {
    const auto& g = t.out_grad(self);
    auto y = t.val(self);
    auto& ga = t.grad_of(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var Tape::tanh(Var a) {
  auto x = val(a.id);
  std::vector<double> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x[i]);
  return push(Op::tanh, rows(a), cols(a), std::move(out), [a](Tape& t, int self) {
    const auto& g = t.out_grad(self);
    auto y = t.val(self);
    auto& ga = t.grad_of(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var Tape::exp(Var a) {
  auto x = val(a.id);
  std::vector<double> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x[i]);
  return push(Op::exp, rows(a), cols(a), std::move(out), [a](Tape& t, int self) {
    const auto& g = t.out_grad(self);
    auto y = t.val(self);
    auto& ga = t.grad_of(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
  });
}

Var Tape::log1p_exp(Var a) {
  auto x = val(a.id);
  std::vector<double> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = hashparse::log1p_exp(x[i]);
  return push(Op::log1p_exp, rows(a), cols(a), std::move(out), [a](Tape& t, int self) {
    const auto& g = t.out_grad(self);
    auto x = t.val(a.id);
    auto& ga = t.grad_of(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * hashparse::logistic(x[i]);
  });
}

Var Tape::log_sum_exp(Var a) {
  require(rows(a) * cols(a) > 0, "log_sum_exp: empty input");
  std::vector<double> out = {hashparse::log_sum_exp(val(a.id))};
  return push(Op::log_sum_exp, 1, 1, std::move(out), [a](Tape& t, int self) {
    double g = t.out_grad(self)[0];
    double y = t.val(self)[0];
    auto x = t.val(a.id);
    auto& ga = t.grad_of(a.id);
    for (size_t i = 0; i < x.size(); ++i) ga[i] += g * std::exp(x[i] - y);
  });
}

Var Tape::segment_log_sum_exp(Var a, std::vector<int> offsets) {
  auto x = val(a.id);
  const int segments = static_cast<int>(offsets.size()) - 1;
  require(segments >= 0 && offsets.back() == static_cast<int>(x.size()), "segment_log_sum_exp: bad offsets");
  std::vector<double> out(segments);
  for (int s = 0; s < segments; ++s) {
    require(offsets[s + 1] > offsets[s], "segment_log_sum_exp: empty segment");
    out[s] = hashparse::log_sum_exp(x.subspan(offsets[s], offsets[s + 1] - offsets[s]));
  }
  return push(Op::segment_log_sum_exp, segments, 1, std::move(out),
              [a, offsets = std::move(offsets), segments](Tape& t, int self) {
                const auto& g = t.out_grad(self);
                auto y = t.val(self);
                auto x = t.val(a.id);
                auto& ga = t.grad_of(a.id);
                for (int s = 0; s < segments; ++s) {
                  if (g[s] == 0.0) continue;
                  for (int i = offsets[s]; i < offsets[s + 1]; ++i) ga[i] += g[s] * std::exp(x[i] - y[s]);
                }
              });
}

Var Tape::segment_mean(Var a, std::vector<int> offsets) {
  auto x = val(a.id);
  const int segments = static_cast<int>(offsets.size()) - 1;
  require(segments >= 0 && offsets.back() == static_cast<int>(x.size()), "segment_mean: bad offsets");
  std::vector<double> out(segments);
  for (int s = 0; s < segments; ++s) {
    int count = offsets[s + 1] - offsets[s];
    require(count > 0, "segment_mean: empty segment");
    double acc = 0.0;
    for (int i = offsets[s]; i < offsets[s + 1]; ++i) acc += x[i];
    out[s] = acc / count;
  }
  return push(Op::segment_mean, segments, 1, std::move(out), [a, offsets = std::move(offsets), segments](Tape& t, int self) {
    const auto& g = t.out_grad(self);
    auto& ga = t.grad_of(a.id);
    for (int s = 0; s < segments; ++s) {
      double share = g[s] / (offsets[s + 1] - offsets[s]);
      for (int i = offsets[s]; i < offsets[s + 1]; ++i) ga[i] += share;
    }
  });
}

Var Tape::sum(Var a) {
  auto x = val(a.id);
  double acc = 0.0;
  for (double v : x) acc += v;
  return push(Op::sum, 1, 1, {acc}, [a](Tape& t, int self) {
    double g = t.out_grad(self)[0];
    auto& ga = t.grad_of(a.id);
    for (double& v : ga) v += g;
  });
}

Var Tape::row_sum(Var a) {
  const int r = rows(a), c = cols(a);
  auto x = val(a.id);
  std::vector<double> out(r, 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[i] += x[static_cast<size_t>(i) * c + j];
  return push(Op::row_sum, r, 1, std::move(out), [a, r, c](Tape& t, int self) {
    const auto& g = t.out_grad(self);
    auto& ga = t.grad_of(a.id);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) ga[static_cast<size_t>(i) * c + j] += g[i];
  });
}

Var Tape::mean(Var a) {
  auto x = val(a.id);
  require(!x.empty(), "mean: empty input");
  double acc = 0.0;
  for (double v : x) acc += v;
  const double count = static_cast<double>(x.size());
  return push(Op::mean, 1, 1, {acc / count}, [a, count](Tape& t, int self) {
    double g = t.out_grad(self)[0] / count;
    auto& ga = t.grad_of(a.id);
    for (double& v : ga) v += g;
  });
}

Var Tape::max(Var a) {
  auto x = val(a.id);
  require(!x.empty(), "max: empty input");
  size_t arg = static_cast<size_t>(std::max_element(x.begin(), x.end()) - x.begin());
  return push(Op::max, 1, 1, {x[arg]}, [a, arg](Tape& t, int self) {
    t.grad_of(a.id)[arg] += t.out_grad(self)[0];
  });
}

Var Tape::gather(std::vector<Var> sources, std::vector<Ref> refs, int rows, int cols) {
  require(refs.size() == static_cast<size_t>(rows) * cols, "gather: index count does not match shape");
  std::vector<double> out(refs.size());
  for (size_t e = 0; e < refs.size(); ++e) {
    auto src = val(sources[refs[e].source].id);
    out[e] = src[refs[e].index];
  }
  return push(Op::gather, rows, cols, std::move(out),
              [sources = std::move(sources), refs = std::move(refs)](Tape& t, int self) {
                const auto& g = t.out_grad(self);
                std::vector<double*> targets(sources.size(), nullptr);
                for (size_t s = 0; s < sources.size(); ++s) {
                  if (sources[s].valid() && t.nodes_[sources[s].id].op != Op::constant) {
                    targets[s] = t.grad_of(sources[s].id).data();
                  }
                }
                for (size_t e = 0; e < refs.size(); ++e) {
                  if (double* dst = targets[refs[e].source]) dst[refs[e].index] += g[e];
                }
              });
}

Var Tape::gather(Var source, std::vector<int> indices, int rows, int cols) {
  require(indices.size() == static_cast<size_t>(rows) * cols, "gather: index count does not match shape");
  auto src = val(source.id);
  std::vector<double> out(indices.size());
  for (size_t e = 0; e < indices.size(); ++e) out[e] = src[indices[e]];
  return push(Op::gather, rows, cols, std::move(out), [source, indices = std::move(indices)](Tape& t, int self) {
    if (t.nodes_[source.id].op == Op::constant) return;
    const auto& g = t.out_grad(self);
    auto& gs = t.grad_of(source.id);
    for (size_t e = 0; e < indices.size(); ++e) gs[indices[e]] += g[e];
  });
}

Var Tape::prefix_sum_2d(Var s, int n) {
  require(cols(s) == n * n, "prefix_sum_2d: planes must be n x n");
  const int planes = rows(s);
  const size_t side = static_cast<size_t>(n) + 1;
  auto x = val(s.id);
  std::vector<double> out(static_cast<size_t>(planes) * side * side, 0.0);
  for (int k = 0; k < planes; ++k) {
    double* p = out.data() + static_cast<size_t>(k) * side * side;
    const double* plane = x.data() + static_cast<size_t>(k) * n * n;
    for (int a = 1; a <= n; ++a) {
      double row = 0.0;
      for (int b = 1; b <= n; ++b) {
        row += plane[static_cast<size_t>(a - 1) * n + (b - 1)];
        p[a * side + b] = p[(a - 1) * side + b] + row;
      }
    }
  }
  return push(Op::prefix_sum_2d, planes, static_cast<int>(side * side), std::move(out),
              [s, n, planes, side](Tape& t, int self) {
                const auto& g = t.out_grad(self);
                auto& gs = t.grad_of(s.id);
                // ds[i][j] = sum of dP[a][b] over a > i, b > j
                std::vector<double> suffix(side * side, 0.0);
                for (int k = 0; k < planes; ++k) {
                  const double* gp = g.data() + static_cast<size_t>(k) * side * side;
                  std::fill(suffix.begin(), suffix.end(), 0.0);
                  for (int a = n; a >= 1; --a) {
                    double row = 0.0;
                    for (int b = n; b >= 1; --b) {
                      row += gp[a * side + b];
                      suffix[a * side + b] = row + (a < n ? suffix[(a + 1) * side + b] : 0.0);
                    }
                  }
                  double* out = gs.data() + static_cast<size_t>(k) * n * n;
                  for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] += suffix[(i + 1) * side + (j + 1)];
                }
              });
}

Var Tape::rectangle_mean(Var prefix, int n, std::vector<Rect> rects) {
  const size_t side = static_cast<size_t>(n) + 1;
  require(cols(prefix) == static_cast<int>(side * side), "rectangle_mean: prefix table has wrong size");
  const int planes = rows(prefix);
  const int count = static_cast<int>(rects.size());
  auto p = val(prefix.id);
  std::vector<double> out(static_cast<size_t>(count) * planes);
  for (int r = 0; r < count; ++r) {
    const Rect& q = rects[r];
    const double area = static_cast<double>(q.i1 - q.i0 + 1) * (q.j1 - q.j0 + 1);
    for (int k = 0; k < planes; ++k) {
      const double* pk = p.data() + static_cast<size_t>(k) * side * side;
      double sum = pk[(q.i1 + 1) * side + (q.j1 + 1)] - pk[q.i0 * side + (q.j1 + 1)] - pk[(q.i1 + 1) * side + q.j0] +
                   pk[q.i0 * side + q.j0];
      out[static_cast<size_t>(r) * planes + k] = sum / area;
    }
  }
  return push(Op::rectangle_mean, count, planes, std::move(out),
              [prefix, side, planes, count, rects = std::move(rects)](Tape& t, int self) {
                const auto& g = t.out_grad(self);
                auto& gp = t.grad_of(prefix.id);
                for (int r = 0; r < count; ++r) {
                  const Rect& q = rects[r];
                  const double area = static_cast<double>(q.i1 - q.i0 + 1) * (q.j1 - q.j0 + 1);
                  for (int k = 0; k < planes; ++k) {
                    double share = g[static_cast<size_t>(r) * planes + k] / area;
                    double* pk = gp.data() + static_cast<size_t>(k) * side * side;
                    pk[(q.i1 + 1) * side + (q.j1 + 1)] += share;
                    pk[q.i0 * side + (q.j1 + 1)] -= share;
                    pk[(q.i1 + 1) * side + q.j0] -= share;
                    pk[q.i0 * side + q.j0] += share;
                  }
                }
              });
}

void Tape::sweep() {
  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    Node& node = nodes_[id];
    if (node.grad.empty() || !node.back) continue;
    if (!all_finite(node.grad)) throw NumericFault(node.op, "backward");
    node.back(*this, id);
  }
}

void Tape::backward(Var loss) {
  require(rows(loss) * cols(loss) == 1, "backward: loss must be a scalar");
  for (auto& node : nodes_) node.grad.clear();
  grad_of(loss.id)[0] = 1.0;
  sweep();
}

void Tape::backward(std::span<const std::pair<Var, std::vector<double>>> seeds) {
  for (auto& node : nodes_) node.grad.clear();
  for (const auto& [var, g] : seeds) {
    auto& target = grad_of(var.id);
    require(g.size() == target.size(), "backward: seed shape mismatch");
    for (size_t i = 0; i < g.size(); ++i) target[i] += g[i];
  }
  sweep();
}

}  // namespace hashparse::grad
