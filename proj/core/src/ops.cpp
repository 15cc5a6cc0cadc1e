#include "gfm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace gfm::ops {

namespace {

std::span<double> gbuf(Tensor t) { return t.grad_buffer(); }

void require_2d(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " + to_string(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

void require_column(const Tensor& x, const Tensor& c, const char* op) {
  require_2d(x, op);
  require_2d(c, op);
  if (c.cols() != 1 || c.rows() != x.rows()) {
    throw DimensionError(std::string(op) + ": expected column " + std::to_string(x.rows()) +
                         "x1, got " + to_string(c.shape()));
  }
}

// True when b is a 1 x n row being broadcast over an m x n a (m > 1).
bool row_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return false;
  if (a.rank() == 2 && b.rank() == 2 && b.rows() == 1 && b.cols() == a.cols()) return true;
  throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                       to_string(b.shape()));
}

enum class Binary { kAdd, kSub, kMul };

Tensor binary(const Tensor& a, const Tensor& b, Binary kind, const char* name) {
  const bool bcast = row_broadcast(a, b, name);
  const std::size_t n = a.numel();
  const std::size_t width = bcast ? b.numel() : n;
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = bv[bcast ? i % width : i];
    switch (kind) {
      case Binary::kAdd: out[i] = av[i] + y; break;
      case Binary::kSub: out[i] = av[i] - y; break;
      case Binary::kMul: out[i] = av[i] * y; break;
    }
  }
  Tensor result(a.shape(), std::move(out));
  if (auto* tape = detail::recording({&a, &b})) {
    tape->record(result, {a, b}, [a, b, bcast, width, kind](std::span<const double> g) {
      const auto av = a.data();
      const auto bv = b.data();
      if (a.requires_grad()) {
        auto ga = gbuf(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += kind == Binary::kMul ? g[i] * bv[bcast ? i % width : i] : g[i];
        }
      }
      if (b.requires_grad()) {
        auto gb = gbuf(b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const std::size_t j = bcast ? i % width : i;
          switch (kind) {
            case Binary::kAdd: gb[j] += g[i]; break;
            case Binary::kSub: gb[j] -= g[i]; break;
            case Binary::kMul: gb[j] += g[i] * av[i]; break;
          }
        }
      }
    });
  }
  return result;
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  Tensor result(x.shape(), std::move(out));
  if (auto* tape = detail::recording({&x})) {
    // deriv(input, output) -> dy/dx
    tape->record(result, {x}, [x, result_data = result.impl(), deriv](std::span<const double> g) {
      auto gx = gbuf(x);
      const auto xv = x.data();
      const auto& yv = result_data->data;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xv[i], yv[i]);
    });
  }
  return result;
}

enum class ColumnOp { kAdd, kMul, kDiv };

Tensor column_op(const Tensor& x, const Tensor& c, ColumnOp kind, const char* name) {
  require_column(x, c, name);
  const std::size_t rows = x.rows(), cols = x.cols();
  const auto xv = x.data();
  const auto cv = c.data();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < cols; ++k) {
      const double v = xv[r * cols + k];
      switch (kind) {
        case ColumnOp::kAdd: out[r * cols + k] = v + cv[r]; break;
        case ColumnOp::kMul: out[r * cols + k] = v * cv[r]; break;
        case ColumnOp::kDiv: out[r * cols + k] = v / cv[r]; break;
      }
    }
  }
  Tensor result(x.shape(), std::move(out));
  if (auto* tape = detail::recording({&x, &c})) {
    tape->record(result, {x, c}, [x, c, rows, cols, kind](std::span<const double> g) {
      const auto xv = x.data();
      const auto cv = c.data();
      if (x.requires_grad()) {
        auto gx = gbuf(x);
        for (std::size_t r = 0; r < rows; ++r) {
          const double f = kind == ColumnOp::kAdd ? 1.0 : kind == ColumnOp::kMul ? cv[r] : 1.0 / cv[r];
          for (std::size_t k = 0; k < cols; ++k) gx[r * cols + k] += g[r * cols + k] * f;
        }
      }
      if (c.requires_grad()) {
        auto gc = gbuf(c);
        for (std::size_t r = 0; r < rows; ++r) {
          double acc = 0.0;
          for (std::size_t k = 0; k < cols; ++k) {
            const double gi = g[r * cols + k];
            switch (kind) {
              case ColumnOp::kAdd: acc += gi; break;
              case ColumnOp::kMul: acc += gi * xv[r * cols + k]; break;
              case ColumnOp::kDiv: acc -= gi * xv[r * cols + k] / (cv[r] * cv[r]); break;
            }
          }
          gc[r] += acc;
        }
      }
    });
  }
  return result;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ for " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  }
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  Tensor result({m, n}, std::move(out));
  if (auto* tape = detail::recording({&a, &b})) {
    tape->record(result, {a, b}, [a, b, m, k, n](std::span<const double> g) {
      const auto av = a.data();
      const auto bv = b.data();
      if (a.requires_grad()) {
        auto ga = gbuf(a);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
            ga[i * k + p] += acc;
          }
        }
      }
      if (b.requires_grad()) {
        auto gb = gbuf(b);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
          }
        }
      }
    });
  }
  return result;
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  const auto av = a.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  Tensor result({n, m}, std::move(out));
  if (auto* tape = detail::recording({&a})) {
    tape->record(result, {a}, [a, m, n](std::span<const double> g) {
      auto ga = gbuf(a);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
  }
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kAdd, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kSub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kMul, "mul"); }

Tensor scale(const Tensor& x, double factor) {
  return unary(x, [factor](double v) { return v * factor; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) throw DimensionError("scale_by: factor must be 1x1, got " + to_string(s.shape()));
  const double f = s.item();
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * f;
  Tensor result(x.shape(), std::move(out));
  if (auto* tape = detail::recording({&x, &s})) {
    tape->record(result, {x, s}, [x, s](std::span<const double> g) {
      const double f = s.item();
      const auto xv = x.data();
      if (x.requires_grad()) {
        auto gx = gbuf(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * f;
      }
      if (s.requires_grad()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
        gbuf(s)[0] += acc;
      }
    });
  }
  return result;
}

Tensor add_col(const Tensor& x, const Tensor& c) { return column_op(x, c, ColumnOp::kAdd, "add_col"); }
Tensor mul_col(const Tensor& x, const Tensor& c) { return column_op(x, c, ColumnOp::kMul, "mul_col"); }
Tensor div_col(const Tensor& x, const Tensor& c) { return column_op(x, c, ColumnOp::kDiv, "div_col"); }

Tensor tanh(const Tensor& x) {
  return unary(x, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor softmax_rows(const Tensor& x, double scale, std::span<const std::uint8_t> key_mask) {
  require_2d(x, "softmax_rows");
  if (!(scale > 0.0)) throw std::invalid_argument("softmax_rows: scale must be positive");
  const std::size_t m = x.rows(), n = x.cols();
  if (!key_mask.empty() && key_mask.size() != n) {
    throw DimensionError("softmax_rows: mask length " + std::to_string(key_mask.size()) +
                         " does not match " + std::to_string(n) + " columns");
  }
  auto valid = [&](std::size_t j) { return key_mask.empty() || key_mask[j] != 0; };
  const auto xv = x.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (valid(j)) mx = std::max(mx, scale * xv[i * n + j]);
    if (!std::isfinite(mx)) throw std::invalid_argument("softmax_rows: row has no unmasked column");
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!valid(j)) continue;
      const double e = std::exp(scale * xv[i * n + j] - mx);
      out[i * n + j] = e;
      total += e;
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  Tensor result({m, n}, std::move(out));
  if (auto* tape = detail::recording({&x})) {
    tape->record(result, {x}, [x, y = result.impl(), m, n, scale](std::span<const double> g) {
      auto gx = gbuf(x);
      const auto& yv = y->data;
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * yv[i * n + j];
        for (std::size_t j = 0; j < n; ++j)
          gx[i * n + j] += scale * yv[i * n + j] * (g[i * n + j] - dot);
      }
    });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor result = Tensor::scalar(total);
  if (auto* tape = detail::recording({&x})) {
    tape->record(result, {x}, [x](std::span<const double> g) {
      auto gx = gbuf(x);
      for (auto& v : gx) v += g[0];
    });
  }
  return result;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor row_sum(const Tensor& x) {
  require_2d(x, "row_sum");
  const std::size_t m = x.rows(), n = x.cols();
  const auto xv = x.data();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += xv[i * n + j];
  Tensor result({m, 1}, std::move(out));
  if (auto* tape = detail::recording({&x})) {
    tape->record(result, {x}, [x, m, n](std::span<const double> g) {
      auto gx = gbuf(x);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i];
    });
  }
  return result;
}

Tensor row_norm(const Tensor& x) {
  require_2d(x, "row_norm");
  const std::size_t m = x.rows(), n = x.cols();
  const auto xv = x.data();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += xv[i * n + j] * xv[i * n + j];
    out[i] = std::sqrt(acc);
  }
  Tensor result({m, 1}, std::move(out));
  if (auto* tape = detail::recording({&x})) {
    tape->record(result, {x}, [x, y = result.impl(), m, n](std::span<const double> g) {
      auto gx = gbuf(x);
      const auto xv = x.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double norm = y->data[i];
        if (norm == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i] * xv[i * n + j] / norm;
      }
    });
  }
  return result;
}

Tensor reshape(const Tensor& x, Shape shape) {
  Tensor result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  if (auto* tape = detail::recording({&x})) {
    tape->record(result, {x}, [x](std::span<const double> g) {
      auto gx = gbuf(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return result;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    require_2d(p, "concat_rows");
    if (p.cols() != n) {
      throw DimensionError("concat_rows: column count mismatch " + to_string(parts[0].shape()) +
                           " vs " + to_string(p.shape()));
    }
    m += p.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Tensor result({m, n}, std::move(out));
  GradientTape* tape = nullptr;
  for (const auto& p : parts) {
    if ((tape = detail::recording({&p}))) break;
  }
  if (tape) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    tape->record(result, inputs, [inputs](std::span<const double> g) {
      std::size_t offset = 0;
      for (const auto& p : inputs) {
        if (p.requires_grad()) {
          auto gp = gbuf(p);
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
        }
        offset += p.numel();
      }
    });
  }
  return result;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  for (const auto& p : parts) {
    require_2d(p, "concat_cols");
    if (p.rows() != m) {
      throw DimensionError("concat_cols: row count mismatch " + to_string(parts[0].shape()) +
                           " vs " + to_string(p.shape()));
    }
    n += p.cols();
  }
  std::vector<double> out(m * n);
  std::size_t col = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    const auto pv = p.data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(pv.data() + i * w, w, out.data() + i * n + col);
    col += w;
  }
  Tensor result({m, n}, std::move(out));
  GradientTape* tape = nullptr;
  for (const auto& p : parts) {
    if ((tape = detail::recording({&p}))) break;
  }
  if (tape) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    tape->record(result, inputs, [inputs, m, n](std::span<const double> g) {
      std::size_t col = 0;
      for (const auto& p : inputs) {
        const std::size_t w = p.cols();
        if (p.requires_grad()) {
          auto gp = gbuf(p);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * n + col + j];
        }
        col += w;
      }
    });
  }
  return result;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  require_2d(x, "slice_rows");
  if (count == 0 || begin + count > x.rows()) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + to_string(x.shape()));
  }
  const std::size_t n = x.cols();
  const auto xv = x.data();
  Tensor result({count, n}, std::vector<double>(xv.begin() + begin * n, xv.begin() + (begin + count) * n));
  if (auto* tape = detail::recording({&x})) {
    tape->record(result, {x}, [x, begin, n](std::span<const double> g) {
      auto gx = gbuf(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[begin * n + i] += g[i];
    });
  }
  return result;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_2d(x, "slice_cols");
  if (count == 0 || begin + count > x.cols()) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + to_string(x.shape()));
  }
  const std::size_t m = x.rows(), n = x.cols();
  const auto xv = x.data();
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(xv.data() + i * n + begin, count, out.data() + i * count);
  Tensor result({m, count}, std::move(out));
  if (auto* tape = detail::recording({&x})) {
    tape->record(result, {x}, [x, begin, count, m, n](std::span<const double> g) {
      auto gx = gbuf(x);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j) gx[i * n + begin + j] += g[i * count + j];
    });
  }
  return result;
}

Tensor gather_rows(const Tensor& x, std::span<const std::ptrdiff_t> index) {
  require_2d(x, "gather_rows");
  if (index.empty()) throw DimensionError("gather_rows: empty index");
  const std::size_t n = x.cols();
  const auto rows = static_cast<std::ptrdiff_t>(x.rows());
  const auto xv = x.data();
  std::vector<double> out(index.size() * n, 0.0);
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto src = index[i];
    if (src >= rows) {
      throw DimensionError("gather_rows: index " + std::to_string(src) + " outside " + to_string(x.shape()));
    }
    if (src >= 0) std::copy_n(xv.data() + src * n, n, out.data() + i * n);
  }
  Tensor result({index.size(), n}, std::move(out));
  if (auto* tape = detail::recording({&x})) {
    std::vector<std::ptrdiff_t> idx(index.begin(), index.end());
    tape->record(result, {x}, [x, idx = std::move(idx), n](std::span<const double> g) {
      auto gx = gbuf(x);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0) continue;
        const std::size_t base = static_cast<std::size_t>(idx[i]) * n;
        for (std::size_t j = 0; j < n; ++j) gx[base + j] += g[i * n + j];
      }
    });
  }
  return result;
}

Tensor aggregate_neighbors(const Tensor& x, const Adjacency& adj, Aggregation kind) {
  require_2d(x, "aggregate_neighbors");
  if (adj.nodes() != x.rows()) {
    throw DimensionError("aggregate_neighbors: adjacency over " + std::to_string(adj.nodes()) +
                         " nodes, features " + to_string(x.shape()));
  }
  const std::size_t m = x.rows(), n = x.cols();
  const auto xv = x.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t v = 0; v < m; ++v) {
    const std::size_t lo = adj.offsets[v], hi = adj.offsets[v + 1];
    if (lo == hi) continue;
    const double w = kind == Aggregation::kMean ? 1.0 / static_cast<double>(hi - lo) : 1.0;
    for (std::size_t e = lo; e < hi; ++e) {
      const std::size_t u = adj.neighbors[e];
      for (std::size_t j = 0; j < n; ++j) out[v * n + j] += w * xv[u * n + j];
    }
  }
  Tensor result({m, n}, std::move(out));
  if (auto* tape = detail::recording({&x})) {
    tape->record(result, {x}, [x, adj, kind, m, n](std::span<const double> g) {
      auto gx = gbuf(x);
      for (std::size_t v = 0; v < m; ++v) {
        const std::size_t lo = adj.offsets[v], hi = adj.offsets[v + 1];
        if (lo == hi) continue;
        const double w = kind == Aggregation::kMean ? 1.0 / static_cast<double>(hi - lo) : 1.0;
        for (std::size_t e = lo; e < hi; ++e) {
          const std::size_t u = adj.neighbors[e];
          for (std::size_t j = 0; j < n; ++j) gx[u * n + j] += w * g[v * n + j];
        }
      }
    });
  }
  return result;
}

namespace {
Tensor segment_reduce(const Tensor& x, std::span<const std::size_t> offsets, bool average) {
  require_2d(x, average ? "segment_mean" : "segment_sum");
  if (offsets.size() < 2 || offsets.back() != x.rows()) {
    throw DimensionError("segment reduction: offsets do not cover " + to_string(x.shape()));
  }
  const std::size_t groups = offsets.size() - 1, n = x.cols();
  const auto xv = x.data();
  std::vector<double> out(groups * n, 0.0);
  std::vector<double> weight(groups, 1.0);
  for (std::size_t s = 0; s < groups; ++s) {
    const std::size_t lo = offsets[s], hi = offsets[s + 1];
    if (hi <= lo) throw DimensionError("segment reduction: empty segment " + std::to_string(s));
    if (average) weight[s] = 1.0 / static_cast<double>(hi - lo);
    for (std::size_t r = lo; r < hi; ++r)
      for (std::size_t j = 0; j < n; ++j) out[s * n + j] += xv[r * n + j];
    for (std::size_t j = 0; j < n; ++j) out[s * n + j] *= weight[s];
  }
  Tensor result({groups, n}, std::move(out));
  if (auto* tape = detail::recording({&x})) {
    std::vector<std::size_t> off(offsets.begin(), offsets.end());
    tape->record(result, {x}, [x, off = std::move(off), weight = std::move(weight), n](std::span<const double> g) {
      auto gx = gbuf(x);
      for (std::size_t s = 0; s + 1 < off.size(); ++s)
        for (std::size_t r = off[s]; r < off[s + 1]; ++r)
          for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += weight[s] * g[s * n + j];
    });
  }
  return result;
}
}  // namespace

Tensor segment_sum(const Tensor& x, std::span<const std::size_t> offsets) {
  return segment_reduce(x, offsets, false);
}

Tensor segment_mean(const Tensor& x, std::span<const std::size_t> offsets) {
  return segment_reduce(x, offsets, true);
}

Tensor conv1d(const Tensor& x, const Tensor& w, std::size_t stride) {
  require_2d(x, "conv1d");
  require_2d(w, "conv1d");
  if (stride == 0) throw std::invalid_argument("conv1d: stride must be >= 1");
  const std::size_t rows = x.rows(), len = x.cols(), channels = w.rows(), klen = w.cols();
  if (klen > len) {
    throw std::invalid_argument("conv1d: kernel length " + std::to_string(klen) +
                                " exceeds signal length " + std::to_string(len));
  }
  const std::size_t outlen = (len - klen) / stride + 1;
  const auto xv = x.data();
  const auto wv = w.data();
  std::vector<double> out(rows * channels * outlen, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t h = 0; h < channels; ++h)
      for (std::size_t t = 0; t < outlen; ++t) {
        double acc = 0.0;
        for (std::size_t m = 0; m < klen; ++m) acc += wv[h * klen + m] * xv[r * len + t * stride + m];
        out[(r * channels + h) * outlen + t] = acc;
      }
  Tensor result({rows * channels, outlen}, std::move(out));
  if (auto* tape = detail::recording({&x, &w})) {
    tape->record(result, {x, w}, [=](std::span<const double> g) {
      const auto xv = x.data();
      const auto wv = w.data();
      std::span<double> gx, gw;
      if (x.requires_grad()) gx = gbuf(x);
      if (w.requires_grad()) gw = gbuf(w);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t h = 0; h < channels; ++h)
          for (std::size_t t = 0; t < outlen; ++t) {
            const double gi = g[(r * channels + h) * outlen + t];
            for (std::size_t m = 0; m < klen; ++m) {
              if (!gx.empty()) gx[r * len + t * stride + m] += gi * wv[h * klen + m];
              if (!gw.empty()) gw[h * klen + m] += gi * xv[r * len + t * stride + m];
            }
          }
    });
  }
  return result;
}

Tensor grouped_conv1d(const Tensor& x, const Tensor& kernels) {
  require_2d(x, "grouped_conv1d");
  require_2d(kernels, "grouped_conv1d");
  if (x.rows() != kernels.rows()) {
    throw DimensionError("grouped_conv1d: " + std::to_string(x.rows()) + " signal groups vs " +
                         std::to_string(kernels.rows()) + " kernel groups");
  }
  const std::size_t groups = x.rows(), len = x.cols(), klen = kernels.cols();
  if (klen > len) {
    throw std::invalid_argument("grouped_conv1d: kernel length " + std::to_string(klen) +
                                " exceeds signal length " + std::to_string(len));
  }
  const std::size_t outlen = len - klen + 1;
  const auto xv = x.data();
  const auto kv = kernels.data();
  std::vector<double> out(groups * outlen, 0.0);
  for (std::size_t gi = 0; gi < groups; ++gi)
    for (std::size_t t = 0; t < outlen; ++t) {
      double acc = 0.0;
      for (std::size_t m = 0; m < klen; ++m) acc += kv[gi * klen + m] * xv[gi * len + t + m];
      out[gi * outlen + t] = acc;
    }
  Tensor result({groups, outlen}, std::move(out));
  if (auto* tape = detail::recording({&x, &kernels})) {
    tape->record(result, {x, kernels}, [=](std::span<const double> g) {
      const auto xv = x.data();
      const auto kv = kernels.data();
      std::span<double> gx, gk;
      if (x.requires_grad()) gx = gbuf(x);
      if (kernels.requires_grad()) gk = gbuf(kernels);
      for (std::size_t gi = 0; gi < groups; ++gi)
        for (std::size_t t = 0; t < outlen; ++t) {
          const double go = g[gi * outlen + t];
          for (std::size_t m = 0; m < klen; ++m) {
            if (!gx.empty()) gx[gi * len + t + m] += go * kv[gi * klen + m];
            if (!gk.empty()) gk[gi * klen + m] += go * xv[gi * len + t + m];
          }
        }
    });
  }
  return result;
}

namespace {

struct NormInputs {
  std::size_t rows, features;
  std::vector<std::uint8_t> valid;
  std::size_t count;
};

NormInputs check_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      std::size_t stat_features, std::span<const std::uint8_t> mask) {
  require_2d(x, "batch_norm");
  const std::size_t rows = x.rows(), f = x.cols();
  if (gamma.numel() != f || beta.numel() != f) {
    throw DimensionError("batch_norm: affine parameters " + to_string(gamma.shape()) + "/" +
                         to_string(beta.shape()) + " for " + std::to_string(f) + " features");
  }
  if (stat_features != f) {
    throw DimensionError("batch_norm: running statistics hold " + std::to_string(stat_features) +
                         " features, input has " + std::to_string(f));
  }
  if (!mask.empty() && mask.size() != rows) {
    throw DimensionError("batch_norm: mask length " + std::to_string(mask.size()) + " for " +
                         std::to_string(rows) + " rows");
  }
  NormInputs in{rows, f, std::vector<std::uint8_t>(rows, 1), rows};
  if (!mask.empty()) {
    in.count = 0;
    for (std::size_t i = 0; i < rows; ++i) {
      in.valid[i] = mask[i] != 0;
      in.count += in.valid[i];
    }
  }
  return in;
}

}  // namespace

Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const BatchNormStats& stats, std::span<const std::uint8_t> mask) {
  const auto in = check_norm(x, gamma, beta, stats.running_mean.size(), mask);
  const std::size_t rows = in.rows, f = in.features;
  std::vector<double> inv(f);
  for (std::size_t j = 0; j < f; ++j) inv[j] = 1.0 / std::sqrt(stats.running_var[j] + stats.eps);
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  std::vector<double> out(rows * f, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!in.valid[i]) continue;
    for (std::size_t j = 0; j < f; ++j)
      out[i * f + j] = gv[j] * (xv[i * f + j] - stats.running_mean[j]) * inv[j] + bv[j];
  }
  Tensor result({rows, f}, std::move(out));
  if (auto* tape = detail::recording({&x, &gamma, &beta})) {
    std::vector<double> mu = stats.running_mean;
    tape->record(result, {x, gamma, beta},
                 [x, gamma, beta, valid = in.valid, inv, mu, rows, f](std::span<const double> g) {
                   const auto xv = x.data();
                   const auto gv = gamma.data();
                   std::span<double> gx, gg, gb;
                   if (x.requires_grad()) gx = gbuf(x);
                   if (gamma.requires_grad()) gg = gbuf(gamma);
                   if (beta.requires_grad()) gb = gbuf(beta);
                   for (std::size_t i = 0; i < rows; ++i) {
                     if (!valid[i]) continue;
                     for (std::size_t j = 0; j < f; ++j) {
                       const double go = g[i * f + j];
                       if (!gx.empty()) gx[i * f + j] += go * gv[j] * inv[j];
                       if (!gg.empty()) gg[j] += go * (xv[i * f + j] - mu[j]) * inv[j];
                       if (!gb.empty()) gb[j] += go;
                     }
                   }
                 });
  }
  return result;
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& stats, Mode mode, std::span<const std::uint8_t> mask) {
  if (mode == Mode::kEval) return batch_norm_eval(x, gamma, beta, stats, mask);
  const auto in = check_norm(x, gamma, beta, stats.running_mean.size(), mask);
  if (in.count == 0) throw std::invalid_argument("batch_norm: every row is masked (degenerate batch)");
  const std::size_t rows = in.rows, f = in.features;
  const auto xv = x.data();
  const double count = static_cast<double>(in.count);
  std::vector<double> mu(f, 0.0), var(f, 0.0), inv(f);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!in.valid[i]) continue;
    for (std::size_t j = 0; j < f; ++j) mu[j] += xv[i * f + j];
  }
  for (auto& v : mu) v /= count;
  for (std::size_t i = 0; i < rows; ++i) {
    if (!in.valid[i]) continue;
    for (std::size_t j = 0; j < f; ++j) {
      const double d = xv[i * f + j] - mu[j];
      var[j] += d * d;
    }
  }
  for (auto& v : var) v /= count;
  for (std::size_t j = 0; j < f; ++j) inv[j] = 1.0 / std::sqrt(var[j] + stats.eps);

  const double unbias = in.count > 1 ? count / (count - 1.0) : 1.0;
  for (std::size_t j = 0; j < f; ++j) {
    stats.running_mean[j] = (1.0 - stats.momentum) * stats.running_mean[j] + stats.momentum * mu[j];
    stats.running_var[j] = (1.0 - stats.momentum) * stats.running_var[j] + stats.momentum * var[j] * unbias;
  }

  const auto gv = gamma.data();
  const auto bv = beta.data();
  std::vector<double> xhat(rows * f, 0.0), out(rows * f, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!in.valid[i]) continue;
    for (std::size_t j = 0; j < f; ++j) {
      xhat[i * f + j] = (xv[i * f + j] - mu[j]) * inv[j];
      out[i * f + j] = gv[j] * xhat[i * f + j] + bv[j];
    }
  }
  Tensor result({rows, f}, std::move(out));
  if (auto* tape = detail::recording({&x, &gamma, &beta})) {
    tape->record(result, {x, gamma, beta},
                 [x, gamma, beta, valid = in.valid, xhat = std::move(xhat), inv, rows, f,
                  count](std::span<const double> g) {
                   const auto gv = gamma.data();
                   std::vector<double> sum_g(f, 0.0), sum_gx(f, 0.0);
                   for (std::size_t i = 0; i < rows; ++i) {
                     if (!valid[i]) continue;
                     for (std::size_t j = 0; j < f; ++j) {
                       sum_g[j] += g[i * f + j];
                       sum_gx[j] += g[i * f + j] * xhat[i * f + j];
                     }
                   }
                   if (gamma.requires_grad()) {
                     auto gg = gbuf(gamma);
                     for (std::size_t j = 0; j < f; ++j) gg[j] += sum_gx[j];
                   }
                   if (beta.requires_grad()) {
                     auto gb = gbuf(beta);
                     for (std::size_t j = 0; j < f; ++j) gb[j] += sum_g[j];
                   }
                   if (x.requires_grad()) {
                     auto gx = gbuf(x);
                     for (std::size_t i = 0; i < rows; ++i) {
                       if (!valid[i]) continue;
                       for (std::size_t j = 0; j < f; ++j) {
                         const double dxhat = g[i * f + j];
                         gx[i * f + j] += gv[j] * inv[j] / count *
                                          (count * dxhat - sum_g[j] - xhat[i * f + j] * sum_gx[j]);
                       }
                     }
                   }
                 });
  }
  return result;
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  require_same(pred, target, "mse_loss");
  const Tensor diff = sub(pred, target);
  return mean(mul(diff, diff));
}

Tensor bce_loss(const Tensor& pred, const Tensor& target) {
  require_same(pred, target, "bce_loss");
  constexpr double kLo = 1e-7, kHi = 1.0 - 1e-7;
  const auto pv = pred.data();
  const auto tv = target.data();
  const std::size_t n = pv.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(pv[i], kLo, kHi);
    total -= tv[i] * std::log(p) + (1.0 - tv[i]) * std::log(1.0 - p);
  }
  Tensor result = Tensor::scalar(total / static_cast<double>(n));
  if (auto* tape = detail::recording({&pred})) {
    tape->record(result, {pred, target}, [pred, target, n](std::span<const double> g) {
      auto gp = gbuf(pred);
      const auto pv = pred.data();
      const auto tv = target.data();
      for (std::size_t i = 0; i < n; ++i) {
        if (pv[i] < kLo || pv[i] > kHi) continue;
        const double p = pv[i];
        gp[i] += g[0] * (-(tv[i] / p) + (1.0 - tv[i]) / (1.0 - p)) / static_cast<double>(n);
      }
    });
  }
  return result;
}

}  // namespace gfm::ops
