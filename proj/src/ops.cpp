#include "speechllm/ops.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "speechllm/error.h"

namespace speechllm {

using detail::make_result;
using detail::Node;

namespace {

using RowMatrix = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

MatMap as_matrix(std::vector<real>& v, int rows, int cols) { return MatMap(v.data(), rows, cols); }
ConstMatMap as_matrix(const std::vector<real>& v, int rows, int cols) {
  return ConstMatMap(v.data(), rows, cols);
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ContractViolation(std::string(op) + " expects a matrix, got " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ContractViolation(std::string(op) + " shape mismatch " + shape_string(a.shape()) + " vs " +
                            shape_string(b.shape()));
  }
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

// Elementwise unary op with derivative expressed through input and output.
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto& in = x.node().value;
  std::vector<real> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return make_result(x.shape(), std::move(out), {x.node_ptr()}, [deriv](Node& self) {
    Node& a = parent(self, 0);
    auto& ga = a.ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * deriv(a.value[i], self.value[i]);
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ContractViolation("matmul inner dimension mismatch " + shape_string(a.shape()) + " x " +
                            shape_string(b.shape()));
  }
  std::vector<real> out(static_cast<std::size_t>(m) * n);
  as_matrix(out, m, n).noalias() = as_matrix(a.node().value, m, k) * as_matrix(b.node().value, k, n);
  return make_result({m, n}, std::move(out), {a.node_ptr(), b.node_ptr()}, [m, k, n](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    auto g = as_matrix(std::as_const(self.grad), m, n);
    if (pa.requires_grad) {
      as_matrix(pa.ensure_grad(), m, k).noalias() += g * as_matrix(std::as_const(pb.value), k, n).transpose();
    }
    if (pb.requires_grad) {
      as_matrix(pb.ensure_grad(), k, n).noalias() += as_matrix(std::as_const(pa.value), m, k).transpose() * g;
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const int m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw ContractViolation("matmul_nt inner dimension mismatch " + shape_string(a.shape()) + " x " +
                            shape_string(b.shape()) + "^T");
  }
  std::vector<real> out(static_cast<std::size_t>(m) * n);
  as_matrix(out, m, n).noalias() =
      as_matrix(a.node().value, m, k) * as_matrix(b.node().value, n, k).transpose();
  return make_result({m, n}, std::move(out), {a.node_ptr(), b.node_ptr()}, [m, k, n](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    auto g = as_matrix(std::as_const(self.grad), m, n);
    if (pa.requires_grad) {
      as_matrix(pa.ensure_grad(), m, k).noalias() += g * as_matrix(std::as_const(pb.value), n, k);
    }
    if (pb.requires_grad) {
      as_matrix(pb.ensure_grad(), n, k).noalias() += g.transpose() * as_matrix(std::as_const(pa.value), m, k);
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const int m = a.rows(), n = a.cols();
  std::vector<real> out(static_cast<std::size_t>(m) * n);
  as_matrix(out, n, m) = as_matrix(a.node().value, m, n).transpose();
  return make_result({n, m}, std::move(out), {a.node_ptr()}, [m, n](Node& self) {
    Node& pa = parent(self, 0);
    as_matrix(pa.ensure_grad(), m, n) += as_matrix(std::as_const(self.grad), n, m).transpose();
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto& x = a.node().value;
  const auto& y = b.node().value;
  std::vector<real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      Node& n = parent(self, p);
      if (!n.requires_grad) continue;
      auto& g = n.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto& x = a.node().value;
  const auto& y = b.node().value;
  std::vector<real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto& x = a.node().value;
  const auto& y = b.node().value;
  std::vector<real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& a, real factor) {
  const auto& x = a.node().value;
  std::vector<real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
  return make_result(a.shape(), std::move(out), {a.node_ptr()}, [factor](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_bias");
  const int m = x.rows(), n = x.cols();
  if (bias.rank() != 1 || bias.dim(0) != n) {
    throw ContractViolation("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
                            shape_string(x.shape()));
  }
  std::vector<real> out(x.node().value);
  const auto& b = bias.node().value;
  for (int i = 0; i < m; ++i) {
    real* row = out.data() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) row[j] += b[static_cast<std::size_t>(j)];
  }
  return make_result(x.shape(), std::move(out), {x.node_ptr(), bias.node_ptr()}, [m, n](Node& self) {
    Node& px = parent(self, 0);
    Node& pb = parent(self, 1);
    if (px.requires_grad) {
      auto& g = px.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (int i = 0; i < m; ++i) {
        const real* row = self.grad.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) g[static_cast<std::size_t>(j)] += row[j];
      }
    }
  });
}

Tensor add_constant(const Tensor& x, std::span<const real> c) {
  if (c.size() != x.numel()) throw ContractViolation("add_constant: size mismatch");
  std::vector<real> out(x.node().value);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[i];
  return make_result(x.shape(), std::move(out), {x.node_ptr()}, [](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor gelu(const Tensor& x) {
  // tanh approximation
  constexpr real k0 = real(0.7978845608028654);  // sqrt(2/pi)
  constexpr real k1 = real(0.044715);
  return unary(
      x,
      [](real v) {
        const real t = std::tanh(k0 * (v + k1 * v * v * v));
        return real(0.5) * v * (real(1) + t);
      },
      [](real v, real) {
        const real inner = k0 * (v + k1 * v * v * v);
        const real t = std::tanh(inner);
        const real dinner = k0 * (real(1) + real(3) * k1 * v * v);
        return real(0.5) * (real(1) + t) + real(0.5) * v * (real(1) - t * t) * dinner;
      });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](real v) { return v > real(0) ? v : real(0); },
      [](real v, real) { return v > real(0) ? real(1) : real(0); });
}

Tensor sin(const Tensor& x) {
  return unary(
      x, [](real v) { return std::sin(v); }, [](real v, real) { return std::cos(v); });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, real eps) {
  require_matrix(x, "layer_norm");
  const int m = x.rows(), n = x.cols();
  if (gain.rank() != 1 || gain.dim(0) != n || bias.rank() != 1 || bias.dim(0) != n) {
    throw ContractViolation("layer_norm: gain/bias width mismatch for " + shape_string(x.shape()));
  }
  const auto& in = x.node().value;
  const auto& g = gain.node().value;
  const auto& b = bias.node().value;
  std::vector<real> out(in.size());
  // Saved per-row normalized values and inverse std for the backward pass.
  auto xhat = std::make_shared<std::vector<real>>(in.size());
  auto inv_std = std::make_shared<std::vector<real>>(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * n;
    real mu = 0;
    for (int j = 0; j < n; ++j) mu += in[off + j];
    mu /= real(n);
    real var = 0;
    for (int j = 0; j < n; ++j) {
      const real d = in[off + j] - mu;
      var += d * d;
    }
    var /= real(n);
    const real is = real(1) / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(i)] = is;
    for (int j = 0; j < n; ++j) {
      const real h = (in[off + j] - mu) * is;
      (*xhat)[off + j] = h;
      out[off + j] = h * g[static_cast<std::size_t>(j)] + b[static_cast<std::size_t>(j)];
    }
  }
  return make_result(x.shape(), std::move(out), {x.node_ptr(), gain.node_ptr(), bias.node_ptr()},
                     [m, n, xhat, inv_std](Node& self) {
                       Node& px = parent(self, 0);
                       Node& pg = parent(self, 1);
                       Node& pb = parent(self, 2);
                       const auto& dy = self.grad;
                       if (pg.requires_grad || pb.requires_grad) {
                         auto* gg = pg.requires_grad ? &pg.ensure_grad() : nullptr;
                         auto* gb = pb.requires_grad ? &pb.ensure_grad() : nullptr;
                         for (int i = 0; i < m; ++i) {
                           const std::size_t off = static_cast<std::size_t>(i) * n;
                           for (int j = 0; j < n; ++j) {
                             if (gg) (*gg)[static_cast<std::size_t>(j)] += dy[off + j] * (*xhat)[off + j];
                             if (gb) (*gb)[static_cast<std::size_t>(j)] += dy[off + j];
                           }
                         }
                       }
                       if (!px.requires_grad) return;
                       auto& gx = px.ensure_grad();
                       std::vector<real> dxhat(static_cast<std::size_t>(n));
                       for (int i = 0; i < m; ++i) {
                         const std::size_t off = static_cast<std::size_t>(i) * n;
                         real mean_d = 0, mean_dx = 0;
                         for (int j = 0; j < n; ++j) {
                           const real d = dy[off + j] * pg.value[static_cast<std::size_t>(j)];
                           dxhat[static_cast<std::size_t>(j)] = d;
                           mean_d += d;
                           mean_dx += d * (*xhat)[off + j];
                         }
                         mean_d /= real(n);
                         mean_dx /= real(n);
                         const real is = (*inv_std)[static_cast<std::size_t>(i)];
                         for (int j = 0; j < n; ++j) {
                           gx[off + j] += is * (dxhat[static_cast<std::size_t>(j)] - mean_d -
                                                (*xhat)[off + j] * mean_dx);
                         }
                       }
                     });
}

Tensor softmax_rows(const Tensor& x) {
  require_matrix(x, "softmax_rows");
  const int m = x.rows(), n = x.cols();
  const auto& in = x.node().value;
  std::vector<real> out(in.size());
  for (int i = 0; i < m; ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * n;
    real mx = -std::numeric_limits<real>::infinity();
    for (int j = 0; j < n; ++j) mx = std::max(mx, in[off + j]);
    real total = 0;
    for (int j = 0; j < n; ++j) {
      const real e = std::exp(in[off + j] - mx);
      out[off + j] = e;
      total += e;
    }
    for (int j = 0; j < n; ++j) out[off + j] /= total;
  }
  return make_result(x.shape(), std::move(out), {x.node_ptr()}, [m, n](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (int i = 0; i < m; ++i) {
      const std::size_t off = static_cast<std::size_t>(i) * n;
      real dot = 0;
      for (int j = 0; j < n; ++j) dot += self.grad[off + j] * self.value[off + j];
      for (int j = 0; j < n; ++j) g[off + j] += self.value[off + j] * (self.grad[off + j] - dot);
    }
  });
}

Tensor log_softmax_rows(const Tensor& x) {
  require_matrix(x, "log_softmax_rows");
  const int m = x.rows(), n = x.cols();
  const auto& in = x.node().value;
  std::vector<real> out(in.size());
  for (int i = 0; i < m; ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * n;
    real mx = -std::numeric_limits<real>::infinity();
    for (int j = 0; j < n; ++j) mx = std::max(mx, in[off + j]);
    real total = 0;
    for (int j = 0; j < n; ++j) total += std::exp(in[off + j] - mx);
    const real lse = mx + std::log(total);
    for (int j = 0; j < n; ++j) out[off + j] = in[off + j] - lse;
  }
  return make_result(x.shape(), std::move(out), {x.node_ptr()}, [m, n](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (int i = 0; i < m; ++i) {
      const std::size_t off = static_cast<std::size_t>(i) * n;
      real total = 0;
      for (int j = 0; j < n; ++j) total += self.grad[off + j];
      for (int j = 0; j < n; ++j) g[off + j] += self.grad[off + j] - std::exp(self.value[off + j]) * total;
    }
  });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_matrix(table, "embedding");
  const int vocab = table.rows(), d = table.cols();
  const int n = static_cast<int>(ids.size());
  std::vector<int> saved(ids.begin(), ids.end());
  std::vector<real> out(static_cast<std::size_t>(n) * d);
  const auto& t = table.node().value;
  for (int i = 0; i < n; ++i) {
    const int id = saved[static_cast<std::size_t>(i)];
    if (id < 0 || id >= vocab) {
      throw ContractViolation("embedding id " + std::to_string(id) + " outside table of " +
                              std::to_string(vocab) + " rows");
    }
    std::copy_n(t.begin() + static_cast<std::ptrdiff_t>(id) * d, d,
                out.begin() + static_cast<std::ptrdiff_t>(i) * d);
  }
  return make_result({n, d}, std::move(out), {table.node_ptr()}, [saved = std::move(saved), d](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < saved.size(); ++i) {
      real* row = g.data() + static_cast<std::size_t>(saved[i]) * d;
      const real* src = self.grad.data() + i * static_cast<std::size_t>(d);
      for (int j = 0; j < d; ++j) row[j] += src[j];
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, const std::vector<bool>& mask) {
  require_matrix(logits, "cross_entropy");
  const int m = logits.rows(), v = logits.cols();
  if (static_cast<int>(targets.size()) != m || static_cast<int>(mask.size()) != m) {
    throw ContractViolation("cross_entropy: targets/mask length must equal logits rows");
  }
  const int count = static_cast<int>(std::count(mask.begin(), mask.end(), true));
  if (count == 0) throw UndefinedLossError("cross_entropy: loss mask selects no positions");
  const auto& in = logits.node().value;
  // Softmax of scored rows, kept for backward.
  auto probs = std::make_shared<std::vector<real>>(in.size(), real(0));
  double total = 0;
  for (int i = 0; i < m; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= v) throw ContractViolation("cross_entropy: target id out of range");
    const std::size_t off = static_cast<std::size_t>(i) * v;
    real mx = -std::numeric_limits<real>::infinity();
    for (int j = 0; j < v; ++j) mx = std::max(mx, in[off + j]);
    real z = 0;
    for (int j = 0; j < v; ++j) {
      const real e = std::exp(in[off + j] - mx);
      (*probs)[off + j] = e;
      z += e;
    }
    for (int j = 0; j < v; ++j) (*probs)[off + j] /= z;
    total -= static_cast<double>(in[off + t] - mx - std::log(z));
  }
  const real loss = static_cast<real>(total / count);
  std::vector<int> tg(targets.begin(), targets.end());
  return make_result(Shape{}, {loss}, {logits.node_ptr()},
                     [probs, tg = std::move(tg), mask, m, v, count](Node& self) {
                       auto& g = parent(self, 0).ensure_grad();
                       const real s = self.grad[0] / real(count);
                       for (int i = 0; i < m; ++i) {
                         if (!mask[static_cast<std::size_t>(i)]) continue;
                         const std::size_t off = static_cast<std::size_t>(i) * v;
                         for (int j = 0; j < v; ++j) g[off + j] += s * (*probs)[off + j];
                         g[off + tg[static_cast<std::size_t>(i)]] -= s;
                       }
                     });
}

Tensor slice_rows(const Tensor& x, int begin, int end) {
  require_matrix(x, "slice_rows");
  const int m = x.rows(), n = x.cols();
  if (begin < 0 || end > m || begin > end) {
    throw ContractViolation("slice_rows [" + std::to_string(begin) + ", " + std::to_string(end) +
                            ") out of range for " + shape_string(x.shape()));
  }
  const auto& in = x.node().value;
  std::vector<real> out(in.begin() + static_cast<std::ptrdiff_t>(begin) * n,
                        in.begin() + static_cast<std::ptrdiff_t>(end) * n);
  return make_result({end - begin, n}, std::move(out), {x.node_ptr()}, [begin, n](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    const std::size_t off = static_cast<std::size_t>(begin) * n;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[off + i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& x, int begin, int end) {
  require_matrix(x, "slice_cols");
  const int m = x.rows(), n = x.cols();
  if (begin < 0 || end > n || begin > end) {
    throw ContractViolation("slice_cols [" + std::to_string(begin) + ", " + std::to_string(end) +
                            ") out of range for " + shape_string(x.shape()));
  }
  const int w = end - begin;
  const auto& in = x.node().value;
  std::vector<real> out(static_cast<std::size_t>(m) * w);
  for (int i = 0; i < m; ++i) {
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(i) * n + begin, w,
                out.begin() + static_cast<std::ptrdiff_t>(i) * w);
  }
  return make_result({m, w}, std::move(out), {x.node_ptr()}, [m, n, w, begin](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < w; ++j) {
        g[static_cast<std::size_t>(i) * n + begin + j] += self.grad[static_cast<std::size_t>(i) * w + j];
      }
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractViolation("concat_rows of nothing");
  const int n = parts[0].cols();
  int m = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::vector<int> offsets;
  for (const Tensor& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.cols() != n) throw ContractViolation("concat_rows width mismatch");
    offsets.push_back(m);
    m += p.rows();
    parents.push_back(p.node_ptr());
  }
  std::vector<real> out;
  out.reserve(static_cast<std::size_t>(m) * n);
  for (const Tensor& p : parts) out.insert(out.end(), p.node().value.begin(), p.node().value.end());
  return make_result({m, n}, std::move(out), std::move(parents), [offsets, n](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& g = p.ensure_grad();
      const std::size_t off = static_cast<std::size_t>(offsets[k]) * n;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[off + i];
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractViolation("concat_cols of nothing");
  const int m = parts[0].rows();
  int n = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::vector<int> offsets, widths;
  for (const Tensor& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != m) throw ContractViolation("concat_cols height mismatch");
    offsets.push_back(n);
    widths.push_back(p.cols());
    n += p.cols();
    parents.push_back(p.node_ptr());
  }
  std::vector<real> out(static_cast<std::size_t>(m) * n);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].node().value;
    for (int i = 0; i < m; ++i) {
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(i) * widths[k], widths[k],
                  out.begin() + static_cast<std::ptrdiff_t>(i) * n + offsets[k]);
    }
  }
  return make_result({m, n}, std::move(out), std::move(parents), [offsets, widths, m, n](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& g = p.ensure_grad();
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < widths[k]; ++j) {
          g[static_cast<std::size_t>(i) * widths[k] + j] +=
              self.grad[static_cast<std::size_t>(i) * n + offsets[k] + j];
        }
      }
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ContractViolation("reshape " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  return make_result(std::move(shape), x.node().value, {x.node_ptr()}, [](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor unfold_frames(const Tensor& x, int kernel, int stride, int pad, int max_rows) {
  require_matrix(x, "unfold_frames");
  if (kernel < 1 || stride < 1 || pad < 0) throw ContractViolation("unfold_frames: bad geometry");
  const int t = x.rows(), c = x.cols();
  const int span = t + 2 * pad - kernel;
  if (span < 0) {
    throw EmptyOutputError("unfold_frames: " + std::to_string(t) + " frames shorter than kernel " +
                           std::to_string(kernel));
  }
  int out_rows = span / stride + 1;
  if (max_rows >= 0) out_rows = std::min(out_rows, max_rows);
  if (out_rows < 1) throw EmptyOutputError("unfold_frames: no output rows");
  const int width = kernel * c;
  const auto& in = x.node().value;
  std::vector<real> out(static_cast<std::size_t>(out_rows) * width, real(0));
  for (int l = 0; l < out_rows; ++l) {
    for (int j = 0; j < kernel; ++j) {
      const int src = l * stride - pad + j;
      if (src < 0 || src >= t) continue;
      std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(src) * c, c,
                  out.begin() + static_cast<std::ptrdiff_t>(l) * width + static_cast<std::ptrdiff_t>(j) * c);
    }
  }
  return make_result({out_rows, width}, std::move(out), {x.node_ptr()},
                     [t, c, kernel, stride, pad, out_rows, width](Node& self) {
                       auto& g = parent(self, 0).ensure_grad();
                       for (int l = 0; l < out_rows; ++l) {
                         for (int j = 0; j < kernel; ++j) {
                           const int src = l * stride - pad + j;
                           if (src < 0 || src >= t) continue;
                           const real* from = self.grad.data() + static_cast<std::size_t>(l) * width +
                                              static_cast<std::size_t>(j) * c;
                           real* to = g.data() + static_cast<std::size_t>(src) * c;
                           for (int k = 0; k < c; ++k) to[k] += from[k];
                         }
                       }
                     });
}

Tensor sum(const Tensor& x) {
  const auto& in = x.node().value;
  real total = 0;
  for (real v : in) total += v;
  return make_result(Shape{}, {total}, {x.node_ptr()}, [](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (real& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ContractViolation("mean of empty tensor");
  return scale(sum(x), real(1) / static_cast<real>(x.numel()));
}

}  // namespace speechllm
