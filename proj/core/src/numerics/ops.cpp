#include "proda/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "proda/errors.hpp"

namespace proda::num {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

using detail::Node;

std::size_t last_dim(const Tensor& x, const char* op) {
  if (x.rank() == 0) throw ContractError(std::string(op) + ": expected rank >= 1, got scalar");
  return x.shape().back();
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename Fwd, typename Deriv>
Tensor unary(const char* name, const Tensor& x, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.size());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  return make_op(name, x.shape(), std::move(out), {x}, [deriv](Node& self) {
    auto& p = *self.parents[0];
    auto g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
    }
  });
}

void check_mask(const char* op, std::span<const std::uint8_t> mask, std::size_t expected) {
  if (!mask.empty() && mask.size() != expected) {
    throw ContractError(std::string(op) + ": mask has " + std::to_string(mask.size()) +
                        " flags, expected " + std::to_string(expected));
  }
}

}  // namespace

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ContractError("reshape: shape mismatch " + to_string(x.shape()) + " vs " +
                        to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_op("reshape", std::move(shape), std::move(out), {x}, [](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor matmul(const Tensor& x, const Tensor& w) {
  if (w.rank() != 2 || last_dim(x, "matmul") != w.dim(0)) {
    throw ContractError("matmul: shape mismatch " + to_string(x.shape()) + " vs " +
                        to_string(w.shape()));
  }
  const auto k = w.dim(0);
  const auto n = w.dim(1);
  const auto rows = x.size() / k;
  Shape shape = x.shape();
  shape.back() = n;
  std::vector<double> out(rows * n);
  MutMap(out.data(), rows, n).noalias() =
      ConstMap(x.data().data(), rows, k) * ConstMap(w.data().data(), k, n);
  return make_op("matmul", std::move(shape), std::move(out), {x, w},
                 [rows, k, n](Node& self) {
                   ConstMap g(self.grad.data(), rows, n);
                   auto& px = *self.parents[0];
                   auto& pw = *self.parents[1];
                   if (px.requires_grad) {
                     MutMap(px.grad_buffer().data(), rows, k).noalias() +=
                         g * ConstMap(pw.value.data(), k, n).transpose();
                   }
                   if (pw.requires_grad) {
                     MutMap(pw.grad_buffer().data(), k, n).noalias() +=
                         ConstMap(px.value.data(), rows, k).transpose() * g;
                   }
                 });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return make_op("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
      for (std::size_t p = 0; p < 2; ++p) {
        if (!self.parents[p]->requires_grad) continue;
        auto g = self.parents[p]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
    });
  }
  if (b.rank() == 1 && a.rank() >= 1 && a.shape().back() == b.dim(0)) {
    const auto n = b.dim(0);
    std::vector<double> out(a.size());
    auto av = a.data();
    auto bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i % n];
    return make_op("add_bias", a.shape(), std::move(out), {a, b}, [n](Node& self) {
      if (self.parents[0]->requires_grad) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
      if (self.parents[1]->requires_grad) {
        auto g = self.parents[1]->grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
      }
    });
  }
  throw ContractError("add: shape mismatch " + to_string(a.shape()) + " vs " +
                      to_string(b.shape()));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  expect_same_shape("sub", a.shape(), b.shape());
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_op("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      auto g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return make_op("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      if (pa.requires_grad) {
        auto g = pa.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
      }
      if (pb.requires_grad) {
        auto g = pb.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
      }
    });
  }
  const auto width = last_dim(a, "mul");
  if (width == 0 || b.size() * width != a.size()) {
    throw ContractError("mul: shape mismatch " + to_string(a.shape()) + " vs " +
                        to_string(b.shape()));
  }
  std::vector<double> out(a.size());
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i / width];
  return make_op("mul_rows", a.shape(), std::move(out), {a, b}, [width](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i / width];
    }
    if (pb.requires_grad) {
      auto g = pb.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        g[i / width] += self.grad[i] * pa.value[i];
      }
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(
      "add_scalar", x, [offset](double v) { return v + offset; },
      [](double, double) { return 1.0; });
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  const auto wa = last_dim(a, "concat_last");
  const auto wb = last_dim(b, "concat_last");
  Shape lead_a(a.shape().begin(), a.shape().end() - 1);
  Shape lead_b(b.shape().begin(), b.shape().end() - 1);
  if (lead_a != lead_b) {
    throw ContractError("concat_last: shape mismatch " + to_string(a.shape()) + " vs " +
                        to_string(b.shape()));
  }
  const auto rows = numel(lead_a);
  const auto w = wa + wb;
  std::vector<double> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data().begin() + r * wa, wa, out.begin() + r * w);
    std::copy_n(b.data().begin() + r * wb, wb, out.begin() + r * w + wa);
  }
  Shape shape = a.shape();
  shape.back() = w;
  return make_op("concat_last", std::move(shape), std::move(out), {a, b},
                 [rows, wa, wb, w](Node& self) {
                   if (self.parents[0]->requires_grad) {
                     auto g = self.parents[0]->grad_buffer();
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t c = 0; c < wa; ++c) g[r * wa + c] += self.grad[r * w + c];
                   }
                   if (self.parents[1]->requires_grad) {
                     auto g = self.parents[1]->grad_buffer();
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t c = 0; c < wb; ++c)
                         g[r * wb + c] += self.grad[r * w + wa + c];
                   }
                 });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.rank() == 0 || b.rank() == 0 ||
      !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1,
                  b.shape().end())) {
    throw ContractError("concat_rows: shape mismatch " + to_string(a.shape()) + " vs " +
                        to_string(b.shape()));
  }
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  Shape shape = a.shape();
  shape[0] += b.dim(0);
  const auto na = a.size();
  return make_op("concat_rows", std::move(shape), std::move(out), {a, b}, [na](Node& self) {
    if (self.parents[0]->requires_grad) {
      auto g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[na + i];
    }
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  if (x.rank() == 0 || begin + count > x.dim(0)) {
    throw ContractError("slice_rows: rows [" + std::to_string(begin) + ", " +
                        std::to_string(begin + count) + ") out of range for " +
                        to_string(x.shape()));
  }
  const auto stride = x.size() / x.dim(0);
  std::vector<double> out(x.data().begin() + begin * stride,
                          x.data().begin() + (begin + count) * stride);
  Shape shape = x.shape();
  shape[0] = count;
  const auto offset = begin * stride;
  return make_op("slice_rows", std::move(shape), std::move(out), {x}, [offset](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[offset + i] += self.grad[i];
  });
}

Tensor swap_axes12(const Tensor& x) {
  if (x.rank() != 4) throw ContractError("swap_axes12: expected rank 4, got " + to_string(x.shape()));
  const auto A = x.dim(0), B = x.dim(1), C = x.dim(2), D = x.dim(3);
  std::vector<double> out(x.size());
  auto in = x.data();
  for (std::size_t a = 0; a < A; ++a)
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        std::copy_n(in.begin() + ((a * B + b) * C + c) * D, D,
                    out.begin() + ((a * C + c) * B + b) * D);
  return make_op("swap_axes12", {A, C, B, D}, std::move(out), {x}, [A, B, C, D](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t a = 0; a < A; ++a)
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t d = 0; d < D; ++d)
            g[((a * B + b) * C + c) * D + d] += self.grad[((a * C + c) * B + b) * D + d];
  });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0 ? v : 0.0; },
      [](double in, double) { return in > 0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor abs_value(const Tensor& x) {
  return unary(
      "abs", x, [](double v) { return std::abs(v); },
      [](double in, double) { return in > 0 ? 1.0 : (in < 0 ? -1.0 : 0.0); });
}

Tensor softmax_last(const Tensor& x, std::span<const std::uint8_t> mask) {
  const auto w = last_dim(x, "softmax_last");
  check_mask("softmax_last", mask, x.size());
  const auto rows = x.size() / w;
  std::vector<double> out(x.size(), 0.0);
  auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < w; ++c) {
      const auto i = r * w + c;
      if (mask.empty() || mask[i]) hi = std::max(hi, in[i]);
    }
    if (!std::isfinite(hi)) continue;
    double total = 0.0;
    for (std::size_t c = 0; c < w; ++c) {
      const auto i = r * w + c;
      if (mask.empty() || mask[i]) total += (out[i] = std::exp(in[i] - hi));
    }
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] /= total;
  }
  return make_op("softmax_last", x.shape(), std::move(out), {x}, [rows, w](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < w; ++c) dot += self.grad[r * w + c] * self.value[r * w + c];
      for (std::size_t c = 0; c < w; ++c) {
        const auto i = r * w + c;
        g[i] += self.value[i] * (self.grad[i] - dot);
      }
    }
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_op("sum", {}, {total}, {x}, [](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (auto& gi : g) gi += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ContractError("mean: empty tensor");
  double total = 0.0;
  for (double v : x.data()) total += v;
  const double n = static_cast<double>(x.size());
  return make_op("mean", {}, {total / n}, {x}, [n](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (auto& gi : g) gi += self.grad[0] / n;
  });
}

Tensor variance(const Tensor& x) {
  if (x.size() == 0) throw ContractError("variance: empty tensor");
  const double n = static_cast<double>(x.size());
  double m = 0.0;
  for (double v : x.data()) m += v;
  m /= n;
  double acc = 0.0;
  for (double v : x.data()) acc += (v - m) * (v - m);
  return make_op("variance", {}, {acc / n}, {x}, [n, m](Node& self) {
    auto& p = *self.parents[0];
    auto g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * 2.0 * (p.value[i] - m) / n;
  });
}

Tensor group_sum(const Tensor& x, std::size_t groups) {
  if (groups == 0 || x.size() % groups != 0) {
    throw ContractError("group_sum: cannot split " + to_string(x.shape()) + " into " +
                        std::to_string(groups) + " groups");
  }
  const auto width = x.size() / groups;
  std::vector<double> out(groups, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) out[i / width] += x[i];
  return make_op("group_sum", {groups}, std::move(out), {x}, [width](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i / width];
  });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  expect_same_shape("mse", a.shape(), b.shape());
  if (a.size() == 0) throw ContractError("mse: empty tensor");
  const double n = static_cast<double>(a.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return make_op("mse", {}, {acc / n}, {a, b}, [n](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const double s = 2.0 * self.grad[0] / n;
    if (pa.requires_grad) {
      auto g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * (pa.value[i] - pb.value[i]);
    }
    if (pb.requires_grad) {
      auto g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= s * (pa.value[i] - pb.value[i]);
    }
  });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  expect_same_shape("bce_with_logits", logits.shape(), targets.shape());
  if (logits.size() == 0) throw ContractError("bce_with_logits: empty tensor");
  const double n = static_cast<double>(logits.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double x = logits[i];
    acc += std::max(x, 0.0) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
  }
  auto t = std::make_shared<std::vector<double>>(targets.data().begin(), targets.data().end());
  return make_op("bce_with_logits", {}, {acc / n}, {logits}, [n, t](Node& self) {
    auto& p = *self.parents[0];
    auto g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[0] * (stable_sigmoid(p.value[i]) - (*t)[i]) / n;
    }
  });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 std::span<const std::uint8_t> mask) {
  if (q.rank() != 3) throw ContractError("attention: expected [G,S,D], got " + to_string(q.shape()));
  expect_same_shape("attention", q.shape(), k.shape());
  expect_same_shape("attention", q.shape(), v.shape());
  const auto G = q.dim(0), S = q.dim(1), D = q.dim(2);
  check_mask("attention", mask, G * S);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(D));

  auto probs = std::make_shared<std::vector<double>>(G * S * S, 0.0);
  std::vector<double> out(q.size(), 0.0);
  RowMat logits(S, S);
  for (std::size_t g = 0; g < G; ++g) {
    ConstMap Q(q.data().data() + g * S * D, S, D);
    ConstMap K(k.data().data() + g * S * D, S, D);
    ConstMap V(v.data().data() + g * S * D, S, D);
    logits.noalias() = (Q * K.transpose()) * inv_sqrt;
    MutMap P(probs->data() + g * S * S, S, S);
    for (std::size_t i = 0; i < S; ++i) {
      if (!mask.empty() && !mask[g * S + i]) continue;
      double hi = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < S; ++j)
        if (mask.empty() || mask[g * S + j]) hi = std::max(hi, logits(i, j));
      double total = 0.0;
      for (std::size_t j = 0; j < S; ++j)
        if (mask.empty() || mask[g * S + j]) total += (P(i, j) = std::exp(logits(i, j) - hi));
      P.row(i) /= total;
    }
    MutMap(out.data() + g * S * D, S, D).noalias() = P * V;
  }
  return make_op("attention", q.shape(), std::move(out), {q, k, v},
                 [G, S, D, inv_sqrt, probs](Node& self) {
                   auto& pq = *self.parents[0];
                   auto& pk = *self.parents[1];
                   auto& pv = *self.parents[2];
                   RowMat dP(S, S), dL(S, S);
                   for (std::size_t g = 0; g < G; ++g) {
                     const auto off = g * S * D;
                     ConstMap dO(self.grad.data() + off, S, D);
                     ConstMap P(probs->data() + g * S * S, S, S);
                     ConstMap Q(pq.value.data() + off, S, D);
                     ConstMap K(pk.value.data() + off, S, D);
                     ConstMap V(pv.value.data() + off, S, D);
                     if (pv.requires_grad) {
                       MutMap(pv.grad_buffer().data() + off, S, D).noalias() += P.transpose() * dO;
                     }
                     if (!pq.requires_grad && !pk.requires_grad) continue;
                     dP.noalias() = dO * V.transpose();
                     for (std::size_t i = 0; i < S; ++i) {
                       const double dot = dP.row(i).dot(P.row(i));
                       for (std::size_t j = 0; j < S; ++j) dL(i, j) = P(i, j) * (dP(i, j) - dot);
                     }
                     dL *= inv_sqrt;
                     if (pq.requires_grad) {
                       MutMap(pq.grad_buffer().data() + off, S, D).noalias() += dL * K;
                     }
                     if (pk.requires_grad) {
                       MutMap(pk.grad_buffer().data() + off, S, D).noalias() += dL.transpose() * Q;
                     }
                   }
                 });
}

Tensor self_attention(const Tensor& x, std::span<const std::uint8_t> mask, const Tensor& wq,
                      const Tensor& wk, const Tensor& wv) {
  if (x.rank() != 3) {
    throw ContractError("self_attention: expected [G,S,D], got " + to_string(x.shape()));
  }
  auto attended = attention(matmul(x, wq), matmul(x, wk), matmul(x, wv), mask);
  auto out = add(x, attended);
  if (mask.empty()) return out;
  return mul(out, mask_column(mask));
}

Tensor embedding(const Tensor& table, std::span<const std::size_t> ids) {
  if (table.rank() != 2) {
    throw ContractError("embedding: table must be [V,D], got " + to_string(table.shape()));
  }
  for (auto id : ids) {
    if (id >= table.dim(0)) {
      throw ContractError("embedding: id " + std::to_string(id) + " out of range for table " +
                          to_string(table.shape()));
    }
  }
  return gather_rows(table, ids);
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> idx) {
  if (x.rank() == 0) throw ContractError("gather_rows: scalar input");
  const auto rows = x.dim(0);
  const auto width = x.size() / rows;
  std::vector<double> out(idx.size() * width);
  for (std::size_t e = 0; e < idx.size(); ++e) {
    if (idx[e] >= rows) {
      throw ContractError("gather_rows: index " + std::to_string(idx[e]) + " out of range for " +
                          to_string(x.shape()));
    }
    std::copy_n(x.data().begin() + idx[e] * width, width, out.begin() + e * width);
  }
  Shape shape = x.shape();
  shape[0] = idx.size();
  auto index = std::make_shared<std::vector<std::size_t>>(idx.begin(), idx.end());
  return make_op("gather_rows", std::move(shape), std::move(out), {x},
                 [index, width](Node& self) {
                   auto g = self.parents[0]->grad_buffer();
                   for (std::size_t e = 0; e < index->size(); ++e)
                     for (std::size_t c = 0; c < width; ++c)
                       g[(*index)[e] * width + c] += self.grad[e * width + c];
                 });
}

Tensor scatter_add_rows(const Tensor& x, std::span<const std::size_t> idx, std::size_t rows) {
  if (x.rank() == 0 || x.dim(0) != idx.size()) {
    throw ContractError("scatter_add_rows: " + std::to_string(idx.size()) +
                        " indices for shape " + to_string(x.shape()));
  }
  const auto width = x.size() / x.dim(0);
  std::vector<double> out(rows * width, 0.0);
  for (std::size_t e = 0; e < idx.size(); ++e) {
    if (idx[e] >= rows) {
      throw ContractError("scatter_add_rows: index " + std::to_string(idx[e]) +
                          " out of range for " + std::to_string(rows) + " rows");
    }
    for (std::size_t c = 0; c < width; ++c) out[idx[e] * width + c] += x[e * width + c];
  }
  Shape shape = x.shape();
  shape[0] = rows;
  auto index = std::make_shared<std::vector<std::size_t>>(idx.begin(), idx.end());
  return make_op("scatter_add_rows", std::move(shape), std::move(out), {x},
                 [index, width](Node& self) {
                   auto g = self.parents[0]->grad_buffer();
                   for (std::size_t e = 0; e < index->size(); ++e)
                     for (std::size_t c = 0; c < width; ++c)
                       g[e * width + c] += self.grad[(*index)[e] * width + c];
                 });
}

namespace {

struct WeightedLayout {
  std::size_t groups, seq, width;
};

WeightedLayout weighted_layout(const char* op, const Tensor& w, const Tensor& v,
                               std::size_t groups) {
  if (groups == 0 || w.size() % groups != 0 || w.size() == 0 || v.size() % w.size() != 0) {
    throw ContractError(std::string(op) + ": shape mismatch " + to_string(w.shape()) + " vs " +
                        to_string(v.shape()));
  }
  return {groups, w.size() / groups, v.size() / w.size()};
}

}  // namespace

Tensor weighted_sum(const Tensor& weights, const Tensor& values, std::size_t groups) {
  const auto [R, S, D] = weighted_layout("weighted_sum", weights, values, groups);
  std::vector<double> out(R * D, 0.0);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t s = 0; s < S; ++s) {
      const double w = weights[r * S + s];
      for (std::size_t d = 0; d < D; ++d) out[r * D + d] += w * values[(r * S + s) * D + d];
    }
  return make_op("weighted_sum", {R, D}, std::move(out), {weights, values},
                 [R, S, D](Node& self) {
                   auto& pw = *self.parents[0];
                   auto& pv = *self.parents[1];
                   for (std::size_t r = 0; r < R; ++r)
                     for (std::size_t s = 0; s < S; ++s) {
                       const auto i = r * S + s;
                       if (pw.requires_grad) {
                         double acc = 0.0;
                         for (std::size_t d = 0; d < D; ++d)
                           acc += self.grad[r * D + d] * pv.value[i * D + d];
                         pw.grad_buffer()[i] += acc;
                       }
                       if (pv.requires_grad) {
                         auto g = pv.grad_buffer();
                         for (std::size_t d = 0; d < D; ++d)
                           g[i * D + d] += self.grad[r * D + d] * pw.value[i];
                       }
                     }
                 });
}

Tensor normalized_weighted_sum(const Tensor& weights, const Tensor& values, std::size_t groups,
                               double eps) {
  const auto [R, S, D] = weighted_layout("normalized_weighted_sum", weights, values, groups);
  std::vector<double> out(R * D, 0.0);
  auto denom = std::make_shared<std::vector<double>>(R, eps);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t s = 0; s < S; ++s) {
      const double w = weights[r * S + s];
      (*denom)[r] += w;
      for (std::size_t d = 0; d < D; ++d) out[r * D + d] += w * values[(r * S + s) * D + d];
    }
    if ((*denom)[r] == 0.0) {
      throw NumericError("normalized_weighted_sum", "normalized_weighted_sum: zero denominator");
    }
    for (std::size_t d = 0; d < D; ++d) out[r * D + d] /= (*denom)[r];
  }
  return make_op("normalized_weighted_sum", {R, D}, std::move(out), {weights, values},
                 [R, S, D, denom](Node& self) {
                   auto& pw = *self.parents[0];
                   auto& pv = *self.parents[1];
                   for (std::size_t r = 0; r < R; ++r) {
                     const double z = (*denom)[r];
                     for (std::size_t s = 0; s < S; ++s) {
                       const auto i = r * S + s;
                       if (pw.requires_grad) {
                         double acc = 0.0;
                         for (std::size_t d = 0; d < D; ++d)
                           acc += self.grad[r * D + d] * (pv.value[i * D + d] - self.value[r * D + d]);
                         pw.grad_buffer()[i] += acc / z;
                       }
                       if (pv.requires_grad) {
                         auto g = pv.grad_buffer();
                         for (std::size_t d = 0; d < D; ++d)
                           g[i * D + d] += self.grad[r * D + d] * pw.value[i] / z;
                       }
                     }
                   }
                 });
}

Tensor mask_column(std::span<const std::uint8_t> mask) {
  std::vector<double> values(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) values[i] = mask[i] ? 1.0 : 0.0;
  return Tensor::from({mask.size(), 1}, std::move(values));
}

}  // namespace proda::num
