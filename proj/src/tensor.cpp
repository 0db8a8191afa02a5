#include "magfuse/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

namespace magfuse {

namespace {

std::atomic<std::uint64_t> g_next_node_id{1};

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

void check_finite(const char* op, std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      std::ostringstream oss;
      oss << op << ": produced a non-finite value (" << x << ")";
      throw NumericError(oss.str());
    }
  }
}

std::shared_ptr<detail::TensorNode> make_node(Shape shape, std::vector<double> value) {
  auto n = std::make_shared<detail::TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
  return n;
}

// Lazily allocates the grad buffer, zero-filled.
std::vector<double>& grad_of(const std::shared_ptr<detail::TensorNode>& n) {
  if (n->grad.empty()) n->grad.assign(n->value.size(), 0.0);
  return n->grad;
}

bool has_out_grad(const std::shared_ptr<detail::TensorNode>& n) {
  return !n->grad.empty();
}

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail);
}

void require_rank2(const char* op, const Tensor& t, const char* name) {
  if (t.rank() != 2)
    shape_error(op, std::string(name) + " must be a matrix, got " + shape_str(t.shape()));
}

// True if b is usable as a length-n row vector over an [m x n] matrix.
bool row_vector_over(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2) return false;
  const std::size_t n = a.shape()[1];
  if (b.rank() == 1 && b.shape()[0] == n) return true;
  if (b.rank() == 2 && b.shape()[0] == 1 && b.shape()[1] == n) return true;
  return false;
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream oss;
  oss << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) oss << "x";
    oss << s[i];
  }
  oss << "]";
  return oss.str();
}

Tensor Tensor::zeros(Shape shape) {
  const std::size_t n = shape_numel(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(n, 0.0)));
}

Tensor Tensor::full(Shape shape, double v) {
  const std::size_t n = shape_numel(shape);
  if (!std::isfinite(v)) throw NumericError("Tensor::full: non-finite fill value");
  return Tensor(make_node(std::move(shape), std::vector<double>(n, v)));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  if (shape_numel(shape) != data.size()) {
    std::ostringstream oss;
    oss << "Tensor::from_data: shape " << shape_str(shape) << " wants "
        << shape_numel(shape) << " entries, got " << data.size();
    throw ShapeError(oss.str());
  }
  check_finite("Tensor::from_data", data);
  return Tensor(make_node(std::move(shape), std::move(data)));
}

Tensor Tensor::scalar(double v) { return from_data({1}, {v}); }

std::size_t Tensor::rows() const {
  if (rank() != 2) shape_error("rows", "not a matrix: " + shape_str(shape()));
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) shape_error("cols", "not a matrix: " + shape_str(shape()));
  return node_->shape[1];
}

double Tensor::value() const {
  if (size() != 1)
    shape_error("value", "tensor is not a scalar: " + shape_str(shape()));
  return node_->value[0];
}

Tensor Graph::make_result(Shape shape, std::vector<double> value, const char* op,
                          std::initializer_list<const Tensor*> inputs,
                          std::function<void()> backprop) {
  check_finite(op, value);
  Tensor out(make_node(std::move(shape), std::move(value)));
  bool needs_grad = false;
  for (const Tensor* in : inputs)
    if (in->requires_grad()) needs_grad = true;
  if (mode_ == Mode::record && needs_grad) {
    out.node_->requires_grad = true;
    for (const Tensor* in : inputs) touched_.push_back(in->node());
    touched_.push_back(out.node());
    records_.push_back({std::move(backprop)});
  }
  return out;
}

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a, "lhs");
  require_rank2("matmul", b, "rhs");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2)
    shape_error("matmul", "inner dimensions differ: " + shape_str(a.shape()) +
                              " vs " + shape_str(b.shape()));
  std::vector<double> c(m * n, 0.0);
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += aip * bv[p * n + j];
    }
  auto an = a.node(), bn = b.node();
  Tensor out = make_result({m, n}, std::move(c), "matmul", {&a, &b}, nullptr);
  if (out.requires_grad()) {
    auto on = out.node();
    // dA = dC . B^T, dB = A^T . dC
    records_.back().backprop = [an, bn, on, m, k, n]() {
      if (!has_out_grad(on)) return;
      const auto& go = on->grad;
      const auto& av2 = an->value;
      const auto& bv2 = bn->value;
      if (an->requires_grad) {
        auto& ga = grad_of(an);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += go[i * n + j] * bv2[p * n + j];
            ga[i * k + p] += acc;
          }
      }
      if (bn->requires_grad) {
        auto& gb = grad_of(bn);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = av2[i * k + p];
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * go[i * n + j];
          }
      }
    };
  }
  return out;
}

Tensor Graph::transpose(const Tensor& x) {
  require_rank2("transpose", x, "input");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  std::vector<double> y(m * n);
  const auto& xv = x.node()->value;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[j * m + i] = xv[i * n + j];
  auto xn = x.node();
  Tensor out = make_result({n, m}, std::move(y), "transpose", {&x}, nullptr);
  if (out.requires_grad()) {
    auto on = out.node();
    records_.back().backprop = [xn, on, m, n]() {
      if (!has_out_grad(on)) return;
      auto& gx = grad_of(xn);
      const auto& go = on->grad;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += go[j * m + i];
    };
  }
  return out;
}

Tensor Graph::add(const Tensor& a, const Tensor& b) {
  const bool bcast = !(a.shape() == b.shape()) && row_vector_over(a, b);
  if (!(a.shape() == b.shape()) && !bcast)
    shape_error("add", "incompatible shapes: " + shape_str(a.shape()) + " vs " +
                           shape_str(b.shape()));
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<double> y(av.size());
  if (bcast) {
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) y[i * n + j] = av[i * n + j] + bv[j];
  } else {
    for (std::size_t i = 0; i < av.size(); ++i) y[i] = av[i] + bv[i];
  }
  auto an = a.node(), bn = b.node();
  Tensor out = make_result(a.shape(), std::move(y), "add", {&a, &b}, nullptr);
  if (out.requires_grad()) {
    auto on = out.node();
    records_.back().backprop = [an, bn, on, bcast]() {
      if (!has_out_grad(on)) return;
      const auto& go = on->grad;
      if (an->requires_grad) {
        auto& ga = grad_of(an);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (bn->requires_grad) {
        auto& gb = grad_of(bn);
        if (bcast) {
          const std::size_t n = bn->value.size();
          for (std::size_t i = 0; i < go.size(); ++i) gb[i % n] += go[i];
        } else {
          for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
        }
      }
    };
  }
  return out;
}

Tensor Graph::sub(const Tensor& a, const Tensor& b) {
  const bool bcast = !(a.shape() == b.shape()) && row_vector_over(a, b);
  if (!(a.shape() == b.shape()) && !bcast)
    shape_error("sub", "incompatible shapes: " + shape_str(a.shape()) + " vs " +
                           shape_str(b.shape()));
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<double> y(av.size());
  if (bcast) {
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) y[i * n + j] = av[i * n + j] - bv[j];
  } else {
    for (std::size_t i = 0; i < av.size(); ++i) y[i] = av[i] - bv[i];
  }
  auto an = a.node(), bn = b.node();
  Tensor out = make_result(a.shape(), std::move(y), "sub", {&a, &b}, nullptr);
  if (out.requires_grad()) {
    auto on = out.node();
    records_.back().backprop = [an, bn, on, bcast]() {
      if (!has_out_grad(on)) return;
      const auto& go = on->grad;
      if (an->requires_grad) {
        auto& ga = grad_of(an);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (bn->requires_grad) {
        auto& gb = grad_of(bn);
        if (bcast) {
          const std::size_t n = bn->value.size();
          for (std::size_t i = 0; i < go.size(); ++i) gb[i % n] -= go[i];
        } else {
          for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
        }
      }
    };
  }
  return out;
}

Tensor Graph::mul(const Tensor& a, const Tensor& b) {
  const bool bcast = !(a.shape() == b.shape()) && row_vector_over(a, b);
  if (!(a.shape() == b.shape()) && !bcast)
    shape_error("mul", "incompatible shapes: " + shape_str(a.shape()) + " vs " +
                           shape_str(b.shape()));
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<double> y(av.size());
  const std::size_t n = bcast ? a.shape()[1] : 0;
  if (bcast) {
    for (std::size_t i = 0; i < av.size(); ++i) y[i] = av[i] * bv[i % n];
  } else {
    for (std::size_t i = 0; i < av.size(); ++i) y[i] = av[i] * bv[i];
  }
  auto an = a.node(), bn = b.node();
  Tensor out = make_result(a.shape(), std::move(y), "mul", {&a, &b}, nullptr);
  if (out.requires_grad()) {
    auto on = out.node();
    records_.back().backprop = [an, bn, on, bcast, n]() {
      if (!has_out_grad(on)) return;
      const auto& go = on->grad;
      const auto& av2 = an->value;
      const auto& bv2 = bn->value;
      if (an->requires_grad) {
        auto& ga = grad_of(an);
        for (std::size_t i = 0; i < go.size(); ++i)
          ga[i] += go[i] * (bcast ? bv2[i % n] : bv2[i]);
      }
      if (bn->requires_grad) {
        auto& gb = grad_of(bn);
        if (bcast) {
          for (std::size_t i = 0; i < go.size(); ++i) gb[i % n] += go[i] * av2[i];
        } else {
          for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av2[i];
        }
      }
    };
  }
  return out;
}

Tensor Graph::div(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape()))
    shape_error("div", "incompatible shapes: " + shape_str(a.shape()) + " vs " +
                           shape_str(b.shape()));
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) y[i] = av[i] / bv[i];
  auto an = a.node(), bn = b.node();
  Tensor out = make_result(a.shape(), std::move(y), "div", {&a, &b}, nullptr);
  if (out.requires_grad()) {
    auto on = out.node();
    records_.back().backprop = [an, bn, on]() {
      if (!has_out_grad(on)) return;
      const auto& go = on->grad;
      const auto& av2 = an->value;
      const auto& bv2 = bn->value;
      if (an->requires_grad) {
        auto& ga = grad_of(an);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] / bv2[i];
      }
      if (bn->requires_grad) {
        auto& gb = grad_of(bn);
        for (std::size_t i = 0; i < go.size(); ++i)
          gb[i] -= go[i] * av2[i] / (bv2[i] * bv2[i]);
      }
    };
  }
  return out;
}

Tensor Graph::relu(const Tensor& x) {
  const auto& xv = x.node()->value;
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  auto xn = x.node();
  Tensor out = make_result(x.shape(), std::move(y), "relu", {&x}, nullptr);
  if (out.requires_grad()) {
    auto on = out.node();
    records_.back().backprop = [xn, on]() {
      if (!has_out_grad(on)) return;
      auto& gx = grad_of(xn);
      const auto& go = on->grad;
      const auto& xv2 = xn->value;
      for (std::size_t i = 0; i < go.size(); ++i)
        if (xv2[i] > 0.0) gx[i] += go[i];
    };
  }
  return out;
}

Tensor Graph::tanh(const Tensor& x) {
  const auto& xv = x.node()->value;
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = std::tanh(xv[i]);
  auto xn = x.node();
  Tensor out = make_result(x.shape(), std::move(y), "tanh", {&x}, nullptr);
  if (out.requires_grad()) {
    auto on = out.node();
    records_.back().backprop = [xn, on]() {
      if (!has_out_grad(on)) return;
      auto& gx = grad_of(xn);
      const auto& go = on->grad;
      const auto& yv = on->value;
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * (1.0 - yv[i] * yv[i]);
    };
  }
  return out;
}

Tensor Graph::abs(const Tensor& x) {
  const auto& xv = x.node()->value;
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = std::fabs(xv[i]);
  auto xn = x.node();
  Tensor out = make_result(x.shape(), std::move(y), "abs", {&x}, nullptr);
  if (out.requires_grad()) {
    auto on = out.node();
    records_.back().backprop = [xn, on]() {
      if (!has_out_grad(on)) return;
      auto& gx = grad_of(xn);
      const auto& go = on->grad;
      const auto& xv2 = xn->value;
      for (std::size_t i = 0; i < go.size(); ++i) {
        if (xv2[i] > 0.0) gx[i] += go[i];
        else if (xv2[i] < 0.0) gx[i] -= go[i];
      }
    };
  }
  return out;
}

Tensor Graph::scale(const Tensor& x, double c) {
  if (!std::isfinite(c)) throw NumericError("scale: non-finite constant");
  const auto& xv = x.node()->value;
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] * c;
  auto xn = x.node();
  Tensor out = make_result(x.shape(), std::move(y), "scale", {&x}, nullptr);
  if (out.requires_grad()) {
    auto on = out.node();
    records_.back().backprop = [xn, on, c]() {
      if (!has_out_grad(on)) return;
      auto& gx = grad_of(xn);
      const auto& go = on->grad;
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * c;
    };
  }
  return out;
}

Tensor Graph::shift(const Tensor& x, double c) {
  if (!std::isfinite(c)) throw NumericError("shift: non-finite constant");
  const auto& xv = x.node()->value;
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] + c;
  auto xn = x.node();
  Tensor out = make_result(x.shape(), std::move(y), "shift", {&x}, nullptr);
  if (out.requires_grad()) {
    auto on = out.node();
    records_.back().backprop = [xn, on]() {
      if (!has_out_grad(on)) return;
      auto& gx = grad_of(xn);
      const auto& go = on->grad;
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    };
  }
  return out;
}

Tensor Graph::softmax_rows(const Tensor& x) {
  require_rank2("softmax_rows", x, "input");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (n == 0) shape_error("softmax_rows", "rows must be non-empty");
  const auto& xv = x.node()->value;
  std::vector<double> y(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = xv[i * n];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xv[i * n + j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      y[i * n + j] = std::exp(xv[i * n + j] - mx);
      denom += y[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] /= denom;
  }
  auto xn = x.node();
  Tensor out = make_result({m, n}, std::move(y), "softmax_rows", {&x}, nullptr);
  if (out.requires_grad()) {
    auto on = out.node();
    records_.back().backprop = [xn, on, m, n]() {
      if (!has_out_grad(on)) return;
      auto& gx = grad_of(xn);
      const auto& go = on->grad;
      const auto& yv = on->value;
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += go[i * n + j] * yv[i * n + j];
        for (std::size_t j = 0; j < n; ++j)
          gx[i * n + j] += yv[i * n + j] * (go[i * n + j] - dot);
      }
    };
  }
  return out;
}

Tensor Graph::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank2("layer_norm", x, "input");
  const std::size_t m = x.shape()[0], d = x.shape()[1];
  if (eps <= 0.0) throw ConfigError("layer_norm: eps must be > 0");
  if (gain.size() != d || bias.size() != d)
    shape_error("layer_norm", "gain/bias must have length " + std::to_string(d) +
                                  ", got " + shape_str(gain.shape()) + " and " +
                                  shape_str(bias.shape()));
  const auto& xv = x.node()->value;
  const auto& gv = gain.node()->value;
  const auto& bv = bias.node()->value;
  std::vector<double> y(m * d), xhat(m * d), inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xv[i * d + j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xv[i * d + j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (xv[i * d + j] - mean) * inv_std[i];
      y[i * d + j] = gv[j] * xhat[i * d + j] + bv[j];
    }
  }
  auto xn = x.node(), gn = gain.node(), bn = bias.node();
  Tensor out = make_result({m, d}, std::move(y), "layer_norm", {&x, &gain, &bias}, nullptr);
  if (out.requires_grad()) {
    auto on = out.node();
    records_.back().backprop = [xn, gn, bn, on, m, d,
                                xhat = std::move(xhat),
                                inv_std = std::move(inv_std)]() {
      if (!has_out_grad(on)) return;
      const auto& go = on->grad;
      const auto& gv2 = gn->value;
      if (gn->requires_grad) {
        auto& gg = grad_of(gn);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < d; ++j) gg[j] += go[i * d + j] * xhat[i * d + j];
      }
      if (bn->requires_grad) {
        auto& gb = grad_of(bn);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < d; ++j) gb[j] += go[i * d + j];
      }
      if (xn->requires_grad) {
        auto& gx = grad_of(xn);
        for (std::size_t i = 0; i < m; ++i) {
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = go[i * d + j] * gv2[j];
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xhat[i * d + j];
          }
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = go[i * d + j] * gv2[j];
            gx[i * d + j] += inv_std[i] * (dxh - inv_d * sum_dxhat -
                                           xhat[i * d + j] * inv_d * sum_dxhat_xhat);
          }
        }
      }
    };
  }
  return out;
}

Tensor Graph::l2_norm(const Tensor& x) {
  const auto& xv = x.node()->value;
  double ss = 0.0;
  for (double v : xv) ss += v * v;
  const double norm = std::sqrt(ss);
  auto xn = x.node();
  Tensor out = make_result({1}, {norm}, "l2_norm", {&x}, nullptr);
  if (out.requires_grad()) {
    auto on = out.node();
    records_.back().backprop = [xn, on, norm]() {
      if (!has_out_grad(on) || norm == 0.0) return;
      auto& gx = grad_of(xn);
      const double g = on->grad[0] / norm;
      const auto& xv2 = xn->value;
      for (std::size_t i = 0; i < xv2.size(); ++i) gx[i] += g * xv2[i];
    };
  }
  return out;
}

Tensor Graph::row_l2_norms(const Tensor& x) {
  require_rank2("row_l2_norms", x, "input");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  const auto& xv = x.node()->value;
  std::vector<double> y(m);
  for (std::size_t i = 0; i < m; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += xv[i * n + j] * xv[i * n + j];
    y[i] = std::sqrt(ss);
  }
  auto xn = x.node();
  Tensor out = make_result({m, 1}, std::move(y), "row_l2_norms", {&x}, nullptr);
  if (out.requires_grad()) {
    auto on = out.node();
    records_.back().backprop = [xn, on, m, n]() {
      if (!has_out_grad(on)) return;
      auto& gx = grad_of(xn);
      const auto& go = on->grad;
      const auto& yv = on->value;
      const auto& xv2 = xn->value;
      for (std::size_t i = 0; i < m; ++i) {
        if (yv[i] == 0.0) continue;
        const double g = go[i] / yv[i];
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g * xv2[i * n + j];
      }
    };
  }
  return out;
}

Tensor Graph::concat_last(const Tensor& a, const Tensor& b) {
  require_rank2("concat_last", a, "lhs");
  require_rank2("concat_last", b, "rhs");
  if (a.shape()[0] != b.shape()[0])
    shape_error("concat_last", "row counts differ: " + shape_str(a.shape()) +
                                   " vs " + shape_str(b.shape()));
  const std::size_t m = a.shape()[0], pa = a.shape()[1], pb = b.shape()[1];
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<double> y(m * (pa + pb));
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(&av[i * pa], pa, &y[i * (pa + pb)]);
    std::copy_n(&bv[i * pb], pb, &y[i * (pa + pb) + pa]);
  }
  auto an = a.node(), bn = b.node();
  Tensor out = make_result({m, pa + pb}, std::move(y), "concat_last", {&a, &b}, nullptr);
  if (out.requires_grad()) {
    auto on = out.node();
    records_.back().backprop = [an, bn, on, m, pa, pb]() {
      if (!has_out_grad(on)) return;
      const auto& go = on->grad;
      if (an->requires_grad) {
        auto& ga = grad_of(an);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < pa; ++j) ga[i * pa + j] += go[i * (pa + pb) + j];
      }
      if (bn->requires_grad) {
        auto& gb = grad_of(bn);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < pb; ++j)
            gb[i * pb + j] += go[i * (pa + pb) + pa + j];
      }
    };
  }
  return out;
}

Tensor Graph::slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank2("slice_cols", x, "input");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (start + count > n)
    shape_error("slice_cols", "slice [" + std::to_string(start) + ", " +
                                  std::to_string(start + count) + ") exceeds " +
                                  shape_str(x.shape()));
  const auto& xv = x.node()->value;
  std::vector<double> y(m * count);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(&xv[i * n + start], count, &y[i * count]);
  auto xn = x.node();
  Tensor out = make_result({m, count}, std::move(y), "slice_cols", {&x}, nullptr);
  if (out.requires_grad()) {
    auto on = out.node();
    records_.back().backprop = [xn, on, m, n, start, count]() {
      if (!has_out_grad(on)) return;
      auto& gx = grad_of(xn);
      const auto& go = on->grad;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j)
          gx[i * n + start + j] += go[i * count + j];
    };
  }
  return out;
}

Tensor Graph::reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size())
    shape_error("reshape", "cannot reshape " + shape_str(x.shape()) + " to " +
                               shape_str(shape));
  auto xn = x.node();
  Tensor out = make_result(std::move(shape), std::vector<double>(x.node()->value),
                           "reshape", {&x}, nullptr);
  if (out.requires_grad()) {
    auto on = out.node();
    records_.back().backprop = [xn, on]() {
      if (!has_out_grad(on)) return;
      auto& gx = grad_of(xn);
      const auto& go = on->grad;
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    };
  }
  return out;
}

Tensor Graph::scale_rows(const Tensor& x, const Tensor& s) {
  require_rank2("scale_rows", x, "input");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  const bool s_ok = (s.rank() == 1 && s.shape()[0] == m) ||
                    (s.rank() == 2 && s.shape()[0] == m && s.shape()[1] == 1);
  if (!s_ok)
    shape_error("scale_rows", "scales must be [m] or [m x 1] for m=" +
                                  std::to_string(m) + ", got " + shape_str(s.shape()));
  const auto& xv = x.node()->value;
  const auto& sv = s.node()->value;
  std::vector<double> y(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = xv[i * n + j] * sv[i];
  auto xn = x.node(), sn = s.node();
  Tensor out = make_result({m, n}, std::move(y), "scale_rows", {&x, &s}, nullptr);
  if (out.requires_grad()) {
    auto on = out.node();
    records_.back().backprop = [xn, sn, on, m, n]() {
      if (!has_out_grad(on)) return;
      const auto& go = on->grad;
      const auto& xv2 = xn->value;
      const auto& sv2 = sn->value;
      if (xn->requires_grad) {
        auto& gx = grad_of(xn);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += go[i * n + j] * sv2[i];
      }
      if (sn->requires_grad) {
        auto& gs = grad_of(sn);
        for (std::size_t i = 0; i < m; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += go[i * n + j] * xv2[i * n + j];
          gs[i] += acc;
        }
      }
    };
  }
  return out;
}

Tensor Graph::clamp_max(const Tensor& x, double cap) {
  const auto& xv = x.node()->value;
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = std::min(xv[i], cap);
  auto xn = x.node();
  Tensor out = make_result(x.shape(), std::move(y), "clamp_max", {&x}, nullptr);
  if (out.requires_grad()) {
    auto on = out.node();
    records_.back().backprop = [xn, on, cap]() {
      if (!has_out_grad(on)) return;
      auto& gx = grad_of(xn);
      const auto& go = on->grad;
      const auto& xv2 = xn->value;
      for (std::size_t i = 0; i < go.size(); ++i)
        if (xv2[i] < cap) gx[i] += go[i];
    };
  }
  return out;
}

Tensor Graph::sum(const Tensor& x) {
  const auto& xv = x.node()->value;
  double acc = 0.0;
  for (double v : xv) acc += v;
  auto xn = x.node();
  Tensor out = make_result({1}, {acc}, "sum", {&x}, nullptr);
  if (out.requires_grad()) {
    auto on = out.node();
    records_.back().backprop = [xn, on]() {
      if (!has_out_grad(on)) return;
      auto& gx = grad_of(xn);
      const double g = on->grad[0];
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    };
  }
  return out;
}

Tensor Graph::mean(const Tensor& x) {
  const std::size_t n = x.size();
  const auto& xv = x.node()->value;
  double acc = 0.0;
  for (double v : xv) acc += v;
  acc /= static_cast<double>(n);
  auto xn = x.node();
  Tensor out = make_result({1}, {acc}, "mean", {&x}, nullptr);
  if (out.requires_grad()) {
    auto on = out.node();
    records_.back().backprop = [xn, on, n]() {
      if (!has_out_grad(on)) return;
      auto& gx = grad_of(xn);
      const double g = on->grad[0] / static_cast<double>(n);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    };
  }
  return out;
}

Tensor Graph::gather_rows(const Tensor& table, const std::vector<std::size_t>& ids) {
  require_rank2("gather_rows", table, "table");
  const std::size_t v = table.shape()[0], d = table.shape()[1];
  for (std::size_t id : ids)
    if (id >= v)
      throw DataError("gather_rows: row id " + std::to_string(id) +
                      " out of range for table " + shape_str(table.shape()));
  const auto& tv = table.node()->value;
  std::vector<double> y(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(&tv[ids[i] * d], d, &y[i * d]);
  auto tn = table.node();
  Tensor out =
      make_result({ids.size(), d}, std::move(y), "gather_rows", {&table}, nullptr);
  if (out.requires_grad()) {
    auto on = out.node();
    records_.back().backprop = [tn, on, ids, d]() {
      if (!has_out_grad(on)) return;
      auto& gt = grad_of(tn);
      const auto& go = on->grad;
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) gt[ids[i] * d + j] += go[i * d + j];
    };
  }
  return out;
}

Tensor Graph::dropout(const Tensor& x, double p, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0)
    throw ConfigError("dropout: probability must be in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  const auto& xv = x.node()->value;
  std::vector<double> mask(xv.size());
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    mask[i] = rng.uniform() >= p ? keep_scale : 0.0;
    y[i] = xv[i] * mask[i];
  }
  auto xn = x.node();
  Tensor out = make_result(x.shape(), std::move(y), "dropout", {&x}, nullptr);
  if (out.requires_grad()) {
    auto on = out.node();
    records_.back().backprop = [xn, on, mask = std::move(mask)]() {
      if (!has_out_grad(on)) return;
      auto& gx = grad_of(xn);
      const auto& go = on->grad;
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * mask[i];
    };
  }
  return out;
}

void Graph::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ShapeError("backward: loss must be a scalar, got " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<empty>")));
  touched_.push_back(loss.node());
  grad_of(loss.node())[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it)
    if (it->backprop) it->backprop();
}

void Graph::zero_grads() {
  for (auto& n : touched_) n->grad.clear();
}

Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> data(n);
  for (auto& v : data) v = rng.uniform(-bound, bound);
  Tensor t = Tensor::from_data(std::move(shape), std::move(data));
  t.set_requires_grad(true);
  return t;
}

Tensor zeros_param(Shape shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

Tensor full_param(Shape shape, double v) {
  Tensor t = Tensor::full(std::move(shape), v);
  t.set_requires_grad(true);
  return t;
}

}  // namespace magfuse
