#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "magfuse/errors.hpp"
#include "magfuse/rng.hpp"

namespace magfuse {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first touched by a backward pass
  bool requires_grad = false;
  std::uint64_t id = 0;
};

}  // namespace detail

// Dense 64-bit real tensor. Handles are shallow: copies alias the same node
// of the differentiation graph, so parameters can live across many graphs
// while the optimizer updates them in place. Entries are validated finite on
// construction and after every operation; a NaN/Inf raises NumericError.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor from_data(Shape shape, std::vector<double> data);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double value() const;  // scalar extraction; requires size() == 1
  double at(std::size_t i) const { return node_->value[i]; }
  double at(std::size_t i, std::size_t j) const { return node_->value[i * cols() + j]; }

  std::span<const double> data() const { return node_->value; }
  std::vector<double>& mutable_data() { return node_->value; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  // Gradient of the most recent backward pass(es); empty span if untouched.
  std::span<const double> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad.clear(); }

  std::uint64_t id() const { return node_->id; }

  // Graph-internal node access.
  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
  friend class Graph;

  std::shared_ptr<detail::TensorNode> node_;
};

// Reverse-mode tape. Operations go through a Graph, which records them in
// execution order (inputs always precede consumers); backward() replays the
// records in reverse. backward() accumulates into .grad -- reset with
// zero_grads() (or per-tensor zero_grad) between optimizer steps, so calling
// it twice without a reset doubles every gradient.
//
// A Graph is single-threaded. Evaluation with frozen weights should use
// Mode::no_grad, which skips recording entirely; such forward passes are
// reentrant and safe to run concurrently (one Graph per thread).
class Graph {
 public:
  enum class Mode { record, no_grad };

  explicit Graph(Mode mode = Mode::record) : mode_(mode) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor transpose(const Tensor& x);

  // Elementwise; b may broadcast as a length-n vector over the rows of an
  // [m x n] matrix (no other broadcasting).
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor div(const Tensor& a, const Tensor& b);  // identical shapes only

  Tensor relu(const Tensor& x);  // adjoint takes subgradient 0 at x == 0
  Tensor tanh(const Tensor& x);
  Tensor abs(const Tensor& x);  // adjoint 0 at x == 0
  Tensor scale(const Tensor& x, double c);
  Tensor shift(const Tensor& x, double c);

  Tensor softmax_rows(const Tensor& x);  // max-subtracted for stability
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

  Tensor l2_norm(const Tensor& x);       // scalar
  Tensor row_l2_norms(const Tensor& x);  // [m x 1] per-row Euclidean norms
  Tensor concat_last(const Tensor& a, const Tensor& b);
  Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
  Tensor reshape(const Tensor& x, Shape shape);
  Tensor scale_rows(const Tensor& x, const Tensor& s);  // s is [m] or [m x 1]
  Tensor clamp_max(const Tensor& x, double cap);  // adjoint 0 where x >= cap
  Tensor sum(const Tensor& x);
  Tensor mean(const Tensor& x);
  Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& ids);

  // Inverted dropout: training mode zeroes entries with probability p and
  // scales survivors by 1/(1-p); eval mode returns x unchanged.
  Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse, accumulating
  // adjoints into .grad of every tensor reachable from loss.
  void backward(const Tensor& loss);

  // Clears .grad on every tensor this graph has touched.
  void zero_grads();

  std::size_t num_ops() const { return records_.size(); }
  bool recording() const { return mode_ == Mode::record; }

 private:
  struct Record {
    std::function<void()> backprop;
  };

  Tensor make_result(Shape shape, std::vector<double> value, const char* op,
                     std::initializer_list<const Tensor*> inputs,
                     std::function<void()> backprop);

  Mode mode_;
  std::vector<Record> records_;
  std::vector<std::shared_ptr<detail::TensorNode>> touched_;
};

// Xavier/Glorot uniform initialization over the given fan-in/fan-out,
// flagged as a trainable parameter.
Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// Zero-initialized trainable parameter.
Tensor zeros_param(Shape shape);

// Constant-filled trainable parameter (layer-norm gains etc).
Tensor full_param(Shape shape, double v);

}  // namespace magfuse
