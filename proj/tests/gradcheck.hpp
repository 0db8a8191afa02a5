#pragma once

// Central finite-difference gradient oracle. Independent of the adjoint
// implementations it checks: each probe re-runs the forward pass on a fresh
// no-grad graph with one input entry perturbed by +-h.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "magfuse/tensor.hpp"

namespace gradcheck {

struct Result {
  double max_err = 0.0;      // worst |analytic - fd| / max(|analytic|, |fd|, floor)
  std::string where;         // "<input>#<flat index>" of the worst entry
  std::size_t n_checked = 0;
};

// fwd(graph, inputs) must rebuild the same computation from the same input
// tensors and return a scalar loss.
using Forward =
    std::function<magfuse::Tensor(magfuse::Graph&, std::vector<magfuse::Tensor>&)>;

inline Result check(const Forward& fwd, std::vector<magfuse::Tensor> inputs,
                    double h = 1e-5, double denom_floor = 1e-3) {
  using namespace magfuse;
  for (auto& t : inputs) t.set_requires_grad(true);

  Graph g;
  Tensor loss = fwd(g, inputs);
  g.backward(loss);

  auto eval_loss = [&](std::vector<Tensor>& probe) {
    Graph ng(Graph::Mode::no_grad);
    return fwd(ng, probe).value();
  };

  Result res;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const auto analytic = inputs[t].grad();
    for (std::size_t i = 0; i < inputs[t].size(); ++i) {
      const double a = analytic.empty() ? 0.0 : analytic[i];
      const double orig = inputs[t].data()[i];

      inputs[t].mutable_data()[i] = orig + h;
      const double up = eval_loss(inputs);
      inputs[t].mutable_data()[i] = orig - h;
      const double down = eval_loss(inputs);
      inputs[t].mutable_data()[i] = orig;

      const double fd = (up - down) / (2.0 * h);
      const double err =
          std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), denom_floor});
      if (err > res.max_err) {
        res.max_err = err;
        res.where = "input" + std::to_string(t) + "#" + std::to_string(i);
      }
      ++res.n_checked;
    }
  }
  return res;
}

// Gradient check over a model's named parameters: perturbs every parameter
// entry in place. fwd must recompute the loss from the model's current
// parameter values.
inline Result check_params(const std::function<double()>& eval_loss,
                           const std::function<void(magfuse::Graph&)>& run_backward,
                           std::vector<std::pair<std::string, magfuse::Tensor>>& params,
                           double h = 1e-5, double denom_floor = 1e-3) {
  using namespace magfuse;
  Graph g;
  run_backward(g);

  Result res;
  for (auto& [name, p] : params) {
    const auto analytic = p.grad();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double a = analytic.empty() ? 0.0 : analytic[i];
      const double orig = p.data()[i];
      p.mutable_data()[i] = orig + h;
      const double up = eval_loss();
      p.mutable_data()[i] = orig - h;
      const double down = eval_loss();
      p.mutable_data()[i] = orig;

      const double fd = (up - down) / (2.0 * h);
      const double err =
          std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), denom_floor});
      if (err > res.max_err) {
        res.max_err = err;
        res.where = name + "#" + std::to_string(i);
      }
      ++res.n_checked;
    }
  }
  return res;
}

inline magfuse::Tensor random_tensor(magfuse::Shape shape, magfuse::Rng& rng,
                                     double lo = -1.0, double hi = 1.0) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> data(n);
  for (auto& v : data) v = rng.uniform(lo, hi);
  return magfuse::Tensor::from_data(std::move(shape), std::move(data));
}

}  // namespace gradcheck
