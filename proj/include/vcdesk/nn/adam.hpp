// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VCDESK_NN_ADAM_HPP_
#define VCDESK_NN_ADAM_HPP_

#include <cmath>
#include <functional>
#include <string>

#include "vcdesk/nn/tensor.hpp"

namespace vcdesk::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction over a ParamStore. Keeps its own step counter;
// per-tensor first/second moments live on the Param.
template <class T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  // Applies one update from the accumulated gradients, then leaves them
  // untouched (callers zero grads when starting the next batch). If any
  // trainable gradient is non-finite the whole step is skipped and false is
  // returned. `filter` limits the update to matching parameter names
  // (nullptr = all).
  bool Step(ParamStore<T>& store,
            const std::function<bool(const std::string&)>& filter = nullptr) {
    for (auto& p : store) {
      if (!p.trainable) continue;
      if (filter && !filter(p.name)) continue;
      if (!p.grad.all_finite()) return false;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& p : store) {
      if (!p.trainable) continue;
      if (filter && !filter(p.name)) continue;
      if (p.adam_m.empty()) {
        p.adam_m = Mat<T>::Zeros(p.value.rows, p.value.cols);
        p.adam_v = Mat<T>::Zeros(p.value.rows, p.value.cols);
      }
      for (int64_t i = 0; i < p.value.numel(); ++i) {
        const double g = static_cast<double>(p.grad.d[i]);
        double m = cfg_.beta1 * static_cast<double>(p.adam_m.d[i]) +
                   (1.0 - cfg_.beta1) * g;
        double v = cfg_.beta2 * static_cast<double>(p.adam_v.d[i]) +
                   (1.0 - cfg_.beta2) * g * g;
        p.adam_m.d[i] = static_cast<T>(m);
        p.adam_v.d[i] = static_cast<T>(v);
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        p.value.d[i] -=
            static_cast<T>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
    return true;
  }

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  int64_t step_count() const { return t_; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
};

}  // namespace vcdesk::nn

#endif  // VCDESK_NN_ADAM_HPP_
