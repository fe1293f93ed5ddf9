#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "nlogic/errors.hpp"
#include "nlogic/tape.hpp"

namespace nlogic {

// Trainable state lives outside any tape: per batch the values are copied
// into tape leaves, gradients flow back into `grad`, and Adam updates
// `value` in place. Frozen entries (trainable=false) are skipped by the
// optimizer but still bind as leaves.
struct Param {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> m;
  std::vector<double> v;
  bool trainable = true;
};

class ParamStore {
 public:
  int add(std::string name, Shape shape, bool trainable = true) {
    Param p;
    p.name = std::move(name);
    p.shape = shape;
    size_t n = static_cast<size_t>(shape.size());
    p.value.assign(n, 0.0);
    p.grad.assign(n, 0.0);
    p.m.assign(n, 0.0);
    p.v.assign(n, 0.0);
    p.trainable = trainable;
    items_.push_back(std::move(p));
    return static_cast<int>(items_.size() - 1);
  }

  Param& operator[](int id) { return items_[static_cast<size_t>(id)]; }
  const Param& operator[](int id) const { return items_[static_cast<size_t>(id)]; }
  int count() const { return static_cast<int>(items_.size()); }

  void zero_grad() {
    for (auto& p : items_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
  }

  std::vector<Param>& items() { return items_; }
  const std::vector<Param>& items() const { return items_; }

 private:
  std::vector<Param> items_;
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;  // completed steps
};

// One optimizer step over every trainable parameter, standard bias-corrected
// Adam. Dense update: moment decay applies to rows whose gradient is zero
// this step as well.
inline void adam_step(ParamStore& ps, AdamState& st, double lr) {
  st.t += 1;
  double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (auto& p : ps.items()) {
    if (!p.trainable) continue;
    size_t n = p.value.size();
    for (size_t i = 0; i < n; ++i) {
      double g = p.grad[i];
      p.m[i] = st.beta1 * p.m[i] + (1.0 - st.beta1) * g;
      p.v[i] = st.beta2 * p.v[i] + (1.0 - st.beta2) * g * g;
      double mhat = p.m[i] / bc1;
      double vhat = p.v[i] / bc2;
      p.value[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
}

}  // namespace nlogic
