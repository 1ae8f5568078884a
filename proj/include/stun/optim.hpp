#ifndef STUN_OPTIM_HPP_
#define STUN_OPTIM_HPP_

#include <cmath>
#include <vector>

#include "stun/layers.hpp"

namespace stun {

// Adam with L2 weight decay folded into the gradient and a per-epoch
// multiplicative learning-rate decay: lr(e) = lr0 * decay^e. A zero learning
// rate leaves parameters untouched (decay is applied through the update, so
// it is scaled by lr as well).
class Adam {
 public:
  Adam(double lr0, double epoch_decay, double weight_decay)
      : lr0_(lr0), epoch_decay_(epoch_decay), weight_decay_(weight_decay) {}

  double lr_at(long long epoch) const {
    return lr0_ * std::pow(epoch_decay_, static_cast<double>(epoch));
  }

  void attach(const std::vector<ParamBlock*>& blocks) {
    states_.clear();
    for (const ParamBlock* b : blocks) {
      states_.push_back({std::vector<double>(b->w.size(), 0.0),
                         std::vector<double>(b->w.size(), 0.0)});
    }
    t_ = 0;
  }

  void step(const std::vector<ParamBlock*>& blocks, long long epoch) {
    ++t_;
    const double lr = lr_at(epoch);
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      ParamBlock* b = blocks[i];
      if (!b->trainable || b->buffer) continue;
      auto& [m, v] = states_[i];
      for (std::size_t k = 0; k < b->w.size(); ++k) {
        const double g = b->g[k] + weight_decay_ * b->w[k];
        m[k] = beta1_ * m[k] + (1.0 - beta1_) * g;
        v[k] = beta2_ * v[k] + (1.0 - beta2_) * g * g;
        const double mhat = m[k] / bc1;
        const double vhat = v[k] / bc2;
        b->w[k] -= lr * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  long long steps_taken() const { return t_; }

 private:
  struct State {
    std::vector<double> m, v;
  };
  double lr0_, epoch_decay_, weight_decay_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long long t_ = 0;
  std::vector<State> states_;
};

}  // namespace stun

#endif  // STUN_OPTIM_HPP_
