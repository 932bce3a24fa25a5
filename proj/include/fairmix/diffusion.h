#pragma once

#include <atomic>
#include <functional>
#include <vector>

#include "fairmix/world.h"

namespace fairmix {

// Discrete variance-preserving forward process.
class NoiseSchedule {
 public:
  static NoiseSchedule linear(int steps, double beta_start, double beta_end);

  // Arbitrary betas in (0, 1). With allow_zero, beta == 0 entries are
  // accepted (degenerate no-noise steps, used in tests); alpha_bar must
  // still stay in (0, 1) at every step.
  static NoiseSchedule from_betas(std::vector<double> betas,
                                  bool allow_zero = false);

  int steps() const { return static_cast<int>(beta_.size()); }
  double beta(int t) const { return beta_[static_cast<std::size_t>(t)]; }
  double alpha_bar(int t) const {
    return alpha_bar_[static_cast<std::size_t>(t)];
  }
  const std::vector<double>& betas() const { return beta_; }
  const std::vector<double>& alpha_bars() const { return alpha_bar_; }

 private:
  NoiseSchedule() = default;
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
};

// x_t at noise level alpha_bar[t_index]. The ancestral sampler returns
// t_index == -1 for the clean output x_0.
struct LatentState {
  Vector x;
  int t_index = 0;

  bool terminal() const { return t_index < 0; }
};

// -sqrt(1 - alpha_bar) * grad log p_t(x | cond) for the world's forward
// marginal at step t.
Vector analytic_epsilon(const MixtureWorld& world, const NoiseSchedule& schedule,
                        const LatentState& state, const Condition& cond);

// log p_t(x | cond); used by diagnostics and quality statistics.
double log_marginal_density(const MixtureWorld& world,
                            const NoiseSchedule& schedule, const Vector& x,
                            int t_index, const Condition& cond);

// log density of the clean conditional mixture p_0(x | cond).
double log_data_density(const MixtureWorld& world, const Vector& x,
                        const Condition& cond);

// One DDPM ancestral update, t_index -> t_index - 1. Adds sqrt(beta) noise
// unless this is the final step (t_index == 0).
LatentState ancestral_step(const NoiseSchedule& schedule,
                           const LatentState& state,
                           const Vector& epsilon_hat, Rng& rng);

// Noise predictor interface used by the guidance layer; the evaluation
// counter lets callers observe how many conditions were evaluated.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual Vector epsilon(const LatentState& state,
                         const Condition& cond) const = 0;
};

class AnalyticPredictor final : public NoisePredictor {
 public:
  AnalyticPredictor(const MixtureWorld& world, const NoiseSchedule& schedule)
      : world_(world), schedule_(schedule) {}

  Vector epsilon(const LatentState& state,
                 const Condition& cond) const override {
    evaluations_.fetch_add(1, std::memory_order_relaxed);
    return analytic_epsilon(world_, schedule_, state, cond);
  }

  std::uint64_t evaluations() const { return evaluations_.load(); }
  void reset_evaluations() { evaluations_.store(0); }

  const MixtureWorld& world() const { return world_; }
  const NoiseSchedule& schedule() const { return schedule_; }

 private:
  const MixtureWorld& world_;
  const NoiseSchedule& schedule_;
  mutable std::atomic<std::uint64_t> evaluations_{0};
};

using NoiseHook =
    std::function<Vector(const LatentState& state, const Condition& cond)>;

// Reverse-time ancestral sampling from x_T ~ N(0, I) down to x_0.
Vector sample(const MixtureWorld& world, const NoiseSchedule& schedule,
              const Condition& cond, const NoiseHook& noise_fn, Rng& rng);

}  // namespace fairmix
