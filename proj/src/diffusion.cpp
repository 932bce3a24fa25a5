#include "fairmix/diffusion.h"

#include <cmath>
#include <limits>
#include <string>

namespace fairmix {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Per-component log weight and score of the forward marginal at one x.
struct ComponentTerm {
  double log_weight;
  Vector score;
};

ComponentTerm marginal_term(const Component& comp, double weight,
                            const Vector& x, double alpha_bar) {
  const double root = std::sqrt(alpha_bar);
  const Vector r = x - root * comp.mean;
  const auto d = static_cast<double>(x.size());
  if (comp.identity_covariance) {
    // alpha_bar * I + (1 - alpha_bar) * I == I
    return {std::log(weight) - 0.5 * r.squaredNorm() - 0.5 * d * kLog2Pi, -r};
  }
  Matrix cov = alpha_bar * comp.covariance;
  cov.diagonal().array() += 1.0 - alpha_bar;
  Eigen::LLT<Matrix> llt(cov);
  const Vector solved = llt.solve(r);
  const double logdet =
      2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return {std::log(weight) - 0.5 * r.dot(solved) - 0.5 * logdet -
              0.5 * d * kLog2Pi,
          -solved};
}

double log_sum_exp(const std::vector<double>& v) {
  double top = -std::numeric_limits<double>::infinity();
  for (double x : v) top = std::max(top, x);
  if (!std::isfinite(top)) return top;
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - top);
  return top + std::log(sum);
}

void check_state(const NoiseSchedule& schedule, const LatentState& state) {
  if (state.t_index < 0 || state.t_index >= schedule.steps())
    throw ConfigError("step index " + std::to_string(state.t_index) +
                      " outside schedule");
}

}  // namespace

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start,
                                    double beta_end) {
  if (steps < 1) throw ConfigError("schedule needs at least one step");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw ConfigError("schedule requires 0 < beta_start <= beta_end < 1");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int t = 0; t < steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / (steps - 1);
    betas[static_cast<std::size_t>(t)] =
        beta_start + frac * (beta_end - beta_start);
  }
  return from_betas(std::move(betas));
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas,
                                        bool allow_zero) {
  if (betas.empty()) throw ConfigError("schedule needs at least one step");
  NoiseSchedule s;
  double running = 1.0;
  for (std::size_t t = 0; t < betas.size(); ++t) {
    const double b = betas[t];
    const bool ok = allow_zero ? (b >= 0.0 && b < 1.0) : (b > 0.0 && b < 1.0);
    if (!ok)
      throw ConfigError("beta[" + std::to_string(t) + "] outside (0, 1)");
    running *= 1.0 - b;
    if (!(running > 0.0 && running < 1.0))
      throw ConfigError("alpha_bar[" + std::to_string(t) +
                        "] leaves (0, 1)");
    s.alpha_bar_.push_back(running);
  }
  s.beta_ = std::move(betas);
  return s;
}

Vector analytic_epsilon(const MixtureWorld& world, const NoiseSchedule& schedule,
                        const LatentState& state, const Condition& cond) {
  check_state(schedule, state);
  if (state.x.size() != world.dimension())
    throw ConfigError("latent state has wrong dimension");
  const auto subset = conditional_components(world, cond);
  const double ab = schedule.alpha_bar(state.t_index);

  std::vector<ComponentTerm> terms;
  std::vector<double> logw;
  terms.reserve(subset.size());
  logw.reserve(subset.size());
  for (const auto& wc : subset) {
    terms.push_back(
        marginal_term(world.components()[wc.index], wc.weight, state.x, ab));
    logw.push_back(terms.back().log_weight);
  }
  const double norm = log_sum_exp(logw);
  if (!std::isfinite(norm))
    throw NumericError("mixture density underflow at step " +
                       std::to_string(state.t_index));
  Vector score = Vector::Zero(state.x.size());
  for (const auto& term : terms)
    score += std::exp(term.log_weight - norm) * term.score;
  Vector eps = -std::sqrt(1.0 - ab) * score;
  if (!eps.allFinite())
    throw NumericError("non-finite noise estimate at step " +
                       std::to_string(state.t_index));
  return eps;
}

double log_marginal_density(const MixtureWorld& world,
                            const NoiseSchedule& schedule, const Vector& x,
                            int t_index, const Condition& cond) {
  check_state(schedule, {x, t_index});
  const double ab = schedule.alpha_bar(t_index);
  std::vector<double> logw;
  for (const auto& wc : conditional_components(world, cond))
    logw.push_back(
        marginal_term(world.components()[wc.index], wc.weight, x, ab)
            .log_weight);
  return log_sum_exp(logw);
}

double log_data_density(const MixtureWorld& world, const Vector& x,
                        const Condition& cond) {
  std::vector<double> logw;
  for (const auto& wc : conditional_components(world, cond))
    logw.push_back(
        marginal_term(world.components()[wc.index], wc.weight, x, 1.0)
            .log_weight);
  return log_sum_exp(logw);
}

LatentState ancestral_step(const NoiseSchedule& schedule,
                           const LatentState& state,
                           const Vector& epsilon_hat, Rng& rng) {
  check_state(schedule, state);
  if (!epsilon_hat.allFinite())
    throw NumericError("non-finite noise estimate at step " +
                       std::to_string(state.t_index));
  const int t = state.t_index;
  const double beta = schedule.beta(t);
  const double ab = schedule.alpha_bar(t);
  LatentState next;
  next.t_index = t - 1;
  next.x = (state.x - (beta / std::sqrt(1.0 - ab)) * epsilon_hat) /
           std::sqrt(1.0 - beta);
  if (t >= 1) next.x += std::sqrt(beta) * standard_normal(rng, state.x.size());
  if (!next.x.allFinite())
    throw NumericError("non-finite latent after step " + std::to_string(t));
  return next;
}

Vector sample(const MixtureWorld& world, const NoiseSchedule& schedule,
              const Condition& cond, const NoiseHook& noise_fn, Rng& rng) {
  LatentState state{standard_normal(rng, world.dimension()),
                    schedule.steps() - 1};
  while (!state.terminal()) {
    const Vector eps = noise_fn(state, cond);
    if (eps.size() != state.x.size())
      throw ConfigError("noise hook returned a vector of wrong dimension");
    state = ancestral_step(schedule, state, eps, rng);
  }
  return state.x;
}

}  // namespace fairmix
