#pragma once

#include <vector>

#include "fairmix/diffusion.h"

namespace fairmix {

struct GuidanceConfig {
  double gamma = 0.7;
  double window_lo = 0.375;
  double window_hi = 0.625;
  double attribute_scale = 1.0;

  void validate() const;
};

// Which value to pull towards (target) and away from (reference) for one
// attribute. The scalar indicator is +1 for the pair as stored; -1 swaps
// the direction.
struct AttributeDirective {
  std::size_t attribute = 0;
  std::size_t target = 0;
  std::size_t reference = 0;
  int scalar = +1;

  bool operator==(const AttributeDirective&) const = default;
};

struct GuidancePlan {
  std::vector<AttributeDirective> directives;

  bool empty() const { return directives.empty(); }
  bool operator==(const GuidancePlan&) const = default;
};

void validate_plan(const AttributeSchema& schema, const GuidancePlan& plan);

// The condition with `attribute` pinned to `value`; embedding unchanged.
// Throws InfeasibleCondition when the world has no component for it.
Condition edit_condition(const MixtureWorld& world, const Condition& cond,
                         std::size_t attribute, std::size_t value);

// epsilon(x, cond + a_i) - epsilon(x, cond + a_j)
Vector adaptive_latent_direction(const NoisePredictor& predictor,
                                 const MixtureWorld& world,
                                 const LatentState& state,
                                 const Condition& cond, std::size_t attribute,
                                 std::size_t value_i, std::size_t value_j);

// Reverse progress (T-1-t)/(T-1) in [lo, hi). A window ending at 1 also
// includes the final step.
bool in_window(const NoiseSchedule& schedule, int t_index,
               const GuidanceConfig& config);
int window_step_count(const NoiseSchedule& schedule,
                      const GuidanceConfig& config);

// Per-step measurements of the attribute term against the base estimate.
struct StepDiagnostics {
  int t_index = 0;
  bool guided = false;
  double base_norm = 0.0;
  double direction_norm = 0.0;
  double cosine = 0.0;  // between base estimate and averaged direction
};

Vector combined_noise(const NoisePredictor& predictor, const MixtureWorld& world,
                      const NoiseSchedule& schedule, const LatentState& state,
                      const Condition& cond, const GuidancePlan& plan,
                      const GuidanceConfig& config,
                      StepDiagnostics* diagnostics = nullptr);

}  // namespace fairmix
