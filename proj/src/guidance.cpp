#include "fairmix/guidance.h"

#include <cmath>
#include <string>

namespace fairmix {

void GuidanceConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw ConfigError("gamma must lie in [0, 1]");
  if (!(window_lo >= 0.0 && window_lo < window_hi && window_hi <= 1.0))
    throw ConfigError("guidance window must satisfy 0 <= lo < hi <= 1");
  if (!(attribute_scale > 0.0) || !std::isfinite(attribute_scale))
    throw ConfigError("attribute scale must be positive");
}

void validate_plan(const AttributeSchema& schema, const GuidancePlan& plan) {
  for (const auto& d : plan.directives) {
    if (d.attribute >= schema.size())
      throw ConfigError("plan names an unknown attribute");
    const auto n = schema[d.attribute].values.size();
    if (d.target >= n || d.reference >= n)
      throw ConfigError("plan uses an unknown value for '" +
                        schema[d.attribute].name + "'");
    if (d.target == d.reference)
      throw ConfigError("plan for '" + schema[d.attribute].name +
                        "' has identical target and reference");
    if (d.scalar != 1 && d.scalar != -1)
      throw ConfigError("plan scalar must be +1 or -1");
  }
}

Condition edit_condition(const MixtureWorld& world, const Condition& cond,
                         std::size_t attribute, std::size_t value) {
  const auto& schema = world.schema();
  if (attribute >= schema.size())
    throw ConfigError("cannot edit unknown attribute");
  if (value >= schema[attribute].values.size())
    throw ConfigError("cannot edit '" + schema[attribute].name +
                      "' to an unknown value");
  Condition edited = cond;
  edited.constraints[attribute] = value;
  conditional_components(world, edited);  // feasibility
  return edited;
}

Vector adaptive_latent_direction(const NoisePredictor& predictor,
                                 const MixtureWorld& world,
                                 const LatentState& state,
                                 const Condition& cond, std::size_t attribute,
                                 std::size_t value_i, std::size_t value_j) {
  const Condition ci = edit_condition(world, cond, attribute, value_i);
  const Condition cj = edit_condition(world, cond, attribute, value_j);
  return predictor.epsilon(state, ci) - predictor.epsilon(state, cj);
}

bool in_window(const NoiseSchedule& schedule, int t_index,
               const GuidanceConfig& config) {
  const int steps = schedule.steps();
  const double progress =
      steps == 1 ? 0.0
                 : static_cast<double>(steps - 1 - t_index) / (steps - 1);
  if (progress < config.window_lo) return false;
  return progress < config.window_hi ||
         (config.window_hi == 1.0 && progress == 1.0);
}

int window_step_count(const NoiseSchedule& schedule,
                      const GuidanceConfig& config) {
  int n = 0;
  for (int t = 0; t < schedule.steps(); ++t) n += in_window(schedule, t, config);
  return n;
}

Vector combined_noise(const NoisePredictor& predictor, const MixtureWorld& world,
                      const NoiseSchedule& schedule, const LatentState& state,
                      const Condition& cond, const GuidancePlan& plan,
                      const GuidanceConfig& config,
                      StepDiagnostics* diagnostics) {
  Vector base = predictor.epsilon(state, cond);
  const bool guided = !plan.empty() && config.gamma != 1.0 &&
                      in_window(schedule, state.t_index, config);
  if (diagnostics) {
    *diagnostics = {};
    diagnostics->t_index = state.t_index;
    diagnostics->base_norm = base.norm();
  }
  if (!guided) return base;

  Vector direction = Vector::Zero(base.size());
  for (const auto& d : plan.directives)
    direction += static_cast<double>(d.scalar) *
                 adaptive_latent_direction(predictor, world, state, cond,
                                           d.attribute, d.target, d.reference);
  direction /= static_cast<double>(plan.directives.size());

  Vector out = config.gamma * base +
               (1.0 - config.gamma) * config.attribute_scale * direction;
  if (!out.allFinite())
    throw NumericError("non-finite guided noise at step " +
                       std::to_string(state.t_index));
  if (diagnostics) {
    diagnostics->guided = true;
    diagnostics->direction_norm = direction.norm();
    const double denom = diagnostics->base_norm * diagnostics->direction_norm;
    diagnostics->cosine = denom > 0.0 ? base.dot(direction) / denom : 0.0;
  }
  return out;
}

}  // namespace fairmix
