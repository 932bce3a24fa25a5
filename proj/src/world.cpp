#include "fairmix/world.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <set>
#include <sstream>

namespace fairmix {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string format_double(double v) {
  char buf[32];
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

AttributeSchema::AttributeSchema(std::vector<Attribute> attributes)
    : attributes_(std::move(attributes)) {
  std::set<std::string> names;
  for (const auto& attr : attributes_) {
    if (attr.name.empty()) throw ConfigError("attribute with empty name");
    if (!names.insert(attr.name).second)
      throw ConfigError("duplicate attribute '" + attr.name + "'");
    if (attr.values.size() < 2)
      throw ConfigError("attribute '" + attr.name +
                        "' needs at least 2 values");
    std::set<std::string> values;
    for (const auto& v : attr.values) {
      if (v.empty())
        throw ConfigError("attribute '" + attr.name + "' has an empty value");
      if (!values.insert(v).second)
        throw ConfigError("duplicate value '" + v + "' in attribute '" +
                          attr.name + "'");
    }
  }
}

std::optional<std::size_t> AttributeSchema::find(std::string_view name) const {
  for (std::size_t i = 0; i < attributes_.size(); ++i)
    if (attributes_[i].name == name) return i;
  return std::nullopt;
}

std::optional<std::size_t> AttributeSchema::find_value(
    std::size_t attribute, std::string_view value) const {
  const auto& values = attributes_.at(attribute).values;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] == value) return i;
  return std::nullopt;
}

std::size_t AttributeSchema::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw ConfigError("unknown attribute '" + std::string(name) + "'");
}

std::size_t AttributeSchema::value_index(std::size_t attribute,
                                         std::string_view value) const {
  if (auto i = find_value(attribute, value)) return *i;
  throw ConfigError("attribute '" + attributes_.at(attribute).name +
                    "' has no value '" + std::string(value) + "'");
}

std::uint64_t AttributeSchema::hash() const {
  std::uint64_t h = fnv1a("schema-v1");
  for (const auto& attr : attributes_) {
    h = fnv1a(attr.name, h);
    h = fnv1a("=", h);
    for (const auto& v : attr.values) {
      h = fnv1a(v, h);
      h = fnv1a(",", h);
    }
    h = fnv1a(";", h);
  }
  return h;
}

MixtureWorld::MixtureWorld(int dimension, AttributeSchema schema,
                           std::vector<std::string> concepts,
                           std::vector<Component> components)
    : dimension_(dimension),
      schema_(std::move(schema)),
      concepts_(std::move(concepts)),
      components_(std::move(components)) {
  if (dimension_ < 1) throw ConfigError("dimension must be positive");
  if (concepts_.empty()) throw ConfigError("world declares no concepts");
  std::set<std::string> seen;
  for (const auto& c : concepts_)
    if (!seen.insert(c).second)
      throw ConfigError("duplicate concept '" + c + "'");
  if (components_.empty()) throw ConfigError("world declares no components");

  double total = 0.0;
  for (std::size_t k = 0; k < components_.size(); ++k) {
    auto& comp = components_[k];
    const std::string where = "component " + std::to_string(k);
    if (comp.mean.size() != dimension_)
      throw ConfigError(where + ": mean has wrong dimension");
    if (!comp.mean.allFinite())
      throw ConfigError(where + ": mean is not finite");
    if (!(comp.weight > 0.0) || !std::isfinite(comp.weight))
      throw ConfigError(where + ": weight must be positive");
    if (comp.concept_id >= concepts_.size())
      throw ConfigError(where + ": unknown concept");
    if (comp.tags.size() != schema_.size())
      throw ConfigError(where + ": needs exactly one tag per attribute");
    for (std::size_t a = 0; a < schema_.size(); ++a)
      if (comp.tags[a] >= schema_[a].values.size())
        throw ConfigError(where + ": tag out of range for attribute '" +
                          schema_[a].name + "'");
    if (comp.covariance.size() == 0) {
      comp.covariance = Matrix::Identity(dimension_, dimension_);
      comp.identity_covariance = true;
    } else {
      if (comp.covariance.rows() != dimension_ ||
          comp.covariance.cols() != dimension_)
        throw ConfigError(where + ": covariance has wrong shape");
      if (!comp.covariance.allFinite())
        throw ConfigError(where + ": covariance is not finite");
      if (!comp.covariance.isApprox(comp.covariance.transpose(), 1e-12))
        throw ConfigError(where + ": covariance is not symmetric");
      Eigen::LLT<Matrix> llt(comp.covariance);
      if (llt.info() != Eigen::Success)
        throw ConfigError(where + ": covariance is not positive definite");
      comp.identity_covariance =
          comp.covariance == Matrix::Identity(dimension_, dimension_);
    }
    total += comp.weight;
  }
  for (auto& comp : components_) comp.weight /= total;

  for (std::size_t c = 0; c < concepts_.size(); ++c) {
    bool any = false;
    for (const auto& comp : components_) any = any || comp.concept_id == c;
    if (!any)
      throw ConfigError("concept '" + concepts_[c] + "' has no components");
    for (std::size_t a = 0; a < schema_.size(); ++a) {
      for (std::size_t v = 0; v < schema_[a].values.size(); ++v) {
        bool covered = false;
        for (const auto& comp : components_)
          covered = covered || (comp.concept_id == c && comp.tags[a] == v);
        if (!covered)
          throw ConfigError("concept '" + concepts_[c] + "' has no component with " +
                            schema_[a].name + "=" + schema_[a].values[v] +
                            "; attribute control would be infeasible");
      }
    }
  }
}

std::optional<std::size_t> MixtureWorld::find_concept(
    std::string_view name) const {
  for (std::size_t i = 0; i < concepts_.size(); ++i)
    if (concepts_[i] == name) return i;
  return std::nullopt;
}

std::size_t MixtureWorld::concept_index(std::string_view name) const {
  if (auto i = find_concept(name)) return *i;
  throw ConfigError("unknown concept '" + std::string(name) + "'");
}

Vector MixtureWorld::concept_centroid(std::size_t concept_id) const {
  Vector sum = Vector::Zero(dimension_);
  double mass = 0.0;
  for (const auto& comp : components_) {
    if (comp.concept_id != concept_id) continue;
    sum += comp.weight * comp.mean;
    mass += comp.weight;
  }
  return sum / mass;
}

double MixtureWorld::min_concept_distance() const {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < concepts_.size(); ++a)
    for (std::size_t b = a + 1; b < concepts_.size(); ++b)
      best = std::min(best,
                      (concept_centroid(a) - concept_centroid(b)).norm());
  return best;
}

Condition MixtureWorld::make_condition(
    std::string_view concept_id,
    const std::map<std::string, std::string>& constraints,
    std::optional<Vector> embedding) const {
  Condition cond;
  cond.concept_id = concept_index(concept_id);
  for (const auto& [attr, value] : constraints) {
    const std::size_t a = schema_.index_of(attr);
    cond.constraints[a] = schema_.value_index(a, value);
  }
  cond.embedding = embedding ? std::move(*embedding)
                             : concept_centroid(cond.concept_id);
  check_condition(cond);
  return cond;
}

void MixtureWorld::check_condition(const Condition& cond) const {
  if (cond.concept_id >= concepts_.size())
    throw ConfigError("condition names an unknown concept");
  for (const auto& [a, v] : cond.constraints) {
    if (a >= schema_.size())
      throw ConfigError("condition constrains an unknown attribute");
    if (v >= schema_[a].values.size())
      throw ConfigError("condition uses an unknown value for attribute '" +
                        schema_[a].name + "'");
  }
  if (!cond.embedding.allFinite())
    throw ConfigError("condition embedding is not finite");
}

std::string MixtureWorld::describe(const Condition& cond) const {
  std::ostringstream out;
  out << concepts_.at(cond.concept_id);
  for (const auto& [a, v] : cond.constraints)
    out << " " << schema_[a].name << "=" << schema_[a].values[v];
  return out.str();
}

std::vector<WeightedComponent> conditional_components(const MixtureWorld& world,
                                                      const Condition& cond) {
  world.check_condition(cond);
  // Apply constraints one at a time so the error can name the one that
  // empties the subset.
  std::vector<std::size_t> subset;
  const auto& comps = world.components();
  for (std::size_t k = 0; k < comps.size(); ++k)
    if (comps[k].concept_id == cond.concept_id) subset.push_back(k);
  for (const auto& [a, v] : cond.constraints) {
    std::vector<std::size_t> kept;
    for (std::size_t k : subset)
      if (comps[k].tags[a] == v) kept.push_back(k);
    if (kept.empty())
      throw InfeasibleCondition(
          "infeasible condition '" + world.describe(cond) + "': no component satisfies " +
          world.schema()[a].name + "=" + world.schema()[a].values[v]);
    subset = std::move(kept);
  }
  double total = 0.0;
  for (std::size_t k : subset) total += comps[k].weight;
  std::vector<WeightedComponent> out;
  out.reserve(subset.size());
  for (std::size_t k : subset) out.push_back({k, comps[k].weight / total});
  return out;
}

Vector embed_condition(const MixtureWorld& world, std::string_view concept_id,
                       std::uint64_t jitter_seed, double jitter_scale) {
  if (!(jitter_scale >= 0.0) || !std::isfinite(jitter_scale))
    throw ConfigError("jitter scale must be a nonnegative finite number");
  const std::size_t c = world.concept_index(concept_id);
  Vector e = world.concept_centroid(c);
  if (jitter_scale > 0.0) {
    Rng rng(derive_seed(jitter_seed, fnv1a(concept_id)));
    e += jitter_scale * standard_normal(rng, world.dimension());
  }
  return e;
}

TargetDistribution::TargetDistribution(
    const AttributeSchema& schema, std::vector<std::vector<double>> proportions)
    : proportions_(std::move(proportions)) {
  if (proportions_.size() != schema.size())
    throw ConfigError("target distribution must cover every attribute");
  for (std::size_t a = 0; a < schema.size(); ++a) {
    const auto& p = proportions_[a];
    if (p.size() != schema[a].values.size())
      throw ConfigError("target for '" + schema[a].name +
                        "' must list every value");
    double sum = 0.0;
    for (double x : p) {
      if (!(x >= 0.0) || !std::isfinite(x))
        throw ConfigError("target for '" + schema[a].name +
                          "' has a negative or non-finite proportion");
      sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw ConfigError("target for '" + schema[a].name +
                        "' does not sum to 1");
  }
}

TargetDistribution TargetDistribution::uniform(const AttributeSchema& schema) {
  std::vector<std::vector<double>> p;
  for (const auto& attr : schema.attributes())
    p.emplace_back(attr.values.size(), 1.0 / attr.values.size());
  return TargetDistribution(schema, std::move(p));
}

TargetDistribution TargetDistribution::with_proportion(
    const AttributeSchema& schema, std::size_t attribute, std::size_t value,
    double p) {
  if (!(p >= 0.0 && p <= 1.0))
    throw ConfigError("target proportion must lie in [0, 1]");
  std::vector<std::vector<double>> props;
  for (std::size_t a = 0; a < schema.size(); ++a) {
    const std::size_t n = schema[a].values.size();
    if (a != attribute) {
      props.emplace_back(n, 1.0 / n);
      continue;
    }
    std::vector<double> row(n, (1.0 - p) / static_cast<double>(n - 1));
    row.at(value) = p;
    props.push_back(std::move(row));
  }
  return TargetDistribution(schema, std::move(props));
}

}  // namespace fairmix
