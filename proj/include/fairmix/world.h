#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fairmix/common.h"

namespace fairmix {

struct Attribute {
  std::string name;
  std::vector<std::string> values;
};

// Ordered sensitive attributes. Value order is significant: it is the
// tie-break order everywhere a choice between values has to be made.
class AttributeSchema {
 public:
  AttributeSchema() = default;
  explicit AttributeSchema(std::vector<Attribute> attributes);

  std::size_t size() const { return attributes_.size(); }
  bool empty() const { return attributes_.empty(); }
  const Attribute& operator[](std::size_t i) const { return attributes_[i]; }
  const std::vector<Attribute>& attributes() const { return attributes_; }

  std::optional<std::size_t> find(std::string_view name) const;
  std::optional<std::size_t> find_value(std::size_t attribute,
                                        std::string_view value) const;
  std::size_t index_of(std::string_view name) const;
  std::size_t value_index(std::size_t attribute, std::string_view value) const;

  // Stable fingerprint of names and value order.
  std::uint64_t hash() const;

 private:
  std::vector<Attribute> attributes_;
};

// One value index per schema attribute, in schema order.
using AttributeAssignment = std::vector<std::size_t>;

struct Component {
  Vector mean;
  Matrix covariance;
  double weight = 1.0;
  std::size_t concept_id = 0;
  AttributeAssignment tags;
  bool identity_covariance = true;
};

// Structured prompt: a concept and optional attribute constraints.
struct Condition {
  std::size_t concept_id = 0;
  std::map<std::size_t, std::size_t> constraints;  // attribute -> value
  Vector embedding;

  bool operator==(const Condition& other) const {
    return concept_id == other.concept_id && constraints == other.constraints &&
           embedding.size() == other.embedding.size() &&
           embedding == other.embedding;
  }
};

struct WeightedComponent {
  std::size_t index;
  double weight;
};

// Labeled Gaussian mixture standing in for the data manifold. Immutable once
// constructed; the constructor validates and normalizes weights.
class MixtureWorld {
 public:
  MixtureWorld(int dimension, AttributeSchema schema,
               std::vector<std::string> concepts,
               std::vector<Component> components);

  int dimension() const { return dimension_; }
  const AttributeSchema& schema() const { return schema_; }
  const std::vector<std::string>& concepts() const { return concepts_; }
  const std::vector<Component>& components() const { return components_; }

  std::optional<std::size_t> find_concept(std::string_view name) const;
  std::size_t concept_index(std::string_view name) const;

  // Weight-averaged mean of the concept's components.
  Vector concept_centroid(std::size_t concept_id) const;
  double min_concept_distance() const;

  // Build a condition, resolving names and checking validity.
  Condition make_condition(
      std::string_view concept_id,
      const std::map<std::string, std::string>& constraints = {},
      std::optional<Vector> embedding = std::nullopt) const;

  // Throws ConfigError when the condition names an unknown attribute, value
  // or concept, or carries a non-finite embedding.
  void check_condition(const Condition& cond) const;

  std::string describe(const Condition& cond) const;

 private:
  int dimension_;
  AttributeSchema schema_;
  std::vector<std::string> concepts_;
  std::vector<Component> components_;
};

// Components matching the concept and every constraint, weights renormalized.
std::vector<WeightedComponent> conditional_components(const MixtureWorld& world,
                                                      const Condition& cond);

Vector embed_condition(const MixtureWorld& world, std::string_view concept_id,
                       std::uint64_t jitter_seed, double jitter_scale);

// Target proportions per attribute value, in schema order.
class TargetDistribution {
 public:
  TargetDistribution() = default;
  TargetDistribution(const AttributeSchema& schema,
                     std::vector<std::vector<double>> proportions);

  static TargetDistribution uniform(const AttributeSchema& schema);
  // `value` of `attribute` gets p; the other values share 1-p evenly.
  // Attributes other than `attribute` are uniform.
  static TargetDistribution with_proportion(const AttributeSchema& schema,
                                            std::size_t attribute,
                                            std::size_t value, double p);

  double operator()(std::size_t attribute, std::size_t value) const {
    return proportions_[attribute][value];
  }
  const std::vector<double>& attribute(std::size_t a) const {
    return proportions_[a];
  }
  std::size_t size() const { return proportions_.size(); }

 private:
  std::vector<std::vector<double>> proportions_;
};

// World file loader. Errors carry `<source>:<line>:` anchors.
MixtureWorld parse_world(std::string_view text,
                         const std::string& source = "<world>");
MixtureWorld load_world(const std::string& path);
std::string format_world(const MixtureWorld& world);

}  // namespace fairmix
