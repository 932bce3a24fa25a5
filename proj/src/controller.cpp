#include "fairmix/controller.h"

#include <cmath>
#include <limits>

namespace fairmix {

MemoryModule::MemoryModule(const AttributeSchema& schema, std::size_t budget,
                           double tau)
    : budget_(budget), tau_(tau), schema_hash_(schema.hash()) {
  if (budget_ < 1) throw ConfigError("memory budget must be positive");
  if (!(tau_ > 0.0)) throw ConfigError("memory threshold tau must be positive");
  for (const auto& attr : schema.attributes())
    value_counts_.push_back(attr.values.size());
}

void MemoryModule::check_dimension(const Vector& embedding) const {
  if (!clusters_.empty() && clusters_.front().centroid.size() != embedding.size())
    throw MemoryError("embedding dimension " + std::to_string(embedding.size()) +
                      " does not match memory dimension " +
                      std::to_string(clusters_.front().centroid.size()));
}

std::optional<std::size_t> MemoryModule::lookup(const Vector& embedding) const {
  check_dimension(embedding);
  std::optional<std::size_t> best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < clusters_.size(); ++i) {
    const double dist = (clusters_[i].centroid - embedding).norm();
    if (dist < best_dist) {
      best_dist = dist;
      best = i;
    }
  }
  if (best && best_dist < tau_) return best;
  return std::nullopt;
}

std::vector<std::vector<std::uint64_t>> MemoryModule::counts_for(
    const Vector& embedding) const {
  if (auto hit = lookup(embedding)) return clusters_[*hit].counts;
  std::vector<std::vector<std::uint64_t>> zeros;
  for (std::size_t n : value_counts_) zeros.emplace_back(n, 0);
  return zeros;
}

void MemoryModule::record(const Vector& embedding,
                          const AttributeAssignment& outcome) {
  if (outcome.size() != value_counts_.size())
    throw MemoryError("outcome must assign every attribute");
  for (std::size_t a = 0; a < outcome.size(); ++a)
    if (outcome[a] >= value_counts_[a])
      throw MemoryError("outcome value out of range");
  if (!embedding.allFinite()) throw MemoryError("embedding is not finite");

  if (auto hit = lookup(embedding)) {
    Cluster& c = clusters_[*hit];
    c.total += 1;
    c.centroid += (embedding - c.centroid) / static_cast<double>(c.total);
    for (std::size_t a = 0; a < outcome.size(); ++a) c.counts[a][outcome[a]] += 1;
    return;
  }
  if (clusters_.size() >= budget_) {
    if (budget_ == 1) {
      // Nothing to merge with: the single slot is recycled into the new
      // cluster's neighbourhood by merging the newcomer into it.
      Cluster& c = clusters_.front();
      c.total += 1;
      c.centroid += (embedding - c.centroid) / static_cast<double>(c.total);
      for (std::size_t a = 0; a < outcome.size(); ++a)
        c.counts[a][outcome[a]] += 1;
      return;
    }
    consolidate();
  }
  Cluster fresh;
  fresh.centroid = embedding;
  fresh.total = 1;
  for (std::size_t a = 0; a < value_counts_.size(); ++a) {
    fresh.counts.emplace_back(value_counts_[a], 0);
    fresh.counts[a][outcome[a]] = 1;
  }
  clusters_.push_back(std::move(fresh));
}

void MemoryModule::consolidate() {
  if (clusters_.size() < 2)
    throw MemoryError("consolidation needs at least two clusters");
  std::size_t bi = 0, bj = 1;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < clusters_.size(); ++i)
    for (std::size_t j = i + 1; j < clusters_.size(); ++j) {
      const double d = (clusters_[i].centroid - clusters_[j].centroid).norm();
      if (d < best) {
        best = d;
        bi = i;
        bj = j;
      }
    }
  Cluster& keep = clusters_[bi];
  const Cluster& gone = clusters_[bj];
  const double wi = static_cast<double>(keep.total);
  const double wj = static_cast<double>(gone.total);
  if (wi + wj > 0.0)
    keep.centroid = (wi * keep.centroid + wj * gone.centroid) / (wi + wj);
  else
    keep.centroid = 0.5 * (keep.centroid + gone.centroid);
  keep.total += gone.total;
  for (std::size_t a = 0; a < keep.counts.size(); ++a)
    for (std::size_t v = 0; v < keep.counts[a].size(); ++v)
      keep.counts[a][v] += gone.counts[a][v];
  clusters_.erase(clusters_.begin() + static_cast<std::ptrdiff_t>(bj));
}

std::uint64_t MemoryModule::total_recorded() const {
  std::uint64_t n = 0;
  for (const auto& c : clusters_) n += c.total;
  return n;
}

bool MemoryModule::operator==(const MemoryModule& other) const {
  return budget_ == other.budget_ && tau_ == other.tau_ &&
         schema_hash_ == other.schema_hash_ &&
         value_counts_ == other.value_counts_ && clusters_ == other.clusters_;
}

double default_tau(const MixtureWorld& world) {
  const double d = world.min_concept_distance();
  return std::isfinite(d) && d > 0.0 ? 0.5 * d
                                     : std::numeric_limits<double>::infinity();
}

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::deficit: return "deficit";
    case PolicyKind::probabilistic: return "probabilistic";
    case PolicyKind::fixed: return "static";
  }
  return "?";
}

PolicyKind parse_policy_kind(std::string_view name) {
  if (name == "deficit") return PolicyKind::deficit;
  if (name == "probabilistic") return PolicyKind::probabilistic;
  if (name == "static") return PolicyKind::fixed;
  throw ConfigError("unknown policy '" + std::string(name) + "'");
}

IndicatorPolicy IndicatorPolicy::probabilistic(std::uint64_t seed) {
  IndicatorPolicy p;
  p.kind = PolicyKind::probabilistic;
  p.rng.seed(seed);
  return p;
}

IndicatorPolicy IndicatorPolicy::fixed(GuidancePlan pair) {
  IndicatorPolicy p;
  p.kind = PolicyKind::fixed;
  p.static_pair = std::move(pair);
  return p;
}

void IndicatorPolicy::validate(const AttributeSchema& schema) const {
  if ((kind == PolicyKind::fixed) != static_pair.has_value())
    throw ConfigError("a static pair is required for, and only for, the static policy");
  if (static_pair) validate_plan(schema, *static_pair);
}

GuidancePlan deficit_plan(const std::vector<std::vector<std::uint64_t>>& counts,
                          const AttributeSchema& schema,
                          const TargetDistribution& target) {
  GuidancePlan plan;
  for (std::size_t a = 0; a < schema.size(); ++a) {
    const auto& row = counts.at(a);
    std::uint64_t total = 0;
    for (auto c : row) total += c;
    const std::size_t n = schema[a].values.size();
    std::vector<double> deficit(n);
    for (std::size_t v = 0; v < n; ++v) {
      const double observed =
          total == 0 ? 0.0
                     : static_cast<double>(row[v]) / static_cast<double>(total);
      deficit[v] = target(a, v) - observed;
    }
    std::size_t tgt = 0;
    for (std::size_t v = 1; v < n; ++v)
      if (deficit[v] > deficit[tgt]) tgt = v;
    // Largest surplus among the remaining values.
    std::size_t ref = tgt == 0 ? 1 : 0;
    for (std::size_t v = 0; v < n; ++v)
      if (v != tgt && -deficit[v] > -deficit[ref]) ref = v;
    plan.directives.push_back({a, tgt, ref, +1});
  }
  return plan;
}

GuidancePlan decide(const MemoryModule& memory, const Condition& cond,
                    const AttributeSchema& schema,
                    const TargetDistribution& target, IndicatorPolicy& policy) {
  if (target.size() != schema.size())
    throw ConfigError("target distribution must cover every attribute");
  switch (policy.kind) {
    case PolicyKind::deficit:
      return deficit_plan(memory.counts_for(cond.embedding), schema, target);
    case PolicyKind::probabilistic: {
      GuidancePlan plan;
      for (std::size_t a = 0; a < schema.size(); ++a) {
        const auto& p = target.attribute(a);
        std::discrete_distribution<std::size_t> pick(p.begin(), p.end());
        const std::size_t tgt = pick(policy.rng);
        std::uniform_int_distribution<std::size_t> other(0, p.size() - 2);
        std::size_t ref = other(policy.rng);
        if (ref >= tgt) ++ref;
        plan.directives.push_back({a, tgt, ref, +1});
      }
      return plan;
    }
    case PolicyKind::fixed:
      if (!policy.static_pair)
        throw ConfigError("static policy has no configured pair");
      return *policy.static_pair;
  }
  return {};
}

}  // namespace fairmix
