#pragma once

#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "fairmix/guidance.h"
#include "fairmix/world.h"

namespace fairmix {

struct Cluster {
  Vector centroid;
  std::uint64_t total = 0;
  // counts[attribute][value]; each row sums to total.
  std::vector<std::vector<std::uint64_t>> counts;

  bool operator==(const Cluster& other) const {
    return centroid.size() == other.centroid.size() &&
           centroid == other.centroid && total == other.total &&
           counts == other.counts;
  }
};

class MemoryError : public Error {
 public:
  using Error::Error;
};

// Budgeted clustered memory of generation statistics keyed by prompt
// embedding. At most `budget` clusters exist at any time.
class MemoryModule {
 public:
  MemoryModule(const AttributeSchema& schema, std::size_t budget, double tau);

  std::size_t budget() const { return budget_; }
  double tau() const { return tau_; }
  const std::vector<Cluster>& clusters() const { return clusters_; }
  std::size_t size() const { return clusters_.size(); }
  std::uint64_t schema_hash() const { return schema_hash_; }
  const std::vector<std::size_t>& value_counts() const { return value_counts_; }

  // Nearest cluster by l2 distance if that distance is < tau; the lowest
  // index wins ties.
  std::optional<std::size_t> lookup(const Vector& embedding) const;

  // Observed counts for a prompt: the matched cluster's, or all zero.
  std::vector<std::vector<std::uint64_t>> counts_for(
      const Vector& embedding) const;

  void record(const Vector& embedding, const AttributeAssignment& outcome);

  // Merge the two clusters with the closest centroids. Throws MemoryError
  // when fewer than two clusters exist.
  void consolidate();

  std::uint64_t total_recorded() const;

  bool operator==(const MemoryModule& other) const;

  // Persistence lives in memory_file.cpp.
  std::string serialize() const;
  static MemoryModule deserialize(std::string_view text,
                                  const AttributeSchema& schema);
  void snapshot(const std::string& path) const;
  static MemoryModule restore(const std::string& path,
                              const AttributeSchema& schema);

 private:
  MemoryModule() = default;
  void check_dimension(const Vector& embedding) const;

  std::size_t budget_ = 1;
  double tau_ = 1.0;
  std::uint64_t schema_hash_ = 0;
  std::vector<std::size_t> value_counts_;
  std::vector<Cluster> clusters_;
};

// Default match threshold: half the smallest distance between concept
// centroids, or infinity when the world has a single concept.
double default_tau(const MixtureWorld& world);

enum class PolicyKind { deficit, probabilistic, fixed };

std::string to_string(PolicyKind kind);
PolicyKind parse_policy_kind(std::string_view name);

struct IndicatorPolicy {
  PolicyKind kind = PolicyKind::deficit;
  // kind == fixed only: one directive per attribute.
  std::optional<GuidancePlan> static_pair;
  Rng rng{0};

  static IndicatorPolicy deficit() { return {}; }
  static IndicatorPolicy probabilistic(std::uint64_t seed);
  static IndicatorPolicy fixed(GuidancePlan pair);

  void validate(const AttributeSchema& schema) const;
};

// Scalar guidance decision for one generation.
GuidancePlan decide(const MemoryModule& memory, const Condition& cond,
                    const AttributeSchema& schema,
                    const TargetDistribution& target, IndicatorPolicy& policy);

// Deficit rule on raw counts; exposed for direct testing.
GuidancePlan deficit_plan(const std::vector<std::vector<std::uint64_t>>& counts,
                          const AttributeSchema& schema,
                          const TargetDistribution& target);

// Serializes decide/record on one memory shared by concurrent samplers.
class MemoryService {
 public:
  explicit MemoryService(MemoryModule memory) : memory_(std::move(memory)) {}

  GuidancePlan decide(const Condition& cond, const AttributeSchema& schema,
                      const TargetDistribution& target,
                      IndicatorPolicy& policy) {
    std::lock_guard lock(mutex_);
    return fairmix::decide(memory_, cond, schema, target, policy);
  }

  void record(const Vector& embedding, const AttributeAssignment& outcome) {
    std::lock_guard lock(mutex_);
    memory_.record(embedding, outcome);
  }

  MemoryModule copy() const {
    std::lock_guard lock(mutex_);
    return memory_;
  }

 private:
  mutable std::mutex mutex_;
  MemoryModule memory_;
};

}  // namespace fairmix
