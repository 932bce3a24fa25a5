#pragma once

#include <chrono>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "fairmix/config.h"
#include "fairmix/controller.h"
#include "fairmix/diffusion.h"
#include "fairmix/eval.h"
#include "fairmix/guidance.h"

namespace fairmix {

struct GenerationResult {
  Vector x0;
  Discrimination label;
};

// One generation for a decided plan. Implementations must be deterministic
// in (cond, plan, seed).
class Generator {
 public:
  virtual ~Generator() = default;
  virtual GenerationResult generate(const Condition& cond,
                                    const GuidancePlan& plan,
                                    std::uint64_t seed,
                                    std::vector<StepDiagnostics>* diagnostics) = 0;
};

// Ancestral sampling with the combined guided noise as the hook.
class DiffusionGenerator final : public Generator {
 public:
  DiffusionGenerator(const MixtureWorld& world, NoiseSchedule schedule,
                     GuidanceConfig config);

  GenerationResult generate(const Condition& cond, const GuidancePlan& plan,
                            std::uint64_t seed,
                            std::vector<StepDiagnostics>* diagnostics) override;

  const NoiseSchedule& schedule() const { return schedule_; }
  const GuidanceConfig& config() const { return config_; }

 private:
  const MixtureWorld& world_;
  NoiseSchedule schedule_;
  GuidanceConfig config_;
  AnalyticPredictor predictor_;
};

// Test double: the outcome always equals the plan's targets (constrained or
// first values for attributes the plan leaves alone). x0 is the mean of the
// matching component.
class PerfectEnforcer final : public Generator {
 public:
  explicit PerfectEnforcer(const MixtureWorld& world) : world_(world) {}
  GenerationResult generate(const Condition& cond, const GuidancePlan& plan,
                            std::uint64_t seed,
                            std::vector<StepDiagnostics>* diagnostics) override;

 private:
  const MixtureWorld& world_;
};

std::unique_ptr<Generator> make_generator(const ExperimentSpec& spec,
                                          const GuidanceConfig& guidance);

struct SampleRow {
  std::string prompt_id;
  std::string concept_name;
  std::size_t prompt_index = 0;
  std::size_t instance = 0;
  std::size_t sample = 0;
  std::uint64_t seed = 0;
  Vector x0;
  AttributeAssignment attributes;
  std::size_t map_concept = 0;
};

struct DecisionRow {
  std::string prompt_id;
  std::size_t sample = 0;
  GuidancePlan plan;
  long matched_cluster = -1;
};

struct DiagnosticRow {
  std::string prompt_id;
  std::size_t sample = 0;
  StepDiagnostics step;
};

struct PromptFailure {
  std::size_t prompt_index = 0;
  std::string message;
};

// Everything one arm (one policy, one target, one guidance config) produced.
struct ArmResult {
  std::vector<SampleRow> samples;
  std::vector<DecisionRow> decisions;
  std::vector<DiagnosticRow> diagnostics;
  std::vector<PromptFailure> failures;
  BiasReport report;
  std::vector<std::vector<AttributeAssignment>> outcomes;  // per instance
  std::vector<std::string> prompt_ids;
  std::vector<std::size_t> decided_counts;  // target picks, first attribute
};

struct ArmSettings {
  std::string policy;  // vanilla | deficit | probabilistic | static
  TargetDistribution target;
  GuidanceConfig guidance;
};

ArmSettings default_arm(const ExperimentSpec& spec);

MemoryModule fresh_memory(const ExperimentSpec& spec);

// decide -> generate -> discriminate -> record, for every prompt instance
// and sample, in order. `memory` is updated in place.
ArmResult run_arm(const ExperimentSpec& spec, const ArmSettings& arm,
                  Generator& generator, MemoryModule& memory);

struct RunManifest {
  std::string config_digest;
  std::uint64_t seed = 0;
  std::vector<std::string> files;
  std::vector<std::pair<std::string, double>> timings;  // seconds
};

struct CommandResult {
  int exit_code = 0;
  RunManifest manifest;
};

// CSV writers. Each starts with '#' header comments carrying the schema
// version and config digest.
void write_samples_csv(std::ostream& out, const ArmResult& arm,
                       const MixtureWorld& world, const std::string& digest,
                       std::uint64_t seed);
void write_decisions_csv(std::ostream& out, const ArmResult& arm,
                         const AttributeSchema& schema,
                         const std::string& digest);
void write_diagnostics_csv(std::ostream& out, const ArmResult& arm,
                           const std::string& digest);
void write_memory_csv(std::ostream& out, const MemoryModule& memory,
                      const AttributeSchema& schema);

// Parsed back from samples.csv for re-scoring and rendering.
struct ParsedSamples {
  std::vector<std::string> prompt_ids;  // per row
  std::vector<Vector> points;
  std::vector<AttributeAssignment> attributes;
};
ParsedSamples read_samples_csv(std::istream& in, const MixtureWorld& world);

// Commands. Each writes its artifacts under out_dir; timings go to a
// separate timings.json so every other artifact is reproducible byte for
// byte.
CommandResult run_generate(const ExperimentSpec& spec, const std::string& out_dir);
CommandResult run_sweep(const ExperimentSpec& spec, const std::string& out_dir);
CommandResult run_window_ablation(const ExperimentSpec& spec,
                                  const std::string& out_dir);

struct SweepRow {
  std::string policy;
  double proportion = 0.0;
  double bias = 0.0;
  double quality = 0.0;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  // per policy: (mean B, population std of B, mean Q)
  std::vector<std::tuple<std::string, double, double, double>> summary;
};

SweepTable sweep_table(const ExperimentSpec& spec,
                       std::vector<ArmResult>* arms = nullptr);

struct AblationRow {
  std::string label;
  double lo = 0.0;
  double hi = 0.0;
  double bias = 0.0;
  double quality = 0.0;
};

std::vector<AblationRow> ablation_table(const ExperimentSpec& spec,
                                        std::vector<ArmResult>* arms = nullptr);

// SVG scatter of x0 coloured by the discriminated value of `attribute`,
// component means drawn as crosses. Requires a 2-D world.
std::string render_scatter(const std::vector<Vector>& points,
                           const std::vector<AttributeAssignment>& labels,
                           const MixtureWorld& world, std::size_t attribute = 0);

double mean_of(const std::vector<double>& v);
double population_std(const std::vector<double>& v);

}  // namespace fairmix
