#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fairmix/world.h"

namespace fairmix {

struct Discrimination {
  AttributeAssignment attributes;          // MAP value per attribute
  std::vector<double> concept_posterior;   // indexed by concept
  std::size_t concept_id = 0;                 // MAP concept
  std::vector<double> component_posterior;
};

// Exact Bayes posterior over world components under prior weights. Ties go
// to the earlier value (or concept) in declaration order.
Discrimination discriminate(const MixtureWorld& world, const Vector& x0);

struct PromptBias {
  std::string prompt_id;
  std::size_t samples = 0;
  std::vector<std::vector<double>> proportions;  // [attribute][value]
  std::vector<double> deviation;                 // [attribute]
};

struct BiasScore {
  std::vector<double> per_attribute;
  double combined = 0.0;
  std::vector<PromptBias> prompts;
};

// Mean over prompts of |empirical frequency - target|, averaged over an
// attribute's values, then over attributes. Every prompt must carry the
// same number of samples.
BiasScore bias_score(const std::vector<std::vector<AttributeAssignment>>& outcomes,
                     const AttributeSchema& schema,
                     const TargetDistribution& target,
                     std::vector<std::string> prompt_ids = {});

struct QualityScore {
  double q = 0.0;                 // fraction whose MAP concept matches
  double mean_log_density = 0.0;  // under the concept's marginal mixture
};

QualityScore quality_score(const MixtureWorld& world, const Condition& cond,
                           const std::vector<Vector>& samples);

struct BiasReport {
  BiasScore bias;
  std::vector<std::string> prompt_concepts;  // parallel to bias.prompts
  QualityScore quality;
  std::size_t samples_per_prompt = 0;
  std::uint64_t seed = 0;
  std::string config_digest;
};

// Rows: prompt_id,concept,attribute,samples,proportions,targets,abs_deviation
// followed by a "# summary" block with metric,attribute,value rows.
void write_report_csv(std::ostream& out, const BiasReport& report,
                      const AttributeSchema& schema,
                      const TargetDistribution& target);

struct ReportSummary {
  std::vector<std::pair<std::string, double>> bias;  // attribute -> B
  double combined = 0.0;
  double q = 0.0;
  double mean_log_density = 0.0;
};

ReportSummary read_report_summary(std::istream& in);

}  // namespace fairmix
