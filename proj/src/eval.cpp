#include "fairmix/eval.h"

#include <cmath>
#include <limits>

#include "fairmix/diffusion.h"

namespace fairmix {

Discrimination discriminate(const MixtureWorld& world, const Vector& x0) {
  if (!x0.allFinite()) throw NumericError("cannot discriminate a non-finite point");
  if (x0.size() != world.dimension())
    throw ConfigError("point has wrong dimension");
  const auto& comps = world.components();
  const auto& schema = world.schema();

  std::vector<double> logp(comps.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const Component& c = comps[k];
    const Vector r = x0 - c.mean;
    double quad, logdet = 0.0;
    if (c.identity_covariance) {
      quad = r.squaredNorm();
    } else {
      Eigen::LLT<Matrix> llt(c.covariance);
      quad = r.dot(llt.solve(r));
      logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    }
    logp[k] = std::log(c.weight) - 0.5 * quad - 0.5 * logdet;
    top = std::max(top, logp[k]);
  }
  Discrimination out;
  out.component_posterior.resize(comps.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < comps.size(); ++k) {
    out.component_posterior[k] = std::exp(logp[k] - top);
    sum += out.component_posterior[k];
  }
  for (double& p : out.component_posterior) p /= sum;

  out.concept_posterior.assign(world.concepts().size(), 0.0);
  std::vector<std::vector<double>> marginal;
  for (const auto& attr : schema.attributes())
    marginal.emplace_back(attr.values.size(), 0.0);
  for (std::size_t k = 0; k < comps.size(); ++k) {
    out.concept_posterior[comps[k].concept_id] += out.component_posterior[k];
    for (std::size_t a = 0; a < schema.size(); ++a)
      marginal[a][comps[k].tags[a]] += out.component_posterior[k];
  }
  auto argmax = [](const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
      if (v[i] > v[best]) best = i;
    return best;
  };
  out.concept_id = argmax(out.concept_posterior);
  for (const auto& m : marginal) out.attributes.push_back(argmax(m));
  return out;
}

BiasScore bias_score(const std::vector<std::vector<AttributeAssignment>>& outcomes,
                     const AttributeSchema& schema,
                     const TargetDistribution& target,
                     std::vector<std::string> prompt_ids) {
  if (outcomes.empty()) throw ConfigError("bias score needs at least one prompt");
  if (target.size() != schema.size())
    throw ConfigError("target distribution must cover every attribute");
  if (!prompt_ids.empty() && prompt_ids.size() != outcomes.size())
    throw ConfigError("one prompt id per prompt");
  const std::size_t t = outcomes.front().size();
  if (t == 0) throw ConfigError("bias score needs at least one sample per prompt");

  BiasScore score;
  score.per_attribute.assign(schema.size(), 0.0);
  for (std::size_t n = 0; n < outcomes.size(); ++n) {
    const auto& samples = outcomes[n];
    if (samples.size() != t)
      throw ConfigError("ragged sample counts: prompt " + std::to_string(n) +
                        " has " + std::to_string(samples.size()) +
                        " samples, expected " + std::to_string(t));
    PromptBias pb;
    pb.prompt_id = prompt_ids.empty() ? std::to_string(n) : prompt_ids[n];
    pb.samples = t;
    for (std::size_t a = 0; a < schema.size(); ++a) {
      const std::size_t nv = schema[a].values.size();
      std::vector<std::size_t> hits(nv, 0);
      for (const auto& s : samples) {
        if (s.size() != schema.size() || s[a] >= nv)
          throw ConfigError("outcome does not match the schema");
        ++hits[s[a]];
      }
      std::vector<double> freq(nv);
      double dev = 0.0;
      for (std::size_t v = 0; v < nv; ++v) {
        freq[v] = static_cast<double>(hits[v]) / static_cast<double>(t);
        dev += std::abs(freq[v] - target(a, v));
      }
      dev /= static_cast<double>(nv);
      pb.proportions.push_back(std::move(freq));
      pb.deviation.push_back(dev);
      score.per_attribute[a] += dev;
    }
    score.prompts.push_back(std::move(pb));
  }
  double combined = 0.0;
  for (double& b : score.per_attribute) {
    b /= static_cast<double>(outcomes.size());
    combined += b;
  }
  score.combined =
      schema.empty() ? 0.0 : combined / static_cast<double>(schema.size());
  return score;
}

QualityScore quality_score(const MixtureWorld& world, const Condition& cond,
                           const std::vector<Vector>& samples) {
  if (samples.empty()) throw ConfigError("quality score needs samples");
  Condition marginal{cond.concept_id, {}, cond.embedding};
  QualityScore q;
  std::size_t hits = 0;
  double logsum = 0.0;
  for (const auto& x : samples) {
    hits += discriminate(world, x).concept_id == cond.concept_id;
    logsum += log_data_density(world, x, marginal);
  }
  q.q = static_cast<double>(hits) / static_cast<double>(samples.size());
  q.mean_log_density = logsum / static_cast<double>(samples.size());
  return q;
}

}  // namespace fairmix
