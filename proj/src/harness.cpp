#include "fairmix/harness.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

namespace fairmix {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kPolicyStreamSalt = 0x706f6c6963790001ULL;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

IndicatorPolicy make_policy(const ExperimentSpec& spec, const std::string& name) {
  const PolicyKind kind = parse_policy_kind(name);
  switch (kind) {
    case PolicyKind::deficit: return IndicatorPolicy::deficit();
    case PolicyKind::probabilistic:
      return IndicatorPolicy::probabilistic(derive_seed(spec.seed, kPolicyStreamSalt));
    case PolicyKind::fixed: return IndicatorPolicy::fixed(*spec.static_pair);
  }
  return {};
}

AttributeAssignment intended(const GuidancePlan& plan, const Condition& cond,
                             const AttributeAssignment& observed) {
  AttributeAssignment out = observed;
  for (const auto& d : plan.directives)
    out[d.attribute] = d.scalar > 0 ? d.target : d.reference;
  for (const auto& [a, v] : cond.constraints) {
    bool planned = false;
    for (const auto& d : plan.directives) planned = planned || d.attribute == a;
    if (!planned) out[a] = v;
  }
  return out;
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << bytes;
}

template <typename Fn>
std::string to_text(Fn&& fn) {
  std::ostringstream out;
  fn(out);
  return out.str();
}

void write_manifest(const fs::path& dir, const RunManifest& m) {
  nlohmann::json j;
  j["config_digest"] = m.config_digest;
  j["seed"] = m.seed;
  j["files"] = m.files;
  write_file(dir / "manifest.json", j.dump(2) + "\n");
  nlohmann::json t = nlohmann::json::object();
  for (const auto& [name, secs] : m.timings) t[name] = secs;
  write_file(dir / "timings.json", t.dump(2) + "\n");
}

// Writes the per-arm artifacts; returns their names relative to dir.
std::vector<std::string> write_arm(const fs::path& dir, const ExperimentSpec& spec,
                                   const ArmResult& arm, const TargetDistribution& target) {
  fs::create_directories(dir);
  const auto& world = *spec.world;
  std::vector<std::string> files;
  write_file(dir / "samples.csv", to_text([&](std::ostream& o) {
               write_samples_csv(o, arm, world, spec.digest, spec.seed);
             }));
  files.push_back("samples.csv");
  write_file(dir / "decisions.csv", to_text([&](std::ostream& o) {
               write_decisions_csv(o, arm, world.schema(), spec.digest);
             }));
  files.push_back("decisions.csv");
  write_file(dir / "report.csv", to_text([&](std::ostream& o) {
               write_report_csv(o, arm.report, world.schema(), target);
             }));
  files.push_back("report.csv");
  if (spec.diagnostics) {
    write_file(dir / "diagnostics.csv", to_text([&](std::ostream& o) {
                 write_diagnostics_csv(o, arm, spec.digest);
               }));
    files.push_back("diagnostics.csv");
  }
  return files;
}

}  // namespace

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double population_std(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

DiffusionGenerator::DiffusionGenerator(const MixtureWorld& world,
                                       NoiseSchedule schedule,
                                       GuidanceConfig config)
    : world_(world),
      schedule_(std::move(schedule)),
      config_(config),
      predictor_(world_, schedule_) {
  config_.validate();
}

GenerationResult DiffusionGenerator::generate(
    const Condition& cond, const GuidancePlan& plan, std::uint64_t seed,
    std::vector<StepDiagnostics>* diagnostics) {
  Rng rng(seed);
  const NoiseHook hook = [&](const LatentState& state, const Condition& c) {
    StepDiagnostics step;
    Vector eps = combined_noise(predictor_, world_, schedule_, state, c, plan,
                                config_, diagnostics ? &step : nullptr);
    if (diagnostics) diagnostics->push_back(step);
    return eps;
  };
  GenerationResult out;
  out.x0 = sample(world_, schedule_, cond, hook, rng);
  out.label = discriminate(world_, out.x0);
  return out;
}

GenerationResult PerfectEnforcer::generate(const Condition& cond,
                                           const GuidancePlan& plan,
                                           std::uint64_t /*seed*/,
                                           std::vector<StepDiagnostics>*) {
  const auto& schema = world_.schema();
  AttributeAssignment first(schema.size(), 0);
  const AttributeAssignment values = intended(plan, cond, first);
  GenerationResult out;
  out.x0 = world_.concept_centroid(cond.concept_id);
  for (const auto& comp : world_.components())
    if (comp.concept_id == cond.concept_id && comp.tags == values) {
      out.x0 = comp.mean;
      break;
    }
  out.label.attributes = values;
  out.label.concept_id = cond.concept_id;
  out.label.concept_posterior.assign(world_.concepts().size(), 0.0);
  out.label.concept_posterior[cond.concept_id] = 1.0;
  return out;
}

std::unique_ptr<Generator> make_generator(const ExperimentSpec& spec,
                                          const GuidanceConfig& guidance) {
  if (spec.generator == GeneratorKind::perfect)
    return std::make_unique<PerfectEnforcer>(*spec.world);
  return std::make_unique<DiffusionGenerator>(
      *spec.world,
      NoiseSchedule::linear(spec.schedule.steps, spec.schedule.beta_start,
                            spec.schedule.beta_end),
      guidance);
}

ArmSettings default_arm(const ExperimentSpec& spec) {
  return {spec.policy, spec.target, spec.guidance};
}

MemoryModule fresh_memory(const ExperimentSpec& spec) {
  return MemoryModule(spec.world->schema(), spec.memory_budget,
                      spec.tau ? *spec.tau : default_tau(*spec.world));
}

ArmResult run_arm(const ExperimentSpec& spec, const ArmSettings& arm,
                  Generator& generator, MemoryModule& memory) {
  const auto& world = *spec.world;
  const auto& schema = world.schema();
  const bool vanilla = arm.policy == "vanilla";
  IndicatorPolicy policy;
  if (!vanilla) policy = make_policy(spec, arm.policy);

  ArmResult result;
  if (!schema.empty())
    result.decided_counts.assign(schema[0].values.size(), 0);
  std::size_t quality_n = 0;
  double quality_hits = 0.0, quality_log = 0.0;

  for (std::size_t pi = 0; pi < spec.prompts.size(); ++pi) {
    const PromptSpec& ps = spec.prompts[pi];
    ArmResult local;
    local.decided_counts.assign(result.decided_counts.size(), 0);
    std::vector<Vector> points;
    const MemoryModule before = memory;
    try {
      Condition base = world.make_condition(ps.concept_name, ps.constraints);
      conditional_components(world, base);
      for (std::size_t n = 0; n < ps.count; ++n) {
        Condition cond = base;
        cond.embedding = embed_condition(world, ps.concept_name,
                                         derive_seed(ps.jitter_seed, n),
                                         spec.jitter_scale);
        const std::string id =
            "p" + std::to_string(pi) + "-" + ps.concept_name + "-" + std::to_string(n);
        std::vector<AttributeAssignment> outcomes;
        for (std::size_t s = 0; s < spec.samples_per_prompt; ++s) {
          GuidancePlan plan;
          if (!vanilla) plan = decide(memory, cond, schema, arm.target, policy);
          const auto matched = memory.lookup(cond.embedding);
          const std::uint64_t seed = derive_seed(spec.seed, pi, n, s);
          std::vector<StepDiagnostics> steps;
          GenerationResult gen = generator.generate(
              cond, plan, seed, spec.diagnostics ? &steps : nullptr);
          const AttributeAssignment recorded =
              spec.record_mode == RecordMode::intent
                  ? intended(plan, cond, gen.label.attributes)
                  : gen.label.attributes;
          memory.record(cond.embedding, recorded);

          if (!plan.empty()) ++local.decided_counts.at(plan.directives[0].target);

          local.decisions.push_back(
              {id, s, plan, matched ? static_cast<long>(*matched) : -1});
          for (const auto& step : steps) local.diagnostics.push_back({id, s, step});
          local.samples.push_back({id, ps.concept_name, pi, n, s, seed, gen.x0,
                                   gen.label.attributes, gen.label.concept_id});
          outcomes.push_back(gen.label.attributes);
          points.push_back(gen.x0);
        }
        local.outcomes.push_back(std::move(outcomes));
        local.prompt_ids.push_back(id);
      }
      const QualityScore q = quality_score(world, base, points);
      quality_hits += q.q * static_cast<double>(points.size());
      quality_log += q.mean_log_density * static_cast<double>(points.size());
      quality_n += points.size();
    } catch (const Error& e) {
      std::cerr << "prompt " << pi << " (" << ps.concept_name << ") failed: "
                << e.what() << "\n";
      result.failures.push_back({pi, e.what()});
      memory = before;
      continue;
    }
    auto append = [](auto& dst, auto& src) {
      dst.insert(dst.end(), std::make_move_iterator(src.begin()),
                 std::make_move_iterator(src.end()));
    };
    append(result.samples, local.samples);
    append(result.decisions, local.decisions);
    append(result.diagnostics, local.diagnostics);
    append(result.outcomes, local.outcomes);
    append(result.prompt_ids, local.prompt_ids);
    for (std::size_t v = 0; v < local.decided_counts.size(); ++v)
      result.decided_counts[v] += local.decided_counts[v];
    for (std::size_t n = 0; n < ps.count; ++n)
      result.report.prompt_concepts.push_back(ps.concept_name);
  }

  result.report.samples_per_prompt = spec.samples_per_prompt;
  result.report.seed = spec.seed;
  result.report.config_digest = spec.digest;
  if (!result.outcomes.empty())
    result.report.bias =
        bias_score(result.outcomes, schema, arm.target, result.prompt_ids);
  else
    result.report.bias.per_attribute.assign(schema.size(), 0.0);
  if (quality_n > 0) {
    result.report.quality.q = quality_hits / static_cast<double>(quality_n);
    result.report.quality.mean_log_density =
        quality_log / static_cast<double>(quality_n);
  }
  return result;
}

CommandResult run_generate(const ExperimentSpec& spec, const std::string& out_dir) {
  const auto start = Clock::now();
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  MemoryModule memory = !spec.memory_path.empty() && fs::exists(spec.memory_path)
                            ? MemoryModule::restore(spec.memory_path,
                                                    spec.world->schema())
                            : fresh_memory(spec);
  const ArmSettings arm = default_arm(spec);
  auto generator = make_generator(spec, arm.guidance);
  const ArmResult result = run_arm(spec, arm, *generator, memory);

  CommandResult cmd;
  cmd.exit_code = result.failures.empty() ? 0 : 1;
  cmd.manifest.config_digest = spec.digest;
  cmd.manifest.seed = spec.seed;
  cmd.manifest.files = write_arm(dir, spec, result, arm.target);
  if (spec.world->dimension() == 2) {
    std::vector<Vector> pts;
    std::vector<AttributeAssignment> labels;
    for (const auto& row : result.samples) {
      pts.push_back(row.x0);
      labels.push_back(row.attributes);
    }
    write_file(dir / "scatter.svg", render_scatter(pts, labels, *spec.world));
    cmd.manifest.files.push_back("scatter.svg");
  }
  if (!spec.memory_path.empty()) memory.snapshot(spec.memory_path);
  cmd.manifest.timings.emplace_back("generate", seconds_since(start));
  write_manifest(dir, cmd.manifest);
  return cmd;
}

SweepTable sweep_table(const ExperimentSpec& spec, std::vector<ArmResult>* arms) {
  if (!spec.sweep) throw ConfigError("config has no 'sweep' section");
  const SweepSpec& sw = *spec.sweep;
  if (sw.proportions.size() < 2)
    throw ConfigError("a sweep needs at least two target proportions");
  const auto& schema = spec.world->schema();
  const std::size_t a = schema.index_of(sw.attribute);
  const std::size_t v = schema.value_index(a, sw.value);
  auto generator = make_generator(spec, spec.guidance);

  SweepTable table;
  for (const auto& policy : sw.policies) {
    std::vector<double> bs, qs;
    for (double p : sw.proportions) {
      ArmSettings arm{policy, TargetDistribution::with_proportion(schema, a, v, p),
                      spec.guidance};
      MemoryModule memory = fresh_memory(spec);
      ArmResult r = run_arm(spec, arm, *generator, memory);
      const double b = r.report.bias.per_attribute.at(a);
      table.rows.push_back({policy, p, b, r.report.quality.q});
      bs.push_back(b);
      qs.push_back(r.report.quality.q);
      if (arms) arms->push_back(std::move(r));
    }
    table.summary.emplace_back(policy, mean_of(bs), population_std(bs), mean_of(qs));
  }
  return table;
}

CommandResult run_sweep(const ExperimentSpec& spec, const std::string& out_dir) {
  const auto start = Clock::now();
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  std::vector<ArmResult> arms;
  const SweepTable table = sweep_table(spec, &arms);
  const auto& schema = spec.world->schema();
  const std::size_t a = schema.index_of(spec.sweep->attribute);
  const std::size_t v = schema.value_index(a, spec.sweep->value);

  CommandResult cmd;
  cmd.manifest.config_digest = spec.digest;
  cmd.manifest.seed = spec.seed;
  for (std::size_t i = 0; i < arms.size(); ++i) {
    const std::string name = table.rows[i].policy + "-" + std::to_string(i);
    const auto target =
        TargetDistribution::with_proportion(schema, a, v, table.rows[i].proportion);
    for (const auto& f : write_arm(dir / "arms" / name, spec, arms[i], target))
      cmd.manifest.files.push_back("arms/" + name + "/" + f);
    if (!arms[i].failures.empty()) cmd.exit_code = 1;
  }
  std::ostringstream out;
  out << "# fairmix sweep v1\n";
  out << "# config_digest=" << spec.digest << " seed=" << spec.seed
      << " attribute=" << spec.sweep->attribute << " value=" << spec.sweep->value
      << "\n";
  out << "policy,target_proportion,B,Q\n";
  for (const auto& row : table.rows)
    out << row.policy << "," << format_double(row.proportion) << ","
        << format_double(row.bias) << "," << format_double(row.quality) << "\n";
  for (const auto& [policy, avg, sd, q] : table.summary) {
    out << policy << ",avg," << format_double(avg) << "," << format_double(q) << "\n";
    out << policy << ",std," << format_double(sd) << ",\n";
  }
  write_file(dir / "sweep.csv", out.str());
  cmd.manifest.files.push_back("sweep.csv");
  cmd.manifest.timings.emplace_back("sweep", seconds_since(start));
  write_manifest(dir, cmd.manifest);
  return cmd;
}

std::vector<AblationRow> ablation_table(const ExperimentSpec& spec,
                                        std::vector<ArmResult>* arms) {
  std::vector<WindowArm> windows = spec.windows;
  if (windows.empty()) windows = {{0.0, 0.25}, {0.375, 0.625}, {0.75, 1.0}};
  const std::size_t attr = 0;
  std::vector<AblationRow> rows;
  auto run = [&](const std::string& label, const ArmSettings& arm, double lo,
                 double hi) {
    auto generator = make_generator(spec, arm.guidance);
    MemoryModule memory = fresh_memory(spec);
    ArmResult r = run_arm(spec, arm, *generator, memory);
    const double b = r.report.bias.per_attribute.empty()
                         ? 0.0
                         : r.report.bias.per_attribute.at(attr);
    rows.push_back({label, lo, hi, b, r.report.quality.q});
    if (arms) arms->push_back(std::move(r));
  };
  for (const auto& w : windows) {
    ArmSettings arm = default_arm(spec);
    arm.guidance.window_lo = w.lo;
    arm.guidance.window_hi = w.hi;
    arm.guidance.validate();
    run("window", arm, w.lo, w.hi);
  }
  if (spec.ablation_vanilla) {
    ArmSettings arm = default_arm(spec);
    arm.policy = "vanilla";
    run("vanilla", arm, 0.0, 0.0);
  }
  return rows;
}

CommandResult run_window_ablation(const ExperimentSpec& spec,
                                  const std::string& out_dir) {
  const auto start = Clock::now();
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  std::vector<ArmResult> arms;
  const auto rows = ablation_table(spec, &arms);
  CommandResult cmd;
  cmd.manifest.config_digest = spec.digest;
  cmd.manifest.seed = spec.seed;
  for (std::size_t i = 0; i < arms.size(); ++i) {
    const std::string name = rows[i].label + "-" + std::to_string(i);
    for (const auto& f : write_arm(dir / "arms" / name, spec, arms[i], spec.target))
      cmd.manifest.files.push_back("arms/" + name + "/" + f);
    if (!arms[i].failures.empty()) cmd.exit_code = 1;
  }
  std::ostringstream out;
  out << "# fairmix window-ablation v1\n";
  out << "# config_digest=" << spec.digest << " seed=" << spec.seed << "\n";
  out << "arm,window_lo,window_hi,B,Q\n";
  for (const auto& r : rows)
    out << r.label << "," << format_double(r.lo) << "," << format_double(r.hi)
        << "," << format_double(r.bias) << "," << format_double(r.quality) << "\n";
  write_file(dir / "ablation.csv", out.str());
  cmd.manifest.files.push_back("ablation.csv");
  cmd.manifest.timings.emplace_back("ablate-window", seconds_since(start));
  write_manifest(dir, cmd.manifest);
  return cmd;
}

// ---- CSV ------------------------------------------------------------------

void write_samples_csv(std::ostream& out, const ArmResult& arm,
                       const MixtureWorld& world, const std::string& digest,
                       std::uint64_t seed) {
  const auto& schema = world.schema();
  out << "# fairmix samples v1\n";
  out << "# config_digest=" << digest << " seed=" << seed << "\n";
  out << "prompt_id,concept,instance,sample,seed";
  for (int i = 0; i < world.dimension(); ++i) out << ",x" << i;
  for (const auto& attr : schema.attributes()) out << "," << attr.name;
  out << ",map_concept\n";
  for (const auto& row : arm.samples) {
    out << row.prompt_id << "," << row.concept_name << "," << row.instance << ","
        << row.sample << "," << row.seed;
    for (Eigen::Index i = 0; i < row.x0.size(); ++i)
      out << "," << format_double(row.x0[i]);
    for (std::size_t a = 0; a < schema.size(); ++a)
      out << "," << schema[a].values[row.attributes[a]];
    out << "," << world.concepts()[row.map_concept] << "\n";
  }
}

void write_decisions_csv(std::ostream& out, const ArmResult& arm,
                         const AttributeSchema& schema,
                         const std::string& digest) {
  out << "# fairmix decisions v1\n";
  out << "# config_digest=" << digest << "\n";
  out << "prompt_id,sample,matched_cluster,attribute,target,reference,scalar\n";
  for (const auto& row : arm.decisions) {
    if (row.plan.empty()) {
      out << row.prompt_id << "," << row.sample << "," << row.matched_cluster
          << ",,,,\n";
      continue;
    }
    for (const auto& d : row.plan.directives)
      out << row.prompt_id << "," << row.sample << "," << row.matched_cluster
          << "," << schema[d.attribute].name << ","
          << schema[d.attribute].values[d.target] << ","
          << schema[d.attribute].values[d.reference] << "," << d.scalar << "\n";
  }
}

void write_diagnostics_csv(std::ostream& out, const ArmResult& arm,
                           const std::string& digest) {
  out << "# fairmix guidance-diagnostics v1\n";
  out << "# config_digest=" << digest << "\n";
  out << "prompt_id,sample,step,guided,base_norm,direction_norm,cosine\n";
  for (const auto& row : arm.diagnostics)
    out << row.prompt_id << "," << row.sample << "," << row.step.t_index << ","
        << (row.step.guided ? 1 : 0) << "," << format_double(row.step.base_norm)
        << "," << format_double(row.step.direction_norm) << ","
        << format_double(row.step.cosine) << "\n";
}

void write_memory_csv(std::ostream& out, const MemoryModule& memory,
                      const AttributeSchema& schema) {
  const std::size_t dim =
      memory.clusters().empty() ? 0 : static_cast<std::size_t>(memory.clusters()[0].centroid.size());
  out << "cluster";
  for (std::size_t i = 0; i < dim; ++i) out << ",c" << i;
  out << ",total";
  for (const auto& attr : schema.attributes())
    for (const auto& v : attr.values) out << "," << attr.name << ":" << v;
  out << "\n";
  for (std::size_t k = 0; k < memory.clusters().size(); ++k) {
    const Cluster& c = memory.clusters()[k];
    out << k;
    for (Eigen::Index i = 0; i < c.centroid.size(); ++i)
      out << "," << format_double(c.centroid[i]);
    out << "," << c.total;
    for (const auto& row : c.counts)
      for (auto n : row) out << "," << n;
    out << "\n";
  }
}

ParsedSamples read_samples_csv(std::istream& in, const MixtureWorld& world) {
  const auto& schema = world.schema();
  ParsedSamples out;
  std::string line;
  std::vector<std::string> header;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  std::vector<int> x_cols(static_cast<std::size_t>(world.dimension()), -1);
  std::vector<int> attr_cols(schema.size(), -1);
  int id_col = -1;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split(line);
    if (header.empty()) {
      header = cells;
      for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "prompt_id") id_col = static_cast<int>(i);
        for (int d = 0; d < world.dimension(); ++d)
          if (header[i] == "x" + std::to_string(d))
            x_cols[static_cast<std::size_t>(d)] = static_cast<int>(i);
        for (std::size_t a = 0; a < schema.size(); ++a)
          if (header[i] == schema[a].name) attr_cols[a] = static_cast<int>(i);
      }
      if (id_col < 0) throw ConfigError("samples file has no prompt_id column");
      for (int c : x_cols)
        if (c < 0) throw ConfigError("samples file does not match world dimension");
      for (int c : attr_cols)
        if (c < 0) throw ConfigError("samples file lacks an attribute column");
      continue;
    }
    if (cells.size() != header.size())
      throw ConfigError("malformed samples row: " + line);
    out.prompt_ids.push_back(cells[static_cast<std::size_t>(id_col)]);
    Vector x(world.dimension());
    for (int d = 0; d < world.dimension(); ++d)
      x[d] = std::stod(cells[static_cast<std::size_t>(x_cols[static_cast<std::size_t>(d)])]);
    out.points.push_back(std::move(x));
    AttributeAssignment labels;
    for (std::size_t a = 0; a < schema.size(); ++a)
      labels.push_back(schema.value_index(a, cells[static_cast<std::size_t>(attr_cols[a])]));
    out.attributes.push_back(std::move(labels));
  }
  if (header.empty()) throw ConfigError("samples file has no header");
  return out;
}

}  // namespace fairmix
