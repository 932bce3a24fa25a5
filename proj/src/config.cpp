#include "fairmix/config.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fairmix {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(s);
  while (std::getline(in, cell, sep))
    if (!cell.empty()) out.push_back(cell);
  return out;
}

double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("invalid number '" + s + "' in " + what);
}

GuidancePlan parse_static_pair(const json& j, const AttributeSchema& schema) {
  require_object(j, "static_pair");
  GuidancePlan plan;
  for (std::size_t a = 0; a < schema.size(); ++a) {
    const auto& name = schema[a].name;
    if (!j.contains(name))
      throw ConfigError("static_pair must cover attribute '" + name + "'");
    const auto& pair = j.at(name);
    if (!pair.is_array() || pair.size() != 2)
      throw ConfigError("static_pair." + name + " must be [target, reference]");
    plan.directives.push_back({a, schema.value_index(a, pair[0].get<std::string>()),
                               schema.value_index(a, pair[1].get<std::string>()),
                               +1});
  }
  validate_plan(schema, plan);
  return plan;
}

}  // namespace

TargetDistribution parse_target(const json& j, const AttributeSchema& schema) {
  if (j.is_null()) return TargetDistribution::uniform(schema);
  require_object(j, "target");
  for (const auto& [name, _] : j.items()) schema.index_of(name);
  std::vector<std::vector<double>> props;
  for (std::size_t a = 0; a < schema.size(); ++a) {
    const auto& attr = schema[a];
    if (!j.contains(attr.name)) {
      props.emplace_back(attr.values.size(), 1.0 / attr.values.size());
      continue;
    }
    const auto& row = j.at(attr.name);
    require_object(row, "target." + attr.name);
    for (const auto& [value, _] : row.items()) schema.value_index(a, value);
    std::vector<double> p(attr.values.size(), 0.0);
    for (std::size_t v = 0; v < attr.values.size(); ++v)
      if (row.contains(attr.values[v])) p[v] = row.at(attr.values[v]).get<double>();
    props.push_back(std::move(p));
  }
  return TargetDistribution(schema, std::move(props));
}

std::string config_digest(const json& config) {
  return hex64(fnv1a(config.dump()));
}

json parse_target_flag(const std::string& text) {
  json out = json::object();
  for (const auto& group : split(text, ';')) {
    const auto colon = group.find(':');
    if (colon == std::string::npos || colon == 0)
      throw ConfigError("--target expects attr:value=p,value=p[;attr:...]");
    const std::string attr = group.substr(0, colon);
    json row = json::object();
    for (const auto& kv : split(group.substr(colon + 1), ',')) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0)
        throw ConfigError("--target entry '" + kv + "' must be value=p");
      row[kv.substr(0, eq)] = to_double(kv.substr(eq + 1), "--target");
    }
    out[attr] = row;
  }
  if (out.empty()) throw ConfigError("--target is empty");
  return out;
}

std::pair<double, double> parse_window_flag(const std::string& text) {
  const auto parts = split(text, ',');
  if (parts.size() != 2) throw ConfigError("--window expects lo,hi");
  return {to_double(parts[0], "--window"), to_double(parts[1], "--window")};
}

ExperimentSpec parse_spec(const json& config, const std::string& base_dir) {
  require_object(config, "config");
  ExperimentSpec spec;
  json canon = json::object();

  spec.world_path = get_or<std::string>(config, "world", "");
  if (spec.world_path.empty()) throw ConfigError("config needs a 'world' file");
  canon["world"] = spec.world_path;
  fs::path wp(spec.world_path);
  if (wp.is_relative()) wp = fs::path(base_dir) / wp;
  spec.world = std::make_shared<const MixtureWorld>(load_world(wp.string()));
  const auto& world = *spec.world;
  const auto& schema = world.schema();

  const json sched = config.value("schedule", json::object());
  require_object(sched, "schedule");
  spec.schedule.steps = get_or<int>(sched, "steps", 1000);
  if (spec.schedule.steps < 1) throw ConfigError("schedule.steps must be positive");
  // Unspecified betas follow the 1000-step range rescaled by 1000/steps, so
  // shorter chains still end near pure noise.
  const double rescale = 1000.0 / spec.schedule.steps;
  const double default_end = std::min(0.02 * rescale, 0.999);
  spec.schedule.beta_end = get_or<double>(sched, "beta_end", default_end);
  spec.schedule.beta_start = get_or<double>(
      sched, "beta_start", std::min(1e-4 * rescale, spec.schedule.beta_end));
  NoiseSchedule::linear(spec.schedule.steps, spec.schedule.beta_start,
                        spec.schedule.beta_end);
  canon["schedule"] = {{"steps", spec.schedule.steps},
                       {"beta_start", spec.schedule.beta_start},
                       {"beta_end", spec.schedule.beta_end}};

  const json guid = config.value("guidance", json::object());
  require_object(guid, "guidance");
  spec.guidance.gamma = get_or<double>(guid, "gamma", 0.7);
  spec.guidance.attribute_scale = get_or<double>(guid, "attribute_scale", 1.0);
  if (guid.contains("window")) {
    const auto& w = guid.at("window");
    if (!w.is_array() || w.size() != 2)
      throw ConfigError("guidance.window must be [lo, hi]");
    spec.guidance.window_lo = w[0].get<double>();
    spec.guidance.window_hi = w[1].get<double>();
  }
  spec.guidance.validate();
  canon["guidance"] = {
      {"gamma", spec.guidance.gamma},
      {"attribute_scale", spec.guidance.attribute_scale},
      {"window", {spec.guidance.window_lo, spec.guidance.window_hi}}};

  spec.policy = get_or<std::string>(config, "policy", "deficit");
  if (spec.policy != "vanilla") parse_policy_kind(spec.policy);
  canon["policy"] = spec.policy;
  if (config.contains("static_pair") && !config.at("static_pair").is_null()) {
    spec.static_pair = parse_static_pair(config.at("static_pair"), schema);
    canon["static_pair"] = config.at("static_pair");
  }
  if (spec.policy == "static" && !spec.static_pair)
    throw ConfigError("policy 'static' needs a static_pair");

  spec.target = parse_target(config.value("target", json()), schema);
  json target_canon = json::object();
  for (std::size_t a = 0; a < schema.size(); ++a)
    for (std::size_t v = 0; v < schema[a].values.size(); ++v)
      target_canon[schema[a].name][schema[a].values[v]] = spec.target(a, v);
  canon["target"] = target_canon;

  const json prompts = config.value("prompts", json::array());
  if (!prompts.is_array() || prompts.empty())
    throw ConfigError("config needs a non-empty 'prompts' list");
  canon["prompts"] = json::array();
  for (const auto& p : prompts) {
    require_object(p, "prompt");
    PromptSpec ps;
    ps.concept_name = get_or<std::string>(p, "concept", "");
    world.concept_index(ps.concept_name);
    const auto count = get_or<long long>(p, "count", 1);
    if (count < 1) throw ConfigError("prompt count must be at least 1");
    ps.count = static_cast<std::size_t>(count);
    ps.jitter_seed = get_or<std::uint64_t>(p, "jitter_seed", 0);
    if (p.contains("constraints")) {
      require_object(p.at("constraints"), "prompt constraints");
      for (const auto& [k, v] : p.at("constraints").items())
        ps.constraints[k] = v.get<std::string>();
    }
    canon["prompts"].push_back({{"concept", ps.concept_name},
                                {"count", ps.count},
                                {"jitter_seed", ps.jitter_seed},
                                {"constraints", ps.constraints}});
    spec.prompts.push_back(std::move(ps));
  }

  const auto t = get_or<long long>(config, "samples_per_prompt", 10);
  if (t < 1) throw ConfigError("samples_per_prompt must be at least 1");
  spec.samples_per_prompt = static_cast<std::size_t>(t);
  spec.seed = get_or<std::uint64_t>(config, "seed", 0);
  spec.jitter_scale = get_or<double>(config, "jitter_scale", 0.05);
  if (!(spec.jitter_scale >= 0.0))
    throw ConfigError("jitter_scale must be nonnegative");
  canon["samples_per_prompt"] = spec.samples_per_prompt;
  canon["seed"] = spec.seed;
  canon["jitter_scale"] = spec.jitter_scale;

  const json mem = config.value("memory", json::object());
  require_object(mem, "memory");
  const auto budget = get_or<long long>(mem, "budget", 16);
  if (budget < 1) throw ConfigError("memory.budget must be at least 1");
  spec.memory_budget = static_cast<std::size_t>(budget);
  if (mem.contains("tau") && !mem.at("tau").is_null()) {
    spec.tau = mem.at("tau").get<double>();
    if (!(*spec.tau > 0.0)) throw ConfigError("memory.tau must be positive");
  }
  const auto record = get_or<std::string>(mem, "record", "outcome");
  if (record == "outcome")
    spec.record_mode = RecordMode::outcome;
  else if (record == "intent")
    spec.record_mode = RecordMode::intent;
  else
    throw ConfigError("memory.record must be 'outcome' or 'intent'");
  canon["memory"] = {{"budget", spec.memory_budget},
                     {"tau", spec.tau ? json(*spec.tau) : json()},
                     {"record", record}};
  spec.memory_path = get_or<std::string>(mem, "path", "");

  const auto gen = get_or<std::string>(config, "generator", "diffusion");
  if (gen == "diffusion")
    spec.generator = GeneratorKind::diffusion;
  else if (gen == "perfect")
    spec.generator = GeneratorKind::perfect;
  else
    throw ConfigError("generator must be 'diffusion' or 'perfect'");
  canon["generator"] = gen;
  spec.diagnostics = get_or<bool>(config, "diagnostics", false);
  canon["diagnostics"] = spec.diagnostics;

  if (config.contains("sweep") && !config.at("sweep").is_null()) {
    const auto& sw = config.at("sweep");
    require_object(sw, "sweep");
    SweepSpec s;
    s.attribute = get_or<std::string>(sw, "attribute", schema.empty() ? "" : schema[0].name);
    const std::size_t a = schema.index_of(s.attribute);
    s.value = get_or<std::string>(sw, "value", schema[a].values[0]);
    schema.value_index(a, s.value);
    s.proportions = get_or<std::vector<double>>(sw, "proportions", {});
    for (double p : s.proportions)
      if (!(p >= 0.0 && p <= 1.0))
        throw ConfigError("sweep proportions must lie in [0, 1]");
    s.policies = get_or<std::vector<std::string>>(sw, "policies", {spec.policy});
    if (s.policies.empty()) throw ConfigError("sweep.policies is empty");
    for (const auto& p : s.policies) {
      if (p != "vanilla") parse_policy_kind(p);
      if (p == "static" && !spec.static_pair)
        throw ConfigError("sweep policy 'static' needs a static_pair");
    }
    canon["sweep"] = {{"attribute", s.attribute},
                      {"value", s.value},
                      {"proportions", s.proportions},
                      {"policies", s.policies}};
    spec.sweep = std::move(s);
  }

  if (config.contains("ablation") && !config.at("ablation").is_null()) {
    const auto& ab = config.at("ablation");
    require_object(ab, "ablation");
    spec.ablation_vanilla = get_or<bool>(ab, "include_vanilla", true);
    for (const auto& w : ab.value("windows", json::array())) {
      if (!w.is_array() || w.size() != 2)
        throw ConfigError("ablation windows must be [lo, hi] pairs");
      WindowArm arm{w[0].get<double>(), w[1].get<double>()};
      GuidanceConfig probe = spec.guidance;
      probe.window_lo = arm.lo;
      probe.window_hi = arm.hi;
      probe.validate();
      spec.windows.push_back(arm);
    }
    json wins = json::array();
    for (const auto& w : spec.windows) wins.push_back({w.lo, w.hi});
    canon["ablation"] = {{"include_vanilla", spec.ablation_vanilla},
                         {"windows", wins}};
  }

  spec.output_dir = get_or<std::string>(config, "output", "out");
  spec.canonical = std::move(canon);
  spec.digest = config_digest(spec.canonical);
  return spec;
}

ExperimentSpec load_spec(const std::string& path, const json& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json config;
  try {
    config = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  require_object(config, "config");
  // A target given as an override replaces the configured one wholesale.
  json patch = overrides;
  if (patch.is_object() && patch.contains("target")) {
    config["target"] = patch.at("target");
    patch.erase("target");
  }
  config.merge_patch(patch);
  const auto base = fs::path(path).parent_path();
  try {
    return parse_spec(config, base.empty() ? "." : base.string());
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

}  // namespace fairmix
