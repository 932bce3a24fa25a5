#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairmix/controller.h"
#include "fairmix/guidance.h"
#include "fairmix/world.h"

namespace fairmix {

struct PromptSpec {
  std::string concept_name;
  std::size_t count = 1;  // prompt instances, each with its own jitter
  std::uint64_t jitter_seed = 0;
  std::map<std::string, std::string> constraints;
};

struct ScheduleSpec {
  int steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

struct SweepSpec {
  std::string attribute;
  std::string value;
  std::vector<double> proportions;
  std::vector<std::string> policies;
};

struct WindowArm {
  double lo = 0.0;
  double hi = 1.0;
};

enum class RecordMode { outcome, intent };
enum class GeneratorKind { diffusion, perfect };

struct ExperimentSpec {
  std::string world_path;
  std::shared_ptr<const MixtureWorld> world;
  ScheduleSpec schedule;
  GuidanceConfig guidance;
  std::string policy = "deficit";  // vanilla | deficit | probabilistic | static
  std::optional<GuidancePlan> static_pair;
  TargetDistribution target;
  std::vector<PromptSpec> prompts;
  std::size_t samples_per_prompt = 10;
  std::uint64_t seed = 0;
  double jitter_scale = 0.05;
  std::size_t memory_budget = 16;
  std::optional<double> tau;
  RecordMode record_mode = RecordMode::outcome;
  GeneratorKind generator = GeneratorKind::diffusion;
  bool diagnostics = false;
  std::optional<SweepSpec> sweep;
  std::vector<WindowArm> windows;
  bool ablation_vanilla = true;
  std::string output_dir = "out";
  std::string memory_path;

  // Effective config (defaults filled in) minus output locations.
  nlohmann::json canonical;
  std::string digest;
};

// Parse a config object. Relative paths resolve against base_dir.
ExperimentSpec parse_spec(const nlohmann::json& config,
                          const std::string& base_dir = ".");
ExperimentSpec load_spec(const std::string& path,
                         const nlohmann::json& overrides = nlohmann::json::object());

// FNV-1a of the canonical (key-sorted) JSON dump.
std::string config_digest(const nlohmann::json& config);

// "gender:male=0.3,female=0.7;age:young=0.5,old=0.5"
nlohmann::json parse_target_flag(const std::string& text);
// "0.375,0.625"
std::pair<double, double> parse_window_flag(const std::string& text);

TargetDistribution parse_target(const nlohmann::json& j,
                                const AttributeSchema& schema);

}  // namespace fairmix
