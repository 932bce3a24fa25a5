#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "fairmix/harness.h"

namespace {

using nlohmann::json;
using namespace fairmix;

constexpr int kOk = 0;
constexpr int kPartial = 1;
constexpr int kInvalid = 2;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string memory;
  std::string policy;
  std::optional<double> gamma;
  std::string window;
  std::string target;
  std::string world;
  std::string samples;
  std::size_t attribute = 0;
};

void add_experiment_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "experiment config (JSON)")->required();
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--memory", f.memory, "persisted memory file");
  cmd->add_option("--policy", f.policy, "vanilla | deficit | probabilistic | static");
  cmd->add_option("--gamma", f.gamma, "weight of the base noise estimate");
  cmd->add_option("--window", f.window, "guidance window as lo,hi");
  cmd->add_option("--target", f.target, "attr:value=p,value=p[;attr:...]");
}

json overrides(const Flags& f) {
  json o = json::object();
  if (f.seed) o["seed"] = *f.seed;
  if (!f.memory.empty()) o["memory"]["path"] = f.memory;
  if (!f.policy.empty()) o["policy"] = f.policy;
  if (f.gamma) o["guidance"]["gamma"] = *f.gamma;
  if (!f.window.empty()) {
    const auto [lo, hi] = parse_window_flag(f.window);
    o["guidance"]["window"] = {lo, hi};
  }
  if (!f.target.empty()) o["target"] = parse_target_flag(f.target);
  return o;
}

ExperimentSpec spec_from(const Flags& f) {
  ExperimentSpec spec = load_spec(f.config, overrides(f));
  if (!f.out.empty()) spec.output_dir = f.out;
  return spec;
}

MixtureWorld world_from(const Flags& f) {
  if (!f.world.empty()) return load_world(f.world);
  if (!f.config.empty()) return *load_spec(f.config).world;
  throw ConfigError("pass --world or --config");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fairness-controlled sampling over a Gaussian-mixture diffusion world"};
  app.require_subcommand(1);
  Flags f;

  auto* generate = app.add_subcommand("generate", "run one guided generation arm");
  add_experiment_flags(generate, f);
  auto* sweep = app.add_subcommand("sweep", "target-proportion sweep across policies");
  add_experiment_flags(sweep, f);
  auto* ablate = app.add_subcommand("ablate-window", "guidance window ablation");
  add_experiment_flags(ablate, f);

  auto* inspect = app.add_subcommand("inspect-memory", "dump memory clusters as CSV");
  inspect->add_option("--memory", f.memory, "memory file")->required();
  inspect->add_option("--world", f.world, "world file (for the attribute schema)");
  inspect->add_option("--config", f.config, "config naming the world");
  inspect->add_option("--out", f.out, "write CSV here instead of stdout");

  auto* render = app.add_subcommand("render", "SVG scatter of a samples CSV");
  render->add_option("--samples", f.samples, "samples.csv")->required();
  render->add_option("--world", f.world, "world file");
  render->add_option("--config", f.config, "config naming the world");
  render->add_option("--out", f.out, "output SVG path")->required();
  render->add_option("--attribute", f.attribute, "attribute index used for colour");

  auto* validate = app.add_subcommand("validate-world", "check a world file");
  validate->add_option("--world", f.world, "world file");
  validate->add_option("world_file", f.world, "world file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (generate->parsed() || sweep->parsed() || ablate->parsed()) {
      const ExperimentSpec spec = spec_from(f);
      CommandResult r;
      if (generate->parsed())
        r = run_generate(spec, spec.output_dir);
      else if (sweep->parsed())
        r = run_sweep(spec, spec.output_dir);
      else
        r = run_window_ablation(spec, spec.output_dir);
      std::cerr << "wrote " << r.manifest.files.size() << " files to "
                << spec.output_dir << " (digest " << spec.digest << ")\n";
      return r.exit_code == 0 ? kOk : kPartial;
    }
    if (inspect->parsed()) {
      const MixtureWorld world = world_from(f);
      const MemoryModule memory = MemoryModule::restore(f.memory, world.schema());
      if (f.out.empty()) {
        write_memory_csv(std::cout, memory, world.schema());
      } else {
        std::ofstream out(f.out);
        write_memory_csv(out, memory, world.schema());
      }
      return kOk;
    }
    if (render->parsed()) {
      const MixtureWorld world = world_from(f);
      std::ifstream in(f.samples);
      if (!in) throw ConfigError("cannot open '" + f.samples + "'");
      const ParsedSamples s = read_samples_csv(in, world);
      std::ofstream out(f.out, std::ios::binary);
      out << render_scatter(s.points, s.attributes, world, f.attribute);
      return kOk;
    }
    if (validate->parsed()) {
      if (f.world.empty()) throw ConfigError("validate-world needs a world file");
      const MixtureWorld world = load_world(f.world);
      std::cout << f.world << ": ok, dimension " << world.dimension() << ", "
                << world.concepts().size() << " concepts, "
                << world.components().size() << " components, "
                << world.schema().size() << " attributes\n";
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const MemoryError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kPartial;
  }
  return kOk;
}
