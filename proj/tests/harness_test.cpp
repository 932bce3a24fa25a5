#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "fairmix/harness.h"
#include "test_worlds.h"

namespace fairmix {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json base_config() {
  return json{
      {"world", "worlds/default.world"},
      {"schedule", {{"steps", 60}}},
      {"guidance", {{"gamma", 0.7}, {"attribute_scale", 4.0}}},
      {"policy", "deficit"},
      {"target", {{"gender", {{"male", 0.5}, {"female", 0.5}}}}},
      {"prompts", json::array({json{{"concept", "engineer"}, {"count", 3}, {"jitter_seed", 1}},
                               json{{"concept", "teacher"}, {"count", 2}, {"jitter_seed", 2}}})},
      {"samples_per_prompt", 6},
      {"seed", 5}};
}

ExperimentSpec spec_of(const json& j) { return parse_spec(j, FAIRMIX_SOURCE_DIR); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Harness : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("fairmix-harness-" +
           std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  fs::path dir;
};

TEST(Config, DigestIgnoresKeyOrderAndOutputs) {
  json a = base_config();
  json b = json::parse(a.dump());
  b["output"] = "elsewhere";
  b["memory"] = {{"path", "m.fmx"}};
  EXPECT_EQ(spec_of(a).digest, spec_of(b).digest);
  // Reordered keys: json objects are key-sorted, so build with a different insertion order.
  json c = json::object();
  for (auto it = a.rbegin(); it != a.rend(); ++it) c[it.key()] = it.value();
  EXPECT_EQ(spec_of(c).digest, spec_of(a).digest);
  b["seed"] = 6;
  EXPECT_NE(spec_of(b).digest, spec_of(a).digest);
}

TEST(Config, DigestStableUnderTextReordering) {
  const std::string t1 = R"({"seed": 1, "world": "worlds/default.world",
    "prompts": [{"concept": "engineer"}]})";
  const std::string t2 = R"({"prompts": [{"concept": "engineer"}],
    "world": "worlds/default.world", "seed": 1})";
  EXPECT_EQ(spec_of(json::parse(t1)).digest, spec_of(json::parse(t2)).digest);
}

TEST(Config, Validation) {
  auto bad = [](auto mutate) {
    json j = base_config();
    mutate(j);
    return j;
  };
  EXPECT_THROW(spec_of(bad([](json& j) { j.erase("world"); })), ConfigError);
  EXPECT_THROW(spec_of(bad([](json& j) { j["prompts"] = json::array(); })), ConfigError);
  EXPECT_THROW(spec_of(bad([](json& j) { j["prompts"][0]["concept"] = "pilot"; })), ConfigError);
  EXPECT_THROW(spec_of(bad([](json& j) { j["samples_per_prompt"] = 0; })), ConfigError);
  EXPECT_THROW(spec_of(bad([](json& j) { j["policy"] = "magic"; })), ConfigError);
  EXPECT_THROW(spec_of(bad([](json& j) { j["policy"] = "static"; })), ConfigError);
  EXPECT_THROW(spec_of(bad([](json& j) { j["guidance"]["gamma"] = 2; })), ConfigError);
  EXPECT_THROW(spec_of(bad([](json& j) { j["target"]["gender"]["male"] = 0.9; })), ConfigError);
  EXPECT_THROW(spec_of(bad([](json& j) { j["schedule"]["steps"] = "many"; })), ConfigError);
  EXPECT_NO_THROW(spec_of(bad([](json& j) {
    j["policy"] = "static";
    j["static_pair"] = {{"gender", {"female", "male"}}};
  })));
}

TEST(Config, ScheduleDefaultsScaleWithSteps) {
  json j = base_config();
  j["schedule"] = {{"steps", 1000}};
  auto s = spec_of(j);
  EXPECT_DOUBLE_EQ(s.schedule.beta_start, 1e-4);
  EXPECT_DOUBLE_EQ(s.schedule.beta_end, 0.02);
  j["schedule"] = {{"steps", 200}};
  s = spec_of(j);
  EXPECT_DOUBLE_EQ(s.schedule.beta_end, 0.1);
  EXPECT_DOUBLE_EQ(s.schedule.beta_start, 5e-4);
}

TEST(Config, Flags) {
  const json t = parse_target_flag("gender:male=0.3,female=0.7");
  EXPECT_DOUBLE_EQ(t["gender"]["male"].get<double>(), 0.3);
  EXPECT_THROW(parse_target_flag("gender"), ConfigError);
  EXPECT_EQ(parse_window_flag("0.1,0.4"), std::make_pair(0.1, 0.4));
  EXPECT_THROW(parse_window_flag("0.1"), ConfigError);
}

TEST(RunArm, PerfectEnforcerHitsTargetWithinOneOverN) {
  json j = base_config();
  j["generator"] = "perfect";
  j["prompts"] = json::array({json{{"concept", "engineer"}, {"count", 1}, {"jitter_seed", 1}}});
  j["samples_per_prompt"] = 37;
  j["target"] = {{"gender", {{"male", 0.3}, {"female", 0.7}}}};
  const auto spec = spec_of(j);
  auto gen = make_generator(spec, spec.guidance);
  MemoryModule memory = fresh_memory(spec);
  const ArmResult r = run_arm(spec, default_arm(spec), *gen, memory);
  ASSERT_TRUE(r.failures.empty());
  EXPECT_LE(r.report.bias.combined, 1.0 / 37 + 1e-12);
  EXPECT_EQ(memory.total_recorded(), 37u);
}

TEST(RunArm, InfeasiblePromptIsFlaggedOthersComplete) {
  AttributeSchema schema(std::vector<Attribute>{{"gender", {"male", "female"}},
                                                {"age", {"young", "old"}}});
  using testing::component;
  const MixtureWorld w(2, schema, {"engineer"},
                       {component(0, {0, 0}, {0, 0}), component(0, {1, 1}, {3, 0})});
  const std::string path = (fs::temp_directory_path() / "fairmix-infeasible.world").string();
  {
    std::ofstream out(path);
    out << format_world(w);
  }
  json j = base_config();
  j["world"] = path;
  j["target"] = nullptr;
  j["prompts"] = json::array(
      {json{{"concept", "engineer"}, {"count", 2}},
       json{{"concept", "engineer"}, {"constraints", {{"gender", "female"}, {"age", "young"}}}},
       json{{"concept", "engineer"}, {"count", 1}}});
  const auto spec = spec_of(j);
  auto gen = make_generator(spec, spec.guidance);
  MemoryModule memory = fresh_memory(spec);
  const ArmResult r = run_arm(spec, default_arm(spec), *gen, memory);
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures[0].prompt_index, 1u);
  EXPECT_NE(r.failures[0].message.find("age=young"), std::string::npos);
  EXPECT_EQ(r.samples.size(), 3u * 6u);
  EXPECT_EQ(memory.total_recorded(), 18u);
  fs::remove(path);
}

TEST_F(Harness, GenerateIsByteDeterministic) {
  json j = base_config();
  j["diagnostics"] = true;
  const auto spec = spec_of(j);
  EXPECT_EQ(run_generate(spec, (dir / "a").string()).exit_code, 0);
  EXPECT_EQ(run_generate(spec, (dir / "b").string()).exit_code, 0);
  for (const char* f : {"samples.csv", "decisions.csv", "report.csv", "diagnostics.csv",
                        "scatter.svg", "manifest.json"}) {
    ASSERT_TRUE(fs::exists(dir / "a" / f)) << f;
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
  EXPECT_TRUE(fs::exists(dir / "a" / "timings.json"));
}

TEST_F(Harness, ReportRecomputesFromSamples) {
  const auto spec = spec_of(base_config());
  run_generate(spec, dir.string());
  std::ifstream in(dir / "samples.csv");
  const ParsedSamples parsed = read_samples_csv(in, *spec.world);
  std::vector<std::string> ids;
  std::vector<std::vector<AttributeAssignment>> outcomes;
  for (std::size_t i = 0; i < parsed.prompt_ids.size(); ++i) {
    if (ids.empty() || ids.back() != parsed.prompt_ids[i]) {
      ids.push_back(parsed.prompt_ids[i]);
      outcomes.emplace_back();
    }
    outcomes.back().push_back(parsed.attributes[i]);
    // Labels in the file agree with re-discriminating the stored point.
    EXPECT_EQ(discriminate(*spec.world, parsed.points[i]).attributes, parsed.attributes[i]);
  }
  const double recomputed = bias_score(outcomes, spec.world->schema(), spec.target).combined;
  std::ifstream rin(dir / "report.csv");
  const auto summary = read_report_summary(rin);
  EXPECT_NEAR(recomputed, summary.combined, 1e-12);
}

TEST_F(Harness, GammaOneMatchesVanilla) {
  json one = base_config();
  one["guidance"]["gamma"] = 1.0;
  json van = base_config();
  van["policy"] = "vanilla";
  run_generate(spec_of(one), (dir / "one").string());
  run_generate(spec_of(van), (dir / "van").string());
  auto strip = [](const std::string& text) {
    return std::regex_replace(text, std::regex("(^|\n)#[^\n]*"), "$1");
  };
  EXPECT_EQ(strip(slurp(dir / "one" / "samples.csv")), strip(slurp(dir / "van" / "samples.csv")));
}

TEST_F(Harness, SharedMemoryFileMatchesCombinedRun) {
  json a = base_config();
  a["generator"] = "perfect";
  a["target"] = {{"gender", {{"male", 0.3}, {"female", 0.7}}}};
  a["samples_per_prompt"] = 7;
  json b = a;
  json combined = a;
  a["prompts"] = json::array({base_config()["prompts"][0]});
  b["prompts"] = json::array({base_config()["prompts"][1], base_config()["prompts"][0]});
  combined["prompts"] = json::array(
      {base_config()["prompts"][0], base_config()["prompts"][1], base_config()["prompts"][0]});
  const std::string mem = (dir / "memory.fmx").string();
  auto sa = spec_of(a), sb = spec_of(b), sc = spec_of(combined);
  sa.memory_path = mem;
  sb.memory_path = mem;
  run_generate(sa, (dir / "a").string());
  run_generate(sb, (dir / "b").string());
  run_generate(sc, (dir / "c").string());

  auto plans = [](const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#' || line.rfind("prompt_id", 0) == 0) continue;
      out.push_back(line.substr(line.find(',')));  // drop prompt id
    }
    return out;
  };
  auto seq = plans(dir / "a" / "decisions.csv");
  const auto second = plans(dir / "b" / "decisions.csv");
  seq.insert(seq.end(), second.begin(), second.end());
  EXPECT_EQ(seq, plans(dir / "c" / "decisions.csv"));
  const auto restored = MemoryModule::restore(mem, sc.world->schema());
  EXPECT_EQ(restored.total_recorded(), 7u * 8u);
}

TEST(Sweep, ValidationAndDegenerate) {
  json j = base_config();
  j["sweep"] = {{"attribute", "gender"}, {"value", "male"}, {"proportions", {0.5}},
                {"policies", {"deficit"}}};
  EXPECT_THROW(sweep_table(spec_of(j)), ConfigError);
  j["sweep"]["proportions"] = json::array();
  EXPECT_THROW(sweep_table(spec_of(j)), ConfigError);
  // Identical points: each arm replays the same seeds with fresh memory.
  j["sweep"]["proportions"] = {0.5, 0.5, 0.5};
  const auto t = sweep_table(spec_of(j));
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(std::get<2>(t.summary[0]), 0.0);
}

TEST(Sweep, StdOrderingOnSmallRun) {
  json j = base_config();
  j["prompts"] = json::array({json{{"concept", "engineer"}, {"count", 20}, {"jitter_seed", 1}}});
  j["samples_per_prompt"] = 10;
  j["sweep"] = {{"attribute", "gender"},
                {"value", "male"},
                {"proportions", {0.0, 0.5, 1.0}},
                {"policies", {"deficit", "probabilistic"}}};
  const auto t = sweep_table(spec_of(j));
  ASSERT_EQ(t.summary.size(), 2u);
  EXPECT_LT(std::get<1>(t.summary[0]), std::get<1>(t.summary[1]));
}

TEST(Ablation, DefaultWindowsShape) {
  json j = base_config();
  const auto rows = ablation_table(spec_of(j));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].lo, 0.0);
  EXPECT_EQ(rows[1].lo, 0.375);
  EXPECT_EQ(rows[2].hi, 1.0);
  EXPECT_EQ(rows[3].label, "vanilla");
  for (const auto& r : rows) {
    EXPECT_TRUE(std::isfinite(r.bias));
    EXPECT_TRUE(std::isfinite(r.quality));
  }
}

int count(const std::string& text, const std::string& what) {
  int n = 0;
  for (auto p = text.find(what); p != std::string::npos; p = text.find(what, p + 1)) ++n;
  return n;
}

TEST(Render, CountsAndDeterminism) {
  const MixtureWorld w = load_world(testing::default_world_path());
  const std::string empty = render_scatter({}, {}, w);
  EXPECT_EQ(empty.rfind("<svg", 0), 0u);
  EXPECT_EQ(count(empty, "<circle"), 0);
  EXPECT_NE(empty.find("</svg>"), std::string::npos);
  Rng rng(2);
  std::vector<Vector> pts;
  std::vector<AttributeAssignment> labels;
  for (int i = 0; i < 100; ++i) {
    pts.push_back(standard_normal(rng, 2) * 3.0);
    labels.push_back({std::size_t(i < 30 ? 0 : 1)});
  }
  const std::string svg = render_scatter(pts, labels, w);
  EXPECT_EQ(count(svg, "<circle"), 100);
  EXPECT_EQ(count(svg, "class=\"legend-entry\""), 2);
  EXPECT_EQ(svg, render_scatter(pts, labels, w));
  std::vector<AttributeAssignment> one(100, {1});
  EXPECT_EQ(count(render_scatter(pts, one, w), "class=\"legend-entry\""), 1);
  const MixtureWorld w1(1, testing::gender_schema(), {"c"},
                        {testing::component(0, {0}, {0}), testing::component(0, {1}, {1})});
  EXPECT_THROW(render_scatter({}, {}, w1), ConfigError);
}

TEST(Stats, MeanAndPopulationStd) {
  EXPECT_DOUBLE_EQ(mean_of({1, 2, 3}), 2.0);
  EXPECT_DOUBLE_EQ(population_std({1, 3}), 1.0);
}

}  // namespace
}  // namespace fairmix
