#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "common.hpp"
#include "fedkit/experiment/stage_machine.hpp"
#include "fedkit/experiment/validate.hpp"

using namespace fedkit;
using namespace fedkit::experiment;
using testing_paths::registry;

namespace {

Json minimal() {
  return parse_json_text(R"({
    "id": "mini", "sites": ["siteA"], "sync": "conservative",
    "macro_step_ns": 10000000, "duration_ns": 1000000000,
    "participants": [{"id": "x", "site": "siteA", "kind": "power_continuous", "step_ns": 10000000,
                      "offers": ["siteA.wr.x"], "requires": ["siteA.wr.y_in"],
                      "model": {"type": "state_space", "A": [[-1]], "B": [[1]], "C": [[1]], "x0": [0]}},
                     {"id": "y", "site": "siteA", "kind": "power_continuous", "step_ns": 10000000,
                      "offers": ["siteA.wr.y_in"], "requires": ["siteA.wr.x"],
                      "model": {"type": "state_space", "A": [[-1]], "B": [[1]], "C": [[1]], "x0": [0]}}],
    "routes": [{"from": {"participant": "x", "topic": "siteA.wr.x"}, "to": {"participant": "y", "topic": "siteA.wr.x"}}],
    "initial_stage": "run", "stages": [{"id": "run"}]
  })");
}

Stage stage(std::string id, std::vector<Transition> tr = {}, std::vector<Command> entry = {}) {
  return {std::move(id), std::move(entry), std::move(tr)};
}

SimTime ms(std::int64_t v) { return SimTime{v * 1'000'000}; }

}  // namespace

TEST(Parse, MinimalDocumentGetsDefaults) {
  const auto exp = experiment_from_json(minimal());
  EXPECT_EQ(exp.seed, 0u);
  ASSERT_EQ(exp.routes.size(), 1u);
  EXPECT_EQ(exp.routes[0].delay_steps, 1);
  EXPECT_EQ(exp.rounds(), 100);
  EXPECT_EQ(exp.sync_mode, SyncMode::conservative);
}

TEST(Parse, DuplicateStage) {
  auto j = minimal();
  j["stages"] = Json::array({{{"id", "run"}}, {{"id", "run"}}});
  try {
    experiment_from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaError);
    EXPECT_NE(std::string(e.detail()).find("duplicate-stage run"), std::string::npos);
  }
}

TEST(Parse, DurationNotMultiple) {
  auto j = minimal();
  j["duration_ns"] = 95'000'000;
  try {
    experiment_from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaError);
    EXPECT_NE(std::string(e.detail()).find("duration-not-multiple"), std::string::npos);
  }
}

TEST(Parse, MalformedTextIsSyntaxErrorWithLine) {
  try {
    parse_experiment("{\n  \"id\": \"x\",\n  oops\n}");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SyntaxError);
    EXPECT_NE(std::string(e.detail()).find("line 3"), std::string::npos) << e.detail();
  }
}

TEST(Parse, MissingAndUnknownFields) {
  auto j = minimal();
  j.erase("sites");
  EXPECT_FEDKIT_ERROR(experiment_from_json(j), SchemaError);
  j = minimal();
  j["colour"] = "blue";
  EXPECT_FEDKIT_ERROR(experiment_from_json(j), SchemaError);
}

TEST(Parse, HilNeedsDeadline) {
  auto j = minimal();
  j["participants"][0]["kind"] = "hil_realtime";
  EXPECT_FEDKIT_ERROR(experiment_from_json(j), SchemaError);
}

TEST(Parse, ResolvedDocumentRoundTrips) {
  const auto exp = testing_paths::demo();
  const auto again = experiment_from_json(to_json(exp));
  EXPECT_EQ(to_json(again), to_json(exp));
}

TEST(Validate, DemoScenarioIsClean) {
  for (const auto& exp : {testing_paths::demo(), testing_paths::coupled()}) {
    const auto r = validate_layers(exp, registry());
    EXPECT_EQ(r.errors(), 0u) << r.to_text();
    EXPECT_EQ(r.warnings(), 0u) << r.to_text();
  }
}

TEST(Validate, ZeroDelayCycle) {
  auto exp = testing_paths::demo();
  for (auto& r : exp.routes) r.delay_steps = 0;
  const auto rep = validate_layers(exp, registry());
  ASSERT_EQ(rep.layer(Layer::dynamic).size(), 1u);
  EXPECT_EQ(rep.layer(Layer::dynamic)[0].code, "zero-delay-cycle");
  EXPECT_FALSE(rep.valid());
}

TEST(Validate, ReportIsIndependentOfDeclarationOrder) {
  auto exp = experiment::load_experiment(testing_paths::source("tests/data/defects/05_unit_mismatch.json"));
  for (auto& r : exp.routes) r.delay_steps = 0;
  exp.participants[1].step = ms(3);
  const auto ref = validate_layers(exp, registry());
  EXPECT_GE(ref.issues.size(), 3u);
  std::mt19937 rng(3);
  for (int i = 0; i < 10; ++i) {
    std::shuffle(exp.participants.begin(), exp.participants.end(), rng);
    std::shuffle(exp.stages.begin(), exp.stages.end(), rng);
    EXPECT_EQ(validate_layers(exp, registry()).to_json(), ref.to_json());
  }
}

TEST(Validate, DefectCorpusIsClassified) {
  const auto manifest = parse_json_text(read_text_file(testing_paths::source("tests/data/defects/manifest.json")));
  ASSERT_EQ(manifest.size(), 10u);
  std::set<std::string> layers;
  for (const auto& m : manifest) {
    const auto exp = load_experiment(testing_paths::source("tests/data/defects/" + m.at("file").get<std::string>()));
    const auto rep = validate_layers(exp, registry());
    ASSERT_EQ(rep.issues.size(), 1u) << m.at("file") << "\n" << rep.to_text();
    const auto& issue = rep.issues[0];
    EXPECT_EQ(to_string(issue.layer), m.at("layer").get<std::string>()) << m.at("file");
    EXPECT_EQ(to_string(issue.severity), m.at("severity").get<std::string>()) << m.at("file");
    EXPECT_EQ(issue.code, m.at("code").get<std::string>()) << m.at("file");
    layers.insert(m.at("layer").get<std::string>());
  }
  EXPECT_EQ(layers.size(), kAllLayers.size());
}

TEST(Validate, HilDeadlineShorterThanLinkIsAnError) {
  auto exp = load_experiment(testing_paths::source("tests/data/defects/09_hil_inter_site.json"));
  exp.participants.back().realtime_deadline = ms(5);
  const auto rep = validate_layers(exp, registry());
  EXPECT_TRUE(rep.has("hil-inter-site"));
  EXPECT_TRUE(rep.has("hil-deadline"));
  EXPECT_FALSE(rep.valid());
}

TEST(StageMachine, ElapsedGuardIsInclusive) {
  StageMachine sm({stage("a", {{ElapsedGuard{ms(2000)}, "b"}}), stage("b")}, "a");
  EXPECT_FALSE(sm.step({}, ms(0)).transitioned);
  EXPECT_FALSE(sm.step({}, ms(1990)).transitioned);
  EXPECT_TRUE(sm.step({}, ms(2000)).transitioned);
  EXPECT_EQ(sm.current(), "b");
}

TEST(StageMachine, FirstSatisfiedGuardWins) {
  StageMachine sm({stage("a", {{ElapsedGuard{ms(1000)}, "b"}, {ElapsedGuard{ms(1000)}, "c"}}), stage("b"), stage("c")}, "a");
  sm.step({}, ms(0));
  sm.step({}, ms(1000));
  EXPECT_EQ(sm.current(), "b");
}

TEST(StageMachine, HoldGuardFiresAfterHoldDuration) {
  StageMachine sm({stage("a", {{ThresholdGuard{"v", Cmp::lt, 360.0, ms(50)}, "b"}}), stage("b")}, "a");
  std::optional<std::int64_t> fired;
  for (std::int64_t t = 0; t <= 300 && !fired; t += 10) {
    const double v = t < 100 ? 380.0 : 350.0;
    if (sm.step({{"v", v}}, ms(t)).transitioned) fired = t;
  }
  ASSERT_TRUE(fired);
  EXPECT_EQ(*fired, 150);
}

TEST(StageMachine, HoldResetsWhenComparisonFails) {
  StageMachine sm({stage("a", {{ThresholdGuard{"v", Cmp::lt, 360.0, ms(50)}, "b"}}), stage("b")}, "a");
  std::optional<std::int64_t> fired;
  for (std::int64_t t = 0; t <= 300 && !fired; t += 10) {
    const double v = (t >= 100 && t != 130) ? 350.0 : 380.0;
    if (sm.step({{"v", v}}, ms(t)).transitioned) fired = t;
  }
  ASSERT_TRUE(fired);
  EXPECT_EQ(*fired, 190);
}

TEST(StageMachine, EntryActionsEmittedOncePerEntry) {
  const auto set = Command::set_value("siteB.ctrl.v_set", 1.0, "V");
  StageMachine sm({stage("a", {{ElapsedGuard{ms(10)}, "b"}}, {set}), stage("b", {}, {set, set})}, "a");
  EXPECT_EQ(sm.step({}, ms(0)).actions.size(), 1u);
  EXPECT_EQ(sm.step({}, ms(5)).actions.size(), 0u);
  EXPECT_EQ(sm.step({}, ms(10)).actions.size(), 2u);
  EXPECT_EQ(sm.step({}, ms(20)).actions.size(), 0u);
}

TEST(StageMachine, UnknownGuardTopicAfterWarmup) {
  StageMachine sm({stage("a", {{ThresholdGuard{"v", Cmp::lt, 1.0, ms(0)}, "b"}}), stage("b")}, "a", ms(10));
  EXPECT_FALSE(sm.step({}, ms(0)).transitioned);
  EXPECT_FEDKIT_ERROR(sm.step({}, ms(10)), UnknownTopic);
}

TEST(StageMachine, TimeMustNotGoBackwards) {
  StageMachine sm({stage("a")}, "a");
  sm.step({}, ms(10));
  EXPECT_FEDKIT_ERROR(sm.step({}, ms(5)), InvalidArgument);
}

TEST(Registry, ScenarioSitesLoad) {
  const auto& reg = registry();
  ASSERT_TRUE(reg.site("siteA"));
  ASSERT_TRUE(reg.site("siteB"));
  EXPECT_EQ(reg.site("siteA")->allow_list.size(), kAllCommandKinds.size());
  const auto link = reg.link("siteB", "siteA");
  ASSERT_TRUE(link);
  EXPECT_EQ(link->base_delay, ms(15));
}

TEST(Registry, MalformedSitesFileIsConfigError) {
  EXPECT_FEDKIT_ERROR(registry_from_json(parse_json_text(R"({"model": "model.json", "sites": 3})"),
                                         testing_paths::source("scenarios/two_site")),
                      ConfigError);
  EXPECT_FEDKIT_ERROR(load_registry("/nonexistent/sites.json"), ConfigError);
}
