#include <gtest/gtest.h>

#include "common.hpp"
#include "fedkit/hub/hub.hpp"
#include "fedkit/hub/site_gateway.hpp"

using namespace fedkit;
using namespace fedkit::hub;
using testing_paths::registry;

namespace {

SimTime ms(std::int64_t v) { return SimTime{v * 1'000'000}; }

SignalSample sample(std::string topic, std::int64_t t_ms, double v, std::uint64_t seq) {
  return {std::move(topic), ms(t_ms), v, "", Quality::good, "", seq};
}

struct Fixture {
  Hub hub{registry()};
  std::string run = hub.create_run(testing_paths::demo(), true);
  Session grid = hub.register_participant(*testing_paths::demo().participant("grid"), run);
  Session ctrl = hub.register_participant(*testing_paths::demo().participant("ctrl"), run);
};

experiment::Registry locked_down() {
  auto reg = registry();
  for (auto& [_, s] : reg.sites) s.allow_list.clear();
  return reg;
}

}  // namespace

TEST(Sessions, RegistrationErrors) {
  Fixture f;
  auto ghost = *testing_paths::demo().participant("grid");
  EXPECT_FEDKIT_ERROR(f.hub.register_participant(ghost, f.run), DuplicateParticipant);
  ghost.id = "other";
  ghost.site_id = "siteZ";
  EXPECT_FEDKIT_ERROR(f.hub.register_participant(ghost, f.run), UnknownSite);
  ghost.site_id = "siteA";
  EXPECT_FEDKIT_ERROR(f.hub.register_participant(ghost, f.run), InvalidArgument);
  EXPECT_FEDKIT_ERROR(f.hub.register_operator("siteA", "wrong"), PermissionDenied);
  EXPECT_FEDKIT_ERROR(f.hub.register_operator("siteQ", "alpha-token"), UnknownSite);
  const auto op = f.hub.register_operator("siteA", "alpha-token", "ana");
  EXPECT_EQ(op.principal, "ana@siteA");
  EXPECT_EQ(op.role, Role::operator_);
}

TEST(Publish, RejectsUnofferedTopic) {
  Fixture f;
  EXPECT_FEDKIT_ERROR(f.hub.publish(f.grid.id, sample("siteB.ctrl.i_cmd", 0, 1, 1), {}, {}), NotOffered);
}

TEST(Publish, RejectsStaleSequence) {
  Fixture f;
  f.hub.publish(f.grid.id, sample("siteA.grid.v_load", 0, 1, 5), {}, {});
  EXPECT_FEDKIT_ERROR(f.hub.publish(f.grid.id, sample("siteA.grid.v_load", 10, 1, 5), {}, {}), StaleSeq);
  EXPECT_FEDKIT_ERROR(f.hub.publish(f.grid.id, sample("siteA.grid.v_load", 10, 1, 4), {}, {}), StaleSeq);
  EXPECT_NO_THROW(f.hub.publish(f.grid.id, sample("siteA.grid.v_load", 10, 1, 6), {}, {}));
}

TEST(Publish, OperatorsCannotPublish) {
  Fixture f;
  const auto op = f.hub.register_operator("siteA", "alpha-token");
  EXPECT_FEDKIT_ERROR(f.hub.publish(op.id, sample("siteA.grid.v_load", 0, 1, 1), {}, {}), PermissionDenied);
}

TEST(Publish, ForwardsAcrossTheLinkAndStores) {
  Fixture f;
  const auto ack = f.hub.publish(f.grid.id, sample("siteA.grid.v_load", 0, 370, 1), ms(0), ms(0));
  EXPECT_EQ(ack.store_rows, 1u);
  EXPECT_EQ(ack.forwarded, 1u);
  const auto at = f.hub.next_arrival(f.run);
  ASSERT_TRUE(at);
  // siteA->siteB: 15 ms base, +-5 ms uniform jitter.
  EXPECT_GE(*at, ms(10));
  EXPECT_LE(*at, ms(20));
  EXPECT_TRUE(f.hub.collect(f.run, "ctrl", *at - SimTime{1}).empty());
  const auto got = f.hub.collect(f.run, "ctrl", *at);
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0].sample.topic, "siteB.ctrl.v_meas");
  EXPECT_EQ(got[0].sample.source, "grid");
  EXPECT_EQ(std::get<double>(got[0].sample.value), 370.0);
}

TEST(Commands, EveryKindIsGatedByTheAllowList) {
  Hub hub(locked_down());
  const auto run = hub.create_run(testing_paths::demo(), true);
  const auto op = hub.register_operator("siteA", "alpha-token");
  const auto before = hub.observable_hash();
  for (auto kind : kAllCommandKinds) {
    Command c{kind, {{"run", run}}};
    if (kind == CommandKind::set_value) c = Command::set_value("siteB.ctrl.v_set", 1, "V");
    const auto res = hub.execute_command(op.id, c);
    EXPECT_FALSE(res.ok) << to_string(kind);
    EXPECT_EQ(res.error, ErrorCode::PermissionDenied) << to_string(kind);
    EXPECT_EQ(hub.observable_hash(), before) << to_string(kind);
  }
  EXPECT_EQ(hub.run_state(run), RunState::created);
}

TEST(Commands, SiteBTokenCannotStartOrSet) {
  Fixture f;
  const auto op = f.hub.register_operator("siteB", "bravo-token");
  EXPECT_EQ(f.hub.execute_command(op.id, {CommandKind::start_experiment, {{"run", f.run}}}).error,
            ErrorCode::PermissionDenied);
  EXPECT_TRUE(f.hub.execute_command(op.id, {CommandKind::get_status, {}}).ok);
  EXPECT_TRUE(f.hub.execute_command(op.id, {CommandKind::list_resources, {}}).ok);
}

TEST(Commands, SetValueQueuesConvertedSetpoint) {
  Fixture f;
  const auto op = f.hub.register_operator("siteA", "alpha-token");
  EXPECT_EQ(f.hub.execute_command(op.id, Command::set_value("siteB.ctrl.v_set", 0.39, "kV")).error,
            ErrorCode::NoActiveRun);
  ASSERT_TRUE(f.hub.execute_command(op.id, {CommandKind::start_experiment, {{"run", f.run}}}).ok);
  EXPECT_EQ(f.hub.run_state(f.run), RunState::running);
  const auto res = f.hub.execute_command(op.id, Command::set_value("siteB.ctrl.v_set", 0.39, "kV"));
  ASSERT_TRUE(res.ok) << res.message;
  EXPECT_EQ(f.hub.execute_command(op.id, Command::set_value("siteA.grid.v_load", 1, "V")).error,
            ErrorCode::InvalidArgument);
  EXPECT_EQ(f.hub.execute_command(op.id, Command::set_value("siteB.ctrl.v_set", 1, "A")).error,
            ErrorCode::InvalidArgument);
  const auto sp = f.hub.take_setpoints(f.run);
  ASSERT_EQ(sp.size(), 1u);
  EXPECT_DOUBLE_EQ(std::get<double>(sp[0].value), 390.0);
  EXPECT_EQ(sp[0].unit, "V");
  EXPECT_EQ(sp[0].source, "operator:operator@siteA");
  EXPECT_TRUE(f.hub.take_setpoints(f.run).empty());
}

TEST(Commands, StopAndStatus) {
  Fixture f;
  const auto op = f.hub.register_operator("siteA", "alpha-token");
  EXPECT_EQ(f.hub.execute_command(op.id, {CommandKind::stop_experiment, {}}).error, ErrorCode::NoActiveRun);
  f.hub.execute_command(op.id, {CommandKind::start_experiment, {{"run", f.run}}});
  EXPECT_EQ(f.hub.execute_command(op.id, {CommandKind::start_experiment, {{"run", f.run}}}).error,
            ErrorCode::InvalidArgument);
  ASSERT_TRUE(f.hub.execute_command(op.id, {CommandKind::stop_experiment, {}}).ok);
  EXPECT_TRUE(f.hub.stop_requested(f.run));
  const auto st = f.hub.execute_command(op.id, {CommandKind::get_status, {{"run", f.run}}});
  EXPECT_EQ(st.data.at("state"), "stopped");
  EXPECT_EQ(f.hub.execute_command(op.id, {CommandKind::get_status, {{"run", "run-99"}}}).error, ErrorCode::UnknownRun);
}

TEST(Commands, StartFromExperimentDocumentCallsLauncher) {
  Hub hub(registry());
  std::vector<std::string> launched;
  hub.set_launcher([&](const std::string& id) { launched.push_back(id); });
  const auto op = hub.register_operator("siteA", "alpha-token");
  const auto res = hub.execute_command(op.id, {CommandKind::start_experiment, {{"experiment", to_json(testing_paths::demo())}}});
  ASSERT_TRUE(res.ok) << res.message;
  ASSERT_EQ(launched, std::vector<std::string>{"run-1"});
  EXPECT_EQ(res.data.at("state"), "running");
  EXPECT_EQ(hub.execute_command(op.id, {CommandKind::start_experiment, {{"experiment", {{"id", 3}}}}}).error,
            ErrorCode::InvalidArgument);
}

TEST(Trace, QueryByGlobAndRange) {
  Fixture f;
  for (int i = 0; i < 10; ++i) {
    f.hub.publish(f.grid.id, sample("siteA.grid.v_load", i * 10, i, static_cast<std::uint64_t>(i + 1)), ms(i * 10), {});
    f.hub.publish(f.ctrl.id, sample("siteB.ctrl.i_cmd", i * 10, -i, static_cast<std::uint64_t>(i + 1)), ms(i * 10), {});
  }
  EXPECT_EQ(f.hub.query_trace({f.run, {}, {}, {}}).size(), 20u);
  EXPECT_EQ(f.hub.query_trace({f.run, "siteA.*", {}, {}}).size(), 10u);
  EXPECT_EQ(f.hub.query_trace({f.run, "*.i_cmd", ms(20), ms(50)}).size(), 3u);
  EXPECT_TRUE(f.hub.query_trace({f.run, {}, ms(500), ms(600)}).empty());
  EXPECT_TRUE(f.hub.query_trace({f.run, {}, ms(50), ms(50)}).empty());
  EXPECT_FEDKIT_ERROR(f.hub.query_trace({"run-77", {}, {}, {}}), UnknownRun);

  const auto op = f.hub.register_operator("siteB", "bravo-token");
  const auto res = f.hub.execute_command(op.id, {CommandKind::query_trace, {{"run", f.run}, {"topic", "siteB.*"}}});
  ASSERT_TRUE(res.ok);
  EXPECT_EQ(res.data.at("rows").size(), 10u);
}

TEST(Trace, CsvIsSortedWithHeader) {
  Fixture f;
  f.hub.publish(f.ctrl.id, sample("siteB.ctrl.i_cmd", 10, 2.5, 1), {}, {});
  f.hub.publish(f.grid.id, sample("siteA.grid.v_load", 10, 400, 1), {}, {});
  f.hub.publish(f.grid.id, sample("siteA.grid.i_src", 0, 1, 1), {}, {});
  EXPECT_EQ(f.hub.store().csv(f.run),
            std::string(kTraceHeader) +
                "\n"
                "0,siteA.grid.i_src,1,A,good,grid,1,0\n"
                "10000000,siteB.ctrl.i_cmd,2.5,A,good,ctrl,1,0\n"
                "10000000,siteA.grid.v_load,400,V,good,grid,1,0\n");
}

TEST(Replication, IdempotentAndCanonical) {
  Fixture f;
  const auto& site = *registry().site("siteA");
  SiteGateway gw(site, registry().model);
  for (int i = 0; i < 100; ++i) {
    SignalSample s{"siteA.grid.v_load", ms(i), 360.0 + i, "V", Quality::good, "scada", static_cast<std::uint64_t>(i)};
    gw.log(s, ms(i));
  }
  EXPECT_EQ(gw.local_log()[1].sample.topic, "GRID/U_LOAD");
  EXPECT_DOUBLE_EQ(std::get<double>(gw.local_log()[1].sample.value), 0.361);
  EXPECT_EQ(gw.replicate(f.hub, f.run), 100u);
  const auto hash = f.hub.store().hash();
  EXPECT_EQ(gw.replay(f.hub, f.run), 0u);
  EXPECT_EQ(gw.replicate(f.hub, f.run), 0u);
  EXPECT_EQ(f.hub.store().hash(), hash);
  const auto rows = f.hub.query_trace({f.run, {}, {}, {}});
  ASSERT_EQ(rows.size(), 100u);
  EXPECT_EQ(rows[7].sample.topic, "siteA.grid.v_load");
  EXPECT_NEAR(std::get<double>(rows[7].sample.value), 367.0, 1e-9);
  EXPECT_EQ(rows[7].sample.unit, "V");
}

TEST(Replication, BatchIsAtomic) {
  Fixture f;
  std::vector<TraceRow> batch;
  batch.push_back({{"GRID/U_LOAD", ms(0), 0.4, "kV", Quality::good, "scada", 1}, {}});
  batch.push_back({{"NOT/MAPPED", ms(0), 1.0, "V", Quality::good, "scada", 2}, {}});
  EXPECT_FEDKIT_ERROR(f.hub.replicate(f.run, "siteA", batch), UnmappedTopic);
  EXPECT_EQ(f.hub.store().size(), 0u);
  EXPECT_FEDKIT_ERROR(f.hub.replicate(f.run, "siteX", {}), UnknownSite);
  EXPECT_FEDKIT_ERROR(f.hub.replicate("run-9", "siteA", {}), UnknownRun);
}

TEST(Runs, MissingLinkIsConfigError) {
  auto reg = registry();
  for (auto& [_, s] : reg.sites) s.links.clear();
  Hub hub(reg);
  EXPECT_FEDKIT_ERROR(hub.create_run(testing_paths::demo(), true), ConfigError);
}

TEST(Runs, StopAllMarksEveryLiveRun) {
  Fixture f;
  const auto second = f.hub.create_run(testing_paths::coupled(), true);
  f.hub.set_run_state(f.run, RunState::finished);
  f.hub.stop_all();
  EXPECT_EQ(f.hub.run_state(f.run), RunState::finished);
  EXPECT_EQ(f.hub.run_state(second), RunState::stopped);
  EXPECT_TRUE(f.hub.stop_requested(second));
}
