#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fedkit/model/json_io.hpp"
#include "fedkit/model/mapping.hpp"

using namespace fedkit;
using namespace fedkit::model;

namespace {

std::vector<UnitDef> units() {
  return {{"V", "V", 1, 0}, {"kV", "V", 1000, 0}, {"W", "W", 1, 0}, {"kW", "W", 1000, 0},
          {"K", "K", 1, 0}, {"degC", "K", 1, 273.15}};
}

CanonicalModel small_model() {
  CanonicalModel m;
  m.units = units();
  m.entries = {{"siteA.load.p", EntryKind::measurement, "W", {}},
               {"siteA.bus1.v", EntryKind::measurement, "V", {}},
               {"siteA.room.t", EntryKind::measurement, "K", {}}};
  return m;
}

MappingTable small_table() {
  return MappingTable("siteA", {{"P_load", "siteA.load.p", "kW"}, {"V1", "siteA.bus1.v", "V"}, {"T_room", "siteA.room.t", "degC"}});
}

SignalSample sample(std::string topic, double v, std::string unit) {
  return {std::move(topic), SimTime{123}, v, std::move(unit), Quality::estimated, "meter", 7};
}

}  // namespace

TEST(Units, PureScaleRoundTripIsExactOnPowersOfTwo) {
  const auto u = units();
  for (int e = -40; e <= 40; ++e) {
    const double x = std::ldexp(1.0, e);
    EXPECT_EQ(convert(convert(x, u[1], u[0]), u[0], u[1]), x);
    EXPECT_EQ(convert(convert(x, u[3], u[2]), u[2], u[3]), x);
  }
}

TEST(Units, OffsetConversion) {
  const auto u = units();
  EXPECT_DOUBLE_EQ(convert(25.0, u[5], u[4]), 298.15);
  EXPECT_DOUBLE_EQ(convert(298.15, u[4], u[5]), 25.0);
}

TEST(Units, DifferentBaseIsIncompatible) {
  const auto u = units();
  try {
    convert(1.0, u[0], u[2]);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IncompatibleUnit);
  }
}

TEST(ValidateModel, ValidModelHasNoIssues) {
  CanonicalModel m;
  m.units = units();
  m.entries = {{"a.b.v", EntryKind::measurement, "V", {}}, {"a.b.p", EntryKind::measurement, "kW", {}}};
  EXPECT_TRUE(validate_model(m).empty());
}

TEST(ValidateModel, DuplicateName) {
  CanonicalModel m;
  m.units = units();
  m.entries = {{"a.b.v", EntryKind::measurement, "V", {}}, {"a.b.v", EntryKind::measurement, "V", {}}};
  const auto issues = validate_model(m);
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_EQ(issues[0].str(), "duplicate-name a.b.v");
}

TEST(ValidateModel, UnknownUnit) {
  CanonicalModel m;
  m.units = units();
  m.entries = {{"a.b.v", EntryKind::measurement, "XX", {}}};
  const auto issues = validate_model(m);
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_EQ(issues[0].str(), "unknown-unit XX");
}

TEST(ValidateModel, OrderIndependentAndIdempotent) {
  CanonicalModel m;
  m.units = units();
  m.entries = {{"a.b.v", EntryKind::measurement, "XX", {}},
               {"a.b.v", EntryKind::measurement, "V", {}},
               {"bad name", EntryKind::measurement, "V", {}},
               {"a.b.e", EntryKind::status, "V", {DomainKind::enumeration, {}}}};
  const auto ref = validate_model(m);
  EXPECT_GE(ref.size(), 3u);
  EXPECT_EQ(validate_model(m), ref);
  std::sort(m.entries.begin(), m.entries.end(), [](const auto& a, const auto& b) { return a.unit < b.unit; });
  do {
    EXPECT_EQ(validate_model(m), ref);
  } while (std::next_permutation(m.entries.begin(), m.entries.end(),
                                 [](const auto& a, const auto& b) { return a.name + a.unit < b.name + b.unit; }));
}

TEST(Translate, KilowattToWatt) {
  const auto out = to_canonical(sample("P_load", 2.5, "kW"), small_table(), small_model());
  EXPECT_EQ(out.topic, "siteA.load.p");
  EXPECT_EQ(std::get<double>(out.value), 2500.0);
  EXPECT_EQ(out.unit, "W");
  EXPECT_EQ(out.sim_time, SimTime{123});
  EXPECT_EQ(out.seq, 7u);
  EXPECT_EQ(out.source, "meter");
  EXPECT_EQ(out.quality, Quality::estimated);
}

TEST(Translate, IdentityConversion) {
  const auto out = to_canonical(sample("V1", 400.0, "V"), small_table(), small_model());
  EXPECT_EQ(std::get<double>(out.value), 400.0);
}

TEST(Translate, FromCanonicalInverts) {
  const auto out = from_canonical(sample("siteA.load.p", 2500.0, "W"), small_table(), small_model());
  EXPECT_EQ(out.topic, "P_load");
  EXPECT_EQ(std::get<double>(out.value), 2.5);
  EXPECT_EQ(out.unit, "kW");
}

TEST(Translate, UnmappedTopics) {
  for (auto fn : {&to_canonical, &from_canonical}) {
    try {
      fn(sample("ghost", 1.0, "V"), small_table(), small_model());
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::UnmappedTopic);
    }
  }
}

TEST(Translate, RandomRoundTripsWithinUlpScale) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> mag(-6, 6);
  const auto table = small_table();
  const auto model = small_model();
  for (int i = 0; i < 3000; ++i) {
    const auto& row = table.rows()[static_cast<std::size_t>(i) % table.rows().size()];
    const double v = std::pow(10.0, mag(rng)) * (i % 2 ? -1 : 1);
    const auto back = from_canonical(to_canonical(sample(row.local_name, v, row.local_unit), table, model), table, model);
    EXPECT_EQ(back.topic, row.local_name);
    // Offset units pass through the base magnitude, so the scale includes it.
    const double scale = std::abs(v) + (row.local_unit == "degC" ? 273.15 : 0.0);
    EXPECT_LE(std::abs(std::get<double>(back.value) - v), 2 * std::numeric_limits<double>::epsilon() * scale);
  }
}

TEST(Translate, BooleansPassThrough) {
  auto s = sample("V1", 0.0, "V");
  s.value = true;
  EXPECT_EQ(to_canonical(s, small_table(), small_model()).value, Value{true});
}

TEST(MappingTable, ValidationCatchesNonBijectiveAndIncompatibleRows) {
  MappingTable t("siteA", {{"a", "siteA.load.p", "kW"}, {"a", "siteA.bus1.v", "V"}, {"c", "siteA.room.t", "W"},
                           {"d", "siteA.nowhere", "V"}});
  const auto issues = validate_table(t, small_model());
  auto has = [&](const std::string& code) {
    return std::any_of(issues.begin(), issues.end(), [&](const Issue& i) { return i.code == code; });
  };
  EXPECT_TRUE(has("duplicate-local"));
  EXPECT_TRUE(has("unit-incompatible"));
  EXPECT_TRUE(has("unknown-canonical"));
  EXPECT_TRUE(validate_table(small_table(), small_model()).empty());
}

TEST(JsonIo, ModelAndTableRoundTrip) {
  const auto m = small_model();
  const auto again = canonical_model_from_json(to_json(m));
  EXPECT_EQ(to_json(again), to_json(m));
  const auto t = small_table();
  EXPECT_EQ(to_json(mapping_table_from_json(to_json(t))), to_json(t));
}

TEST(JsonIo, UnknownFieldRejected) {
  auto j = to_json(small_model());
  j["extra"] = 1;
  try {
    canonical_model_from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaError);
  }
}

TEST(JsonIo, ScenarioModelIsValid) {
  const auto m = load_canonical_model(std::string(FEDKIT_SOURCE_DIR) + "/scenarios/two_site/model.json");
  EXPECT_TRUE(validate_model(m).empty());
  for (const char* site : {"siteA", "siteB"}) {
    const auto t = load_mapping_table(std::string(FEDKIT_SOURCE_DIR) + "/scenarios/two_site/" + site + ".json");
    EXPECT_TRUE(validate_table(t, m).empty()) << site;
  }
}
