#pragma once

#include <string>

#include "fedkit/experiment/parse.hpp"
#include "fedkit/experiment/sites.hpp"

namespace testing_paths {

inline std::string source(const std::string& rel) { return std::string(FEDKIT_SOURCE_DIR) + "/" + rel; }
inline std::string scenario(const std::string& file) { return source("scenarios/two_site/" + file); }

inline const fedkit::experiment::Registry& registry() {
  static const auto reg = fedkit::experiment::load_registry(scenario("sites.json"));
  return reg;
}

inline fedkit::experiment::ExperimentDescription demo() { return fedkit::experiment::load_experiment(scenario("demo.json")); }
inline fedkit::experiment::ExperimentDescription coupled() {
  return fedkit::experiment::load_experiment(scenario("coupled_wr.json"));
}

}  // namespace testing_paths

/// Runs `expr` and checks it throws fedkit::Error with `code`.
#define EXPECT_FEDKIT_ERROR(expr, err_code)                                   \
  do {                                                                        \
    try {                                                                     \
      (void)(expr);                                                           \
      ADD_FAILURE() << #expr " did not throw";                                \
    } catch (const fedkit::Error& e_) {                                       \
      EXPECT_EQ(e_.code(), fedkit::ErrorCode::err_code) << e_.what();         \
    }                                                                         \
  } while (0)
