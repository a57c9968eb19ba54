#include <cstring>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "ppsim/ppsim.h"

namespace {

const char* kSmall = R"({"noise": {"interrupt_rate": 0, "spurious_miss_rate": 0},
  "attack": {"set_source": "oracle", "n_traces": 1}})";

}  // namespace

TEST_CASE("experiment handles") {
  ppsim_experiment* e = nullptr;
  REQUIRE(ppsim_experiment_create(nullptr, &e) == PPSIM_OK);
  char* digest = nullptr;
  CHECK(ppsim_experiment_digest(e, &digest) == PPSIM_OK);
  CHECK(std::strlen(digest) == 16);
  ppsim_string_free(digest);
  CHECK(ppsim_experiment_set_traces(e, 0) == PPSIM_ERR_INVALID_ARGUMENT);
  CHECK(std::string(ppsim_last_error()).find("n_traces") != std::string::npos);
  CHECK(ppsim_experiment_set_noise(e, R"({"interrupt_rate": -2})") == PPSIM_ERR_CONFIG);
  ppsim_experiment_destroy(e);
  ppsim_experiment_destroy(nullptr);
}

TEST_CASE("bad configs map to config errors") {
  ppsim_experiment* e = nullptr;
  CHECK(ppsim_experiment_create(R"({"bogus": 1})", &e) == PPSIM_ERR_CONFIG);
  CHECK(e == nullptr);
  CHECK(std::strlen(ppsim_last_error()) > 0);
  CHECK(ppsim_experiment_create("{", &e) == PPSIM_ERR_CONFIG);
  CHECK(ppsim_experiment_load("/nonexistent.json", &e) == PPSIM_ERR_IO);
  CHECK(ppsim_experiment_create(nullptr, nullptr) == PPSIM_ERR_INVALID_ARGUMENT);
}

TEST_CASE("end-to-end through the C interface") {
  ppsim_experiment* e = nullptr;
  REQUIRE(ppsim_experiment_create(kSmall, &e) == PPSIM_OK);
  char* report = nullptr;
  char* timing = nullptr;
  REQUIRE(ppsim_run_e2e(e, 3, nullptr, 0, &report, &timing) == PPSIM_OK);
  const auto r = nlohmann::json::parse(report);
  CHECK(r["merged_bit_errors"] == 0);
  CHECK(nlohmann::json::parse(timing).contains("total_seconds"));
  ppsim_string_free(report);
  ppsim_string_free(timing);
  const double values[] = {1};
  char* csv = nullptr;
  CHECK(ppsim_sweep(e, 1, "lookahead", values, 1, 1, 1, &csv, nullptr) == PPSIM_OK);
  CHECK(std::string(csv).find("lookahead,") == 0);
  ppsim_string_free(csv);
  CHECK(ppsim_sweep(e, 1, "nope", values, 1, 1, 1, nullptr, nullptr) == PPSIM_ERR_INVALID_ARGUMENT);
  const char* none[] = {"/nonexistent.csv"};
  CHECK(ppsim_recover(e, none, 1, nullptr, nullptr) == PPSIM_ERR_IO);
  ppsim_experiment_destroy(e);
}

TEST_CASE("timer handles") {
  ppsim_timer* t = nullptr;
  CHECK(ppsim_timer_create("sundial", 1, &t) == PPSIM_ERR_INVALID_ARGUMENT);
  if (ppsim_hardware_threads() < 2) CHECK(ppsim_timer_create("memory_inc", 0, &t) == PPSIM_ERR_UNSUPPORTED);
  REQUIRE(ppsim_timer_create("shadow_register", 1, &t) == PPSIM_OK);
  std::uint64_t a = 0, b = 0;
  CHECK(ppsim_timer_read(t, &a) == PPSIM_OK);
  CHECK(ppsim_timer_read(t, &b) == PPSIM_OK);
  CHECK(b >= a);
  CHECK(ppsim_timer_stop(t) == PPSIM_OK);
  ppsim_timer_destroy(t);
}
