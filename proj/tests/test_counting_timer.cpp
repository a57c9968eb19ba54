#include <chrono>
#include <thread>

#include "doctest.h"
#include <atomic>
#include <vector>

#include "ppsim/counting_timer.hpp"
#include "ppsim/types.hpp"

using namespace ppsim;
using namespace std::chrono_literals;

TEST_CASE("variant names") {
  for (auto v : {TimerVariant::memory_inc, TimerVariant::shadow_register})
    CHECK(timer_variant_from_string(to_string(v)) == v);
  CHECK_THROWS_AS(timer_variant_from_string("rdtsc"), Error);
}

TEST_CASE("single-core machines need force") {
  if (hardware_threads() >= 2) return;
  CHECK_THROWS_AS(CountingTimer(TimerVariant::memory_inc), Error);
}

TEST_CASE("counter advances, is monotone and stops") {
  for (auto v : {TimerVariant::memory_inc, TimerVariant::shadow_register}) {
    CountingTimer t(v, true);
    std::this_thread::sleep_for(10ms);
    const auto a = t.read();
    CHECK(a > 0);
    std::uint64_t prev = a;
    bool monotone = true;
    for (int i = 0; i < 100000; ++i) {
      const auto x = t.read();
      monotone &= x >= prev;
      prev = x;
    }
    CHECK(monotone);
    t.stop();
    CHECK_FALSE(t.running());
    const auto frozen = t.read();
    std::this_thread::sleep_for(5ms);
    CHECK(t.read() == frozen);
    CHECK(t.calibrate(0.1, 2).increments_per_second == 0.0);
  }
}

TEST_CASE("concurrent readers see nondecreasing values") {
  CountingTimer t(TimerVariant::shadow_register, true);
  std::atomic<bool> ok{true};
  std::vector<std::thread> readers;
  for (int r = 0; r < 2; ++r)
    readers.emplace_back([&] {
      std::uint64_t prev = 0;
      for (int i = 0; i < 200000; ++i) {
        const auto x = t.read();
        if (x < prev) ok = false;
        prev = x;
      }
    });
  for (auto& th : readers) th.join();
  CHECK(ok);
}

TEST_CASE("calibration reports a rate") {
  CountingTimer t(TimerVariant::memory_inc, true);
  const TimerCalibration c = t.calibrate(0.1, 4);
  CHECK(c.samples == 4);
  CHECK(c.seconds >= 0.1);
  CHECK(c.increments_per_second > 0.0);
  CHECK_THROWS_AS(t.calibrate(0.01, 4), Error);
}
