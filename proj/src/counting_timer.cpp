#include "ppsim/counting_timer.hpp"

#include <chrono>
#include <cmath>
#include <vector>

#include "ppsim/types.hpp"

#if defined(__linux__)
#include <pthread.h>
#include <sched.h>
#endif
#if defined(__x86_64__) || defined(__i386__)
#include <x86intrin.h>
#define PPSIM_HAVE_TSC 1
#endif

namespace ppsim {

namespace {

constexpr unsigned kStopCheckEvery = 4096;

std::uint64_t tsc() {
#ifdef PPSIM_HAVE_TSC
  return __rdtsc();
#else
  return 0;
#endif
}

}  // namespace

std::string to_string(TimerVariant v) { return v == TimerVariant::memory_inc ? "memory_inc" : "shadow_register"; }

TimerVariant timer_variant_from_string(const std::string& s) {
  if (s == "memory_inc") return TimerVariant::memory_inc;
  if (s == "shadow_register") return TimerVariant::shadow_register;
  throw Error(ErrorKind::invalid_argument, "unknown timer variant '" + s + "' (memory_inc | shadow_register)");
}

unsigned hardware_threads() { return std::thread::hardware_concurrency(); }

CountingTimer::CountingTimer(TimerVariant variant, bool force) : variant_(variant), shared_(std::make_unique<Shared>()) {
  if (!force && hardware_threads() < 2)
    throw Error(ErrorKind::unsupported,
                "counting thread needs at least 2 hardware threads; use the simulator's counter_resolution instead");
  Shared* sh = shared_.get();
  thread_ = std::thread([sh, variant] {
    if (variant == TimerVariant::memory_inc) {
      // Read-modify-write through memory on every increment.
      while (!sh->stop.load(std::memory_order_relaxed))
        for (unsigned i = 0; i < kStopCheckEvery; ++i)
          sh->counter.store(sh->counter.load(std::memory_order_relaxed) + 1, std::memory_order_release);
    } else {
      std::uint64_t r = sh->counter.load(std::memory_order_relaxed);
      while (!sh->stop.load(std::memory_order_relaxed))
        for (unsigned i = 0; i < kStopCheckEvery; ++i) sh->counter.store(++r, std::memory_order_release);
    }
  });
#if defined(__linux__)
  const unsigned n = hardware_threads();
  if (n >= 2) {
    cpu_set_t set;
    CPU_ZERO(&set);
    CPU_SET(n - 1, &set);
    pinned_ = pthread_setaffinity_np(thread_.native_handle(), sizeof set, &set) == 0;
  }
#endif
}

CountingTimer::~CountingTimer() { stop(); }

void CountingTimer::stop() {
  if (!thread_.joinable()) return;
  shared_->stop.store(true, std::memory_order_relaxed);
  thread_.join();
}

TimerCalibration CountingTimer::calibrate(double seconds, unsigned samples) const {
  require(seconds >= 0.1, ErrorKind::invalid_argument, "calibration needs at least 100 ms");
  require(samples >= 2, ErrorKind::invalid_argument, "calibration needs at least 2 samples");
  using clock = std::chrono::steady_clock;
  const auto slice = std::chrono::duration<double>(seconds / samples);
  std::vector<double> rates;
  double tsc_rate_sum = 0.0;
  unsigned tsc_samples = 0;
  const auto begin = clock::now();
  for (unsigned s = 0; s < samples; ++s) {
    const auto t0 = clock::now();
    const std::uint64_t c0 = read();
    const std::uint64_t r0 = tsc();
    while (clock::now() - t0 < slice) std::this_thread::yield();
    const auto t1 = clock::now();
    const std::uint64_t c1 = read();
    const std::uint64_t r1 = tsc();
    const double dt = std::chrono::duration<double>(t1 - t0).count();
    rates.push_back(static_cast<double>(c1 - c0) / dt);
    if (r1 > r0) {
      tsc_rate_sum += static_cast<double>(c1 - c0) / static_cast<double>(r1 - r0);
      ++tsc_samples;
    }
  }
  TimerCalibration cal;
  cal.samples = samples;
  cal.seconds = std::chrono::duration<double>(clock::now() - begin).count();
  double sum = 0.0;
  for (double r : rates) sum += r;
  cal.increments_per_second = sum / static_cast<double>(rates.size());
  double var = 0.0;
  for (double r : rates) var += (r - cal.increments_per_second) * (r - cal.increments_per_second);
  cal.stddev = std::sqrt(var / static_cast<double>(rates.size() - 1));
  cal.increments_per_tsc_cycle = tsc_samples ? tsc_rate_sum / tsc_samples : 0.0;
  cal.unstable = cal.increments_per_second > 0.0 && cal.stddev > 0.2 * cal.increments_per_second;
  return cal;
}

}  // namespace ppsim
