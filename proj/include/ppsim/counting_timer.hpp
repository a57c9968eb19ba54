#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <thread>

namespace ppsim {

enum class TimerVariant { memory_inc, shadow_register };

std::string to_string(TimerVariant v);
TimerVariant timer_variant_from_string(const std::string& s);

struct TimerCalibration {
  double increments_per_second = 0.0;
  double stddev = 0.0;
  double increments_per_tsc_cycle = 0.0;  // 0 when no timestamp counter is available
  unsigned samples = 0;
  double seconds = 0.0;
  bool unstable = false;
};

/// A real counting thread. One writer thread per instance, any number of
/// readers.
class CountingTimer {
 public:
  /// Throws when fewer than two hardware threads are available unless
  /// `force` is set.
  explicit CountingTimer(TimerVariant variant, bool force = false);
  ~CountingTimer();
  CountingTimer(const CountingTimer&) = delete;
  CountingTimer& operator=(const CountingTimer&) = delete;

  std::uint64_t read() const { return shared_->counter.load(std::memory_order_acquire); }
  void stop();
  bool running() const { return thread_.joinable(); }
  bool pinned() const { return pinned_; }
  TimerVariant variant() const { return variant_; }

  /// Increment rate against the steady clock over at least 100 ms, split
  /// into `samples` intervals.
  TimerCalibration calibrate(double seconds = 0.1, unsigned samples = 10) const;

 private:
  struct Shared {
    alignas(64) std::atomic<std::uint64_t> counter{0};
    alignas(64) std::atomic<bool> stop{false};
  };

  TimerVariant variant_;
  std::unique_ptr<Shared> shared_;
  std::thread thread_;
  bool pinned_ = false;
};

unsigned hardware_threads();

}  // namespace ppsim
