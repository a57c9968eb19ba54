#include "ppsim/sim_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ppsim/victim_rsa.hpp"

namespace ppsim {

namespace {

bool is_prob(double p) { return p >= 0.0 && p <= 1.0; }

constexpr std::uint64_t kNever = std::numeric_limits<std::uint64_t>::max();

}  // namespace

void NoiseConfig::validate() const {
  require(interrupt_rate >= 0.0 && std::isfinite(interrupt_rate), ErrorKind::config,
          "interrupt_rate must be a finite value >= 0");
  require(interrupt_min <= interrupt_max, ErrorKind::config, "interrupt_min must not exceed interrupt_max");
  require(is_prob(victim_desched_prob) && is_prob(attacker_desched_prob) && is_prob(both_desched_prob),
          ErrorKind::config, "desched probabilities must be in [0,1]");
  require(victim_desched_prob + attacker_desched_prob + both_desched_prob <= 1.0 + 1e-9, ErrorKind::config,
          "desched probabilities must sum to at most 1");
  require(is_prob(spurious_miss_rate), ErrorKind::config, "spurious_miss_rate must be in [0,1]");
}

NoiseConfig NoiseConfig::zero() {
  NoiseConfig n;
  n.interrupt_rate = 0.0;
  n.spurious_miss_rate = 0.0;
  return n;
}

void KernelConfig::validate() const {
  cache.validate();
  mapping.validate();
  dram.validate();
  noise.validate();
  require(cache.hit_latency < dram.row_hit, ErrorKind::config, "cache hit latency must be below DRAM latency");
  require(counter_resolution > 0.0 && counter_resolution < 1000.0, ErrorKind::config,
          "counter_resolution must be in (0, 1000)");
  require(cpu_hz > 0.0, ErrorKind::config, "cpu_hz must be positive");
}

InterruptSource::InterruptSource(const NoiseConfig& noise, std::uint64_t seed) : noise_(noise), rng_(seed) {}

void InterruptSource::script(std::vector<InterruptEvent> events) {
  std::stable_sort(events.begin(), events.end(),
                   [](const InterruptEvent& a, const InterruptEvent& b) { return a.start < b.start; });
  events_ = std::move(events);
  scripted_ = true;
}

const InterruptEvent* InterruptSource::at(std::size_t i) {
  if (scripted_ || noise_.interrupt_rate <= 0.0) return i < events_.size() ? &events_[i] : nullptr;
  const double mean_gap = 1e6 / noise_.interrupt_rate;
  while (events_.size() <= i) {
    InterruptEvent ev;
    const double gap = rng_.exponential(mean_gap);
    ev.start = last_start_ + static_cast<Cycles>(std::llround(gap));
    last_start_ = ev.start;
    ev.duration = rng_.range(noise_.interrupt_min, noise_.interrupt_max);
    const double u = rng_.uniform();
    if (u < noise_.victim_desched_prob)
      ev.target = InterruptTarget::victim;
    else if (u < noise_.victim_desched_prob + noise_.attacker_desched_prob)
      ev.target = InterruptTarget::attacker;
    else if (u < noise_.victim_desched_prob + noise_.attacker_desched_prob + noise_.both_desched_prob)
      ev.target = InterruptTarget::both;
    else
      ev.target = InterruptTarget::none;
    events_.push_back(ev);
  }
  return &events_[i];
}

Kernel::Kernel(const KernelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      cache_(cfg.cache, derive_seed(seed, 1)),
      dram_(cfg.mapping, cfg.dram, derive_seed(seed, 2)),
      interrupts_(cfg.noise, derive_seed(cfg.noise.rng_seed ? cfg.noise.rng_seed : seed, 3)),
      spurious_rng_(derive_seed(cfg.noise.rng_seed ? cfg.noise.rng_seed : seed, 4)) {
  cfg_.validate();
  res_ppm_ = static_cast<std::uint64_t>(std::llround(cfg_.counter_resolution * 1e6));
  countdown_ = spurious_rng_.geometric(cfg_.noise.spurious_miss_rate);
}

Kernel::~Kernel() = default;

Ticks Kernel::cycles_to_ticks(Cycles c) const {
  return static_cast<Ticks>(static_cast<unsigned __int128>(c) * 1'000'000u / res_ppm_);
}

Ticks Kernel::read_attacker_clock() const { return cycles_to_ticks(now_ - std::min(suspended_, now_)); }

void Kernel::apply_attacker_interrupts(Cycles upto) {
  for (;;) {
    const InterruptEvent* ev = interrupts_.at(attacker_cursor_);
    if (!ev || ev->start > upto) return;
    ++attacker_cursor_;
    if (!ev->hits_attacker()) continue;
    now_ = std::max(now_, ev->start) + ev->duration;
    if (ev->target == InterruptTarget::both) {
      suspended_ += ev->duration;
      ++stats_.interrupts_both;
    } else {
      ++stats_.interrupts_attacker;
    }
    upto = std::max(upto, now_);
  }
}

StepResult Kernel::step(Entity who, PhysicalAddress addr, bool repeat) {
  StepResult r;
  if (who == Entity::attacker) {
    const Cycles before = now_;
    apply_attacker_interrupts(now_);
    r.descheduled_for = now_ - before;
    sync_victim();
    if (cfg_.noise.spurious_miss_rate > 0.0) {
      if (countdown_ == 0) {
        cache_.touch(cache_.locate(addr), kForeignTagBit | foreign_serial_++);
        ++stats_.spurious_inserts;
        countdown_ = spurious_rng_.geometric(cfg_.noise.spurious_miss_rate);
      } else {
        --countdown_;
      }
    }
    const AccessOutcome out = cache_.access(addr, &dram_, repeat);
    ++stats_.attacker_accesses;
    if (!out.hit) ++stats_.attacker_misses;
    now_ += out.latency;
    r.latency = out.latency;
    r.hit = out.hit;
    return r;
  }
  const Cycles before = victim_now_;
  for (;;) {
    const InterruptEvent* ev = interrupts_.at(victim_cursor_);
    if (!ev || ev->start > victim_now_) break;
    ++victim_cursor_;
    if (!ev->hits_victim()) continue;
    victim_now_ = std::max(victim_now_, ev->start) + ev->duration;
    ++stats_.interrupts_victim;
  }
  r.descheduled_for = victim_now_ - before;
  const AccessOutcome out = cache_.access(addr, &dram_, repeat);
  ++stats_.victim_touches;
  victim_now_ += out.latency;
  r.latency = out.latency;
  r.hit = out.hit;
  return r;
}

void Kernel::advance_attacker(Cycles c) {
  now_ += c;
  apply_attacker_interrupts(now_);
}

void Kernel::set_observed(std::vector<CacheLocation> sets) {
  std::sort(sets.begin(), sets.end());
  sets.erase(std::unique(sets.begin(), sets.end()), sets.end());
  observed_ = std::move(sets);
}

bool Kernel::observed(CacheLocation loc) const {
  return std::binary_search(observed_.begin(), observed_.end(), loc);
}

void Kernel::attach_victim(VictimProcess* v) { victim_ = v; }

void Kernel::sync_victim() {
  if (victim_) victim_->run_until(now_, *this);
}

void Kernel::script_interrupts(std::vector<InterruptEvent> events) {
  interrupts_.script(std::move(events));
  attacker_cursor_ = 0;
  victim_cursor_ = 0;
}

void Kernel::victim_touch(PhysicalAddress addr) {
  cache_.access(addr, &dram_);
  ++stats_.victim_touches;
}

Cycles Kernel::next_external_event() {
  Cycles next = kNever;
  // A random stream whose events never reach the attacker would make the
  // search below endless.
  const bool may_hit = interrupts_.scripted() ||
                       cfg_.noise.attacker_desched_prob + cfg_.noise.both_desched_prob > 0.0;
  for (std::size_t i = attacker_cursor_; may_hit; ++i) {
    const InterruptEvent* ev = interrupts_.at(i);
    if (!ev) break;
    if (ev->hits_attacker()) {
      next = ev->start;
      break;
    }
  }
  if (victim_) {
    if (auto t = victim_->next_touch_time()) next = std::min(next, *t);
    if (auto t = victim_->next_interrupt_start(*this)) next = std::min(next, *t);
  }
  return next;
}

void Kernel::skip_probes(std::uint64_t n, Cycles probe_cycles, std::uint64_t accesses_per_probe) {
  if (n == 0) return;
  now_ += n * probe_cycles;
  const std::uint64_t accesses = n * accesses_per_probe;
  if (cfg_.noise.spurious_miss_rate > 0.0) countdown_ -= std::min(countdown_, accesses);
  stats_.attacker_accesses += accesses;
  stats_.skipped_probes += n;
}

}  // namespace ppsim
