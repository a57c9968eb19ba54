#include "ppsim/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ppsim {

using nlohmann::json;

namespace {

class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    require(j_.is_object(), ErrorKind::config, "config section '" + name_ + "' must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [k, v] : j_.items())
      require(seen_.count(k) != 0, ErrorKind::config, "unknown config key '" + name_ + "." + k + "'");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorKind::config, "config key '" + name_ + "." + key + "' has the wrong type");
    }
  }

  void bits(const char* key, std::uint64_t& mask) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    std::vector<unsigned> b;
    try {
      b = j_.at(key).get<std::vector<unsigned>>();
    } catch (const json::exception&) {
      throw Error(ErrorKind::config, "config key '" + name_ + "." + key + "' must be a list of bit positions");
    }
    mask = DramMapping::mask_from_bits(b);
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& sub(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

void read_noise(Section& s, NoiseConfig& n) {
  s.get("interrupt_rate", n.interrupt_rate);
  s.get("interrupt_min", n.interrupt_min);
  s.get("interrupt_max", n.interrupt_max);
  s.get("victim_desched_prob", n.victim_desched_prob);
  s.get("attacker_desched_prob", n.attacker_desched_prob);
  s.get("both_desched_prob", n.both_desched_prob);
  s.get("spurious_miss_rate", n.spurious_miss_rate);
  s.get("rng_seed", n.rng_seed);
}

json noise_json(const NoiseConfig& n) {
  return {{"interrupt_rate", n.interrupt_rate},
          {"interrupt_min", n.interrupt_min},
          {"interrupt_max", n.interrupt_max},
          {"victim_desched_prob", n.victim_desched_prob},
          {"attacker_desched_prob", n.attacker_desched_prob},
          {"both_desched_prob", n.both_desched_prob},
          {"spurious_miss_rate", n.spurious_miss_rate},
          {"rng_seed", n.rng_seed}};
}

SetSource set_source_from_string(const std::string& s) {
  if (s == "scan") return SetSource::scan;
  if (s == "oracle") return SetSource::oracle;
  if (s == "fixed") return SetSource::fixed;
  throw Error(ErrorKind::config, "attack.set_source must be 'scan', 'oracle' or 'fixed'");
}

json to_json_value(const ExperimentConfig& c) {
  const auto& g = c.kernel.cache.geometry;
  const auto& cc = c.kernel.cache;
  const auto& m = c.kernel.mapping;
  const auto& d = c.kernel.dram;
  const auto& v = c.victim;
  const auto& a = c.attack;
  const auto& aa = a.attacker;
  const auto& r = c.recovery;
  json j;
  j["geometry"] = {{"n_sets", g.n_sets}, {"n_ways", g.n_ways}, {"n_slices", g.n_slices}};
  j["cache"] = {{"policy", to_string(cc.policy)},
                {"mru_insert_prob", cc.mru_insert_prob},
                {"lru_victim_prob", cc.lru_victim_prob},
                {"hit_latency", cc.hit_latency},
                {"repeat_hit_latency", cc.repeat_hit_latency},
                {"default_miss_latency", cc.default_miss_latency}};
  j["mapping"] = {{"channel", DramMapping::bits_from_mask(m.channel_mask)},
                  {"bg0", DramMapping::bits_from_mask(m.bg0_mask)},
                  {"bg1", DramMapping::bits_from_mask(m.bg1_mask)},
                  {"ba0", DramMapping::bits_from_mask(m.ba0_mask)},
                  {"ba1", DramMapping::bits_from_mask(m.ba1_mask)},
                  {"rank", DramMapping::bits_from_mask(m.rank_mask)},
                  {"row_low_bit", m.row_low_bit}};
  j["dram"] = {{"row_hit", d.row_hit}, {"closed_row", d.closed_row}, {"conflict", d.conflict}, {"jitter", d.jitter}};
  j["noise"] = noise_json(c.kernel.noise);
  j["kernel"] = {{"counter_resolution", c.kernel.counter_resolution},
                 {"cpu_hz", c.kernel.cpu_hz},
                 {"fast_forward", c.kernel.fast_forward}};
  j["victim"] = {{"key_bits", v.key_bits},
                 {"seed", v.seed},
                 {"randomize", v.randomize},
                 {"blinding", v.blinding},
                 {"k_touches", v.k_touches},
                 {"buffer_base", v.buffer_base},
                 {"heap_base", v.heap_base},
                 {"heap_size", v.heap_size},
                 {"shared_edge_lines", v.shared_edge_lines},
                 {"prefetch_buddy_prob", v.prefetch_buddy_prob},
                 {"burst_touch_interval", v.burst_touch_interval},
                 {"init_mults_min", v.init_mults_min},
                 {"init_mults_max", v.init_mults_max},
                 {"tail_mults", v.tail_mults},
                 {"start_delay_max", v.start_delay_max},
                 {"mult_cycles", v.mult_cycles},
                 {"attack_slowdown", v.attack_slowdown}};
  j["attack"] = {{"n_traces", a.n_traces},
                 {"lookahead", a.lookahead},
                 {"set_source", to_string(a.set_source)},
                 {"monitor_set", a.monitor_set},
                 {"monitor_slice", a.monitor_slice},
                 {"oracle_line", a.oracle_line},
                 {"memory_base", aa.memory_base},
                 {"memory_size", aa.memory_size},
                 {"hammer_rounds", aa.hammer_rounds},
                 {"rate_trials", aa.rate_trials},
                 {"rate_threshold", aa.rate_threshold},
                 {"calibration_probes", aa.calibration_probes},
                 {"monitor_seconds", aa.monitor_seconds},
                 {"tail_margin", aa.tail_margin},
                 {"scan_range_factor", aa.scan_range_factor},
                 {"scan_energy_gate", aa.scan_energy_gate},
                 {"scan_order", aa.scan_order},
                 {"scan_mode", aa.scan_mode},
                 {"threshold_override", aa.threshold_override}};
  j["recovery"] = {{"sample_interval", r.sample_interval},
                   {"window", r.window},
                   {"outlier_factor", r.outlier_factor},
                   {"peak_drop_ratio", r.peak_drop_ratio},
                   {"median_peaks", r.median_peaks},
                   {"burst_min_mults", r.burst_min_mults},
                   {"active_fraction", r.active_fraction},
                   {"tail_mults", r.tail_mults},
                   {"mult_time_override", r.mult_time_override},
                   {"t_iterations", r.t_iterations},
                   {"smooth_mults", r.smooth_mults}};
  j["output"] = {{"out_dir", c.output.out_dir}, {"write_traces", c.output.write_traces}};
  return j;
}

}  // namespace

std::string to_string(SetSource s) {
  switch (s) {
    case SetSource::scan: return "scan";
    case SetSource::oracle: return "oracle";
    case SetSource::fixed: return "fixed";
  }
  return "scan";
}

void ExperimentConfig::validate() const {
  kernel.validate();
  victim.validate();
  attack.attacker.validate();
  recovery.validate();
  require(attack.n_traces >= 1, ErrorKind::config, "attack.n_traces must be at least 1");
  require(attack.lookahead >= 1, ErrorKind::config, "attack.lookahead must be at least 1");
  require(victim.tail_mults == recovery.tail_mults, ErrorKind::config,
          "victim.tail_mults and recovery.tail_mults must agree");
  if (attack.set_source == SetSource::fixed) {
    require(attack.monitor_set < kernel.cache.geometry.n_sets, ErrorKind::config, "attack.monitor_set out of range");
    require(attack.monitor_slice < kernel.cache.geometry.n_slices, ErrorKind::config,
            "attack.monitor_slice out of range");
  }
}

ExperimentConfig config_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Section top(root, "config");
  if (top.has("geometry")) {
    Section s(top.sub("geometry"), "geometry");
    auto& g = c.kernel.cache.geometry;
    s.get("n_sets", g.n_sets);
    s.get("n_ways", g.n_ways);
    s.get("n_slices", g.n_slices);
  }
  if (top.has("cache")) {
    Section s(top.sub("cache"), "cache");
    auto& cc = c.kernel.cache;
    std::string policy = to_string(cc.policy);
    s.get("policy", policy);
    try {
      cc.policy = replacement_policy_from_string(policy);
    } catch (const Error& e) {
      throw Error(ErrorKind::config, e.what());
    }
    s.get("mru_insert_prob", cc.mru_insert_prob);
    s.get("lru_victim_prob", cc.lru_victim_prob);
    s.get("hit_latency", cc.hit_latency);
    s.get("repeat_hit_latency", cc.repeat_hit_latency);
    s.get("default_miss_latency", cc.default_miss_latency);
  }
  if (top.has("mapping")) {
    Section s(top.sub("mapping"), "mapping");
    auto& m = c.kernel.mapping;
    s.bits("channel", m.channel_mask);
    s.bits("bg0", m.bg0_mask);
    s.bits("bg1", m.bg1_mask);
    s.bits("ba0", m.ba0_mask);
    s.bits("ba1", m.ba1_mask);
    s.bits("rank", m.rank_mask);
    s.get("row_low_bit", m.row_low_bit);
  }
  if (top.has("dram")) {
    Section s(top.sub("dram"), "dram");
    auto& d = c.kernel.dram;
    s.get("row_hit", d.row_hit);
    s.get("closed_row", d.closed_row);
    s.get("conflict", d.conflict);
    s.get("jitter", d.jitter);
  }
  if (top.has("noise")) {
    Section s(top.sub("noise"), "noise");
    read_noise(s, c.kernel.noise);
  }
  if (top.has("kernel")) {
    Section s(top.sub("kernel"), "kernel");
    s.get("counter_resolution", c.kernel.counter_resolution);
    s.get("cpu_hz", c.kernel.cpu_hz);
    s.get("fast_forward", c.kernel.fast_forward);
  }
  if (top.has("victim")) {
    Section s(top.sub("victim"), "victim");
    auto& v = c.victim;
    s.get("key_bits", v.key_bits);
    s.get("seed", v.seed);
    s.get("randomize", v.randomize);
    s.get("blinding", v.blinding);
    s.get("k_touches", v.k_touches);
    s.get("buffer_base", v.buffer_base);
    s.get("heap_base", v.heap_base);
    s.get("heap_size", v.heap_size);
    s.get("shared_edge_lines", v.shared_edge_lines);
    s.get("prefetch_buddy_prob", v.prefetch_buddy_prob);
    s.get("burst_touch_interval", v.burst_touch_interval);
    s.get("init_mults_min", v.init_mults_min);
    s.get("init_mults_max", v.init_mults_max);
    s.get("tail_mults", v.tail_mults);
    s.get("start_delay_max", v.start_delay_max);
    s.get("mult_cycles", v.mult_cycles);
    s.get("attack_slowdown", v.attack_slowdown);
  }
  if (top.has("attack")) {
    Section s(top.sub("attack"), "attack");
    auto& a = c.attack;
    auto& aa = a.attacker;
    s.get("n_traces", a.n_traces);
    s.get("lookahead", a.lookahead);
    std::string src = to_string(a.set_source);
    s.get("set_source", src);
    a.set_source = set_source_from_string(src);
    s.get("monitor_set", a.monitor_set);
    s.get("monitor_slice", a.monitor_slice);
    s.get("oracle_line", a.oracle_line);
    s.get("memory_base", aa.memory_base);
    s.get("memory_size", aa.memory_size);
    s.get("hammer_rounds", aa.hammer_rounds);
    s.get("rate_trials", aa.rate_trials);
    s.get("rate_threshold", aa.rate_threshold);
    s.get("calibration_probes", aa.calibration_probes);
    s.get("monitor_seconds", aa.monitor_seconds);
    s.get("tail_margin", aa.tail_margin);
    s.get("scan_range_factor", aa.scan_range_factor);
    s.get("scan_energy_gate", aa.scan_energy_gate);
    s.get("scan_order", aa.scan_order);
    s.get("scan_mode", aa.scan_mode);
    s.get("threshold_override", aa.threshold_override);
  }
  if (top.has("recovery")) {
    Section s(top.sub("recovery"), "recovery");
    auto& r = c.recovery;
    s.get("sample_interval", r.sample_interval);
    s.get("window", r.window);
    s.get("outlier_factor", r.outlier_factor);
    s.get("peak_drop_ratio", r.peak_drop_ratio);
    s.get("median_peaks", r.median_peaks);
    s.get("burst_min_mults", r.burst_min_mults);
    s.get("active_fraction", r.active_fraction);
    s.get("tail_mults", r.tail_mults);
    s.get("mult_time_override", r.mult_time_override);
    s.get("t_iterations", r.t_iterations);
    s.get("smooth_mults", r.smooth_mults);
  }
  if (top.has("output")) {
    Section s(top.sub("output"), "output");
    s.get("out_dir", c.output.out_dir);
    s.get("write_traces", c.output.write_traces);
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::io, "cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::string config_to_json(const ExperimentConfig& cfg, int indent) { return to_json_value(cfg).dump(indent); }

std::string noise_to_json(const NoiseConfig& n, int indent) { return noise_json(n).dump(indent); }

NoiseConfig noise_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, std::string("noise config is not valid JSON: ") + e.what());
  }
  NoiseConfig n;
  {
    Section s(root, "noise");
    read_noise(s, n);
  }
  n.validate();
  return n;
}

std::uint64_t config_digest(const ExperimentConfig& cfg) {
  json j = to_json_value(cfg);
  j.erase("output");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string digest_hex(std::uint64_t d) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(d));
  return buf;
}

}  // namespace ppsim
