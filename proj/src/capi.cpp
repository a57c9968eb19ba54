#include "ppsim/ppsim.h"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "json.hpp"
#include "ppsim/counting_timer.hpp"
#include "ppsim/harness.hpp"

struct ppsim_experiment {
  ppsim::ExperimentConfig cfg;
};

struct ppsim_timer {
  std::unique_ptr<ppsim::CountingTimer> timer;
};

namespace {

thread_local std::string g_last_error;

ppsim_status status_of(ppsim::ErrorKind k) {
  switch (k) {
    case ppsim::ErrorKind::invalid_argument: return PPSIM_ERR_INVALID_ARGUMENT;
    case ppsim::ErrorKind::config: return PPSIM_ERR_CONFIG;
    case ppsim::ErrorKind::io: return PPSIM_ERR_IO;
    case ppsim::ErrorKind::unsupported: return PPSIM_ERR_UNSUPPORTED;
    case ppsim::ErrorKind::not_found: return PPSIM_ERR_NOT_FOUND;
    case ppsim::ErrorKind::stage: return PPSIM_ERR_STAGE;
  }
  return PPSIM_ERR_INTERNAL;
}

template <class F>
ppsim_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return PPSIM_OK;
  } catch (const ppsim::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = e.what();
    return PPSIM_ERR_CONFIG;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PPSIM_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return PPSIM_ERR_INTERNAL;
  }
}

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

void put(char** out, const std::string& s) {
  if (out) *out = dup(s);
}

void need(const void* p, const char* what) {
  ppsim::require(p != nullptr, ppsim::ErrorKind::invalid_argument, std::string(what) + " is NULL");
}

std::string str_or_empty(const char* s) { return s ? s : ""; }

}  // namespace

extern "C" {

const char* ppsim_last_error(void) { return g_last_error.c_str(); }

const char* ppsim_version(void) { return "1.0.0"; }

void ppsim_string_free(char* s) { std::free(s); }

ppsim_status ppsim_experiment_create(const char* config_json, ppsim_experiment** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    auto e = std::make_unique<ppsim_experiment>();
    if (config_json && *config_json) e->cfg = ppsim::config_from_json(config_json);
    e->cfg.validate();
    *out = e.release();
  });
}

ppsim_status ppsim_experiment_load(const char* path, ppsim_experiment** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    auto e = std::make_unique<ppsim_experiment>();
    e->cfg = ppsim::load_config(path);
    *out = e.release();
  });
}

void ppsim_experiment_destroy(ppsim_experiment* exp) { delete exp; }

ppsim_status ppsim_experiment_config(const ppsim_experiment* exp, char** config_json) {
  return guarded([&] {
    need(exp, "experiment");
    put(config_json, ppsim::config_to_json(exp->cfg));
  });
}

ppsim_status ppsim_experiment_digest(const ppsim_experiment* exp, char** digest_hex) {
  return guarded([&] {
    need(exp, "experiment");
    put(digest_hex, ppsim::digest_hex(ppsim::config_digest(exp->cfg)));
  });
}

ppsim_status ppsim_experiment_set_traces(ppsim_experiment* exp, unsigned n_traces) {
  return guarded([&] {
    need(exp, "experiment");
    ppsim::require(n_traces >= 1, ppsim::ErrorKind::invalid_argument, "n_traces must be at least 1");
    exp->cfg.attack.n_traces = n_traces;
  });
}

ppsim_status ppsim_experiment_set_noise(ppsim_experiment* exp, const char* noise_json) {
  return guarded([&] {
    need(exp, "experiment");
    need(noise_json, "noise_json");
    ppsim::NoiseConfig n = ppsim::noise_from_json(noise_json);
    n.validate();
    exp->cfg.kernel.noise = n;
  });
}

ppsim_status ppsim_experiment_set_noise_file(ppsim_experiment* exp, const char* path) {
  return guarded([&] {
    need(exp, "experiment");
    need(path, "path");
    std::ifstream in(path);
    ppsim::require(in.good(), ppsim::ErrorKind::io, std::string("cannot read ") + path);
    std::stringstream ss;
    ss << in.rdbuf();
    auto j = nlohmann::json::parse(ss.str());
    // Calibration output wraps the noise object.
    if (j.contains("noise") && j["noise"].is_object()) j = j["noise"];
    ppsim::NoiseConfig n = ppsim::noise_from_json(j.dump());
    n.validate();
    exp->cfg.kernel.noise = n;
  });
}

ppsim_status ppsim_run_e2e(ppsim_experiment* exp, uint64_t seed, const char* out_dir, int write_traces,
                           char** report_json, char** timing_json) {
  return guarded([&] {
    need(exp, "experiment");
    ppsim::StageTiming timing;
    ppsim::RunOptions opt;
    opt.out_dir = str_or_empty(out_dir);
    opt.write_traces = write_traces != 0;
    opt.timing = &timing;
    const ppsim::ExperimentReport r = ppsim::run_end_to_end(exp->cfg, seed, opt);
    put(report_json, ppsim::report_to_json(r));
    put(timing_json, ppsim::timing_to_json(timing));
  });
}

ppsim_status ppsim_run_scan(ppsim_experiment* exp, uint64_t seed, const char* out_dir, char** scan_json) {
  return guarded([&] {
    need(exp, "experiment");
    const ppsim::ScanSummary s = ppsim::run_scan(exp->cfg, seed, str_or_empty(out_dir));
    put(scan_json, ppsim::scan_to_json(s));
  });
}

ppsim_status ppsim_run_monitor(ppsim_experiment* exp, uint64_t seed, unsigned n_traces, const char* out_dir,
                               char** summary_json) {
  return guarded([&] {
    need(exp, "experiment");
    const ppsim::MonitorRun m = ppsim::run_monitor(exp->cfg, seed, n_traces, str_or_empty(out_dir));
    nlohmann::json traces = nlohmann::json::array();
    for (std::size_t i = 0; i < m.traces.size(); ++i) {
      const auto& st = m.stats[i];
      traces.push_back({{"id", m.traces[i].meta.trace_id},
                        {"misses", m.traces[i].size()},
                        {"probes", st.probes},
                        {"skipped_probes", st.skipped_probes},
                        {"mean_probe_cycles", st.mean_probe_cycles},
                        {"median_probe_cycles", st.median_probe_cycles},
                        {"threshold", m.traces[i].meta.threshold},
                        {"monitored_cycles", st.monitored_cycles}});
    }
    put(summary_json, nlohmann::json{{"seed", seed},
                                     {"monitored_set", {{"set", m.set.set}, {"slice", m.set.slice}}},
                                     {"traces", traces},
                                     {"reference_hex", ppsim::bits_to_hex(m.reference)}}
                          .dump(2));
  });
}

ppsim_status ppsim_recover(ppsim_experiment* exp, const char* const* trace_paths, size_t n_paths,
                           const char* reference_hex, char** recovery_json) {
  return guarded([&] {
    need(exp, "experiment");
    ppsim::require(n_paths > 0 && trace_paths, ppsim::ErrorKind::invalid_argument, "no trace files given");
    std::vector<ppsim::RawTrace> traces;
    for (size_t i = 0; i < n_paths; ++i) {
      need(trace_paths[i], "trace path");
      traces.push_back(ppsim::read_trace_csv(trace_paths[i]));
    }
    std::optional<ppsim::Bits> ref;
    if (reference_hex && *reference_hex) {
      ref = ppsim::bits_from_hex(reference_hex);
      // Exponents start at their leading one; hex pads to whole nibbles.
      const auto first = std::find(ref->begin(), ref->end(), std::uint8_t{1});
      ref->erase(ref->begin(), first);
    }
    const ppsim::RecoveryReport r =
        ppsim::recover_traces(traces, exp->cfg.victim.key_bits, exp->cfg.attack.lookahead, exp->cfg.recovery, ref);
    put(recovery_json, ppsim::recovery_to_json(r));
  });
}

ppsim_status ppsim_sweep(ppsim_experiment* exp, uint64_t seed, const char* param, const double* values,
                         size_t n_values, unsigned runs, unsigned threads, char** table_csv, char** table_json) {
  return guarded([&] {
    need(exp, "experiment");
    need(param, "param");
    ppsim::require(n_values > 0 && values, ppsim::ErrorKind::invalid_argument, "no sweep values given");
    const ppsim::SweepTable t = ppsim::sweep(exp->cfg, seed, ppsim::sweep_param_from_string(param),
                                             std::vector<double>(values, values + n_values), runs, threads);
    put(table_csv, ppsim::sweep_to_csv(t));
    put(table_json, ppsim::sweep_to_json(t));
  });
}

ppsim_status ppsim_calibrate_noise(ppsim_experiment* exp, uint64_t seed, double target, unsigned budget,
                                   char** result_json) {
  return guarded([&] {
    need(exp, "experiment");
    const ppsim::NoiseCalibrationResult r = ppsim::calibrate_noise(exp->cfg, seed, target, budget);
    put(result_json, ppsim::calibration_to_json(r));
  });
}

ppsim_status ppsim_timer_create(const char* variant, int force, ppsim_timer** out) {
  return guarded([&] {
    need(variant, "variant");
    need(out, "out");
    *out = nullptr;
    auto t = std::make_unique<ppsim_timer>();
    t->timer = std::make_unique<ppsim::CountingTimer>(ppsim::timer_variant_from_string(variant), force != 0);
    *out = t.release();
  });
}

void ppsim_timer_destroy(ppsim_timer* t) { delete t; }

ppsim_status ppsim_timer_read(const ppsim_timer* t, uint64_t* value) {
  return guarded([&] {
    need(t, "timer");
    need(value, "value");
    *value = t->timer->read();
  });
}

ppsim_status ppsim_timer_stop(ppsim_timer* t) {
  return guarded([&] {
    need(t, "timer");
    t->timer->stop();
  });
}

ppsim_status ppsim_timer_calibrate(const ppsim_timer* t, double seconds, unsigned samples, char** calibration_json) {
  return guarded([&] {
    need(t, "timer");
    const ppsim::TimerCalibration c = t->timer->calibrate(seconds, samples);
    put(calibration_json, nlohmann::json{{"variant", ppsim::to_string(t->timer->variant())},
                                         {"increments_per_second", c.increments_per_second},
                                         {"stddev", c.stddev},
                                         {"increments_per_tsc_cycle", c.increments_per_tsc_cycle},
                                         {"samples", c.samples},
                                         {"seconds", c.seconds},
                                         {"unstable", c.unstable},
                                         {"pinned", t->timer->pinned()}}
                              .dump(2));
  });
}

unsigned ppsim_hardware_threads(void) { return ppsim::hardware_threads(); }

}  // extern "C"
