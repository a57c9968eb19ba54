#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ppsim/ppsim.h"

using nlohmann::json;

namespace {

struct Failure {
  int code;
};

void check(ppsim_status st, const char* what) {
  if (st == PPSIM_OK) return;
  std::cerr << "error: " << what << ": " << ppsim_last_error() << '\n';
  throw Failure{st == PPSIM_ERR_INVALID_ARGUMENT || st == PPSIM_ERR_CONFIG ? 2 : 3};
}

// Owns a string returned by the library.
struct Owned {
  char* p = nullptr;
  ~Owned() { ppsim_string_free(p); }
  std::string str() const { return p ? p : ""; }
  json parse() const { return json::parse(str()); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot read " << path << '\n';
    throw Failure{2};
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& dir, const std::string& name, const std::string& text) {
  std::filesystem::create_directories(dir);
  std::ofstream(std::filesystem::path(dir) / name) << text << (text.empty() || text.back() == '\n' ? "" : "\n");
}

struct Common {
  std::string config;
  std::string noise;
  std::uint64_t seed = 1;
  std::string out_dir;
  unsigned traces = 0;
  unsigned lookahead = 0;
  std::string set_source;
  bool quiet = false;
};

// Experiment handle with command-line overrides applied.
struct Experiment {
  ppsim_experiment* h = nullptr;
  json cfg;
  std::string out_dir;

  explicit Experiment(const Common& c) {
    std::string text = c.config.empty() ? "" : slurp(c.config);
    check(ppsim_experiment_create(text.c_str(), &h), "config");
    Owned o;
    check(ppsim_experiment_config(h, &o.p), "config");
    cfg = o.parse();
    bool changed = false;
    if (c.traces) cfg["attack"]["n_traces"] = c.traces, changed = true;
    if (c.lookahead) cfg["attack"]["lookahead"] = c.lookahead, changed = true;
    if (!c.set_source.empty()) cfg["attack"]["set_source"] = c.set_source, changed = true;
    if (changed) {
      ppsim_experiment_destroy(h);
      h = nullptr;
      check(ppsim_experiment_create(cfg.dump().c_str(), &h), "config");
    }
    if (!c.noise.empty()) {
      check(ppsim_experiment_set_noise_file(h, c.noise.c_str()), "noise");
      Owned n;
      check(ppsim_experiment_config(h, &n.p), "config");
      cfg = n.parse();
    }
    out_dir = c.out_dir.empty() ? cfg["output"]["out_dir"].get<std::string>() : c.out_dir;
  }
  ~Experiment() { ppsim_experiment_destroy(h); }
  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;
};

bool assertion(bool ok, const std::string& what) {
  std::cout << (ok ? "assert ok:   " : "assert FAIL: ") << what << '\n';
  return ok;
}

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

int cmd_e2e(const Common& c, bool no_trace_files, long max_errors, double max_partial) {
  Experiment e(c);
  Owned report, timing;
  const bool write_traces = !no_trace_files && e.cfg["output"]["write_traces"].get<bool>();
  check(ppsim_run_e2e(e.h, c.seed, e.out_dir.c_str(), write_traces, &report.p, &timing.p), "e2e");
  const json r = report.parse(), t = timing.parse();
  if (!c.quiet) {
    std::cout << "config " << r["config_digest"].get<std::string>() << "  seed " << c.seed << '\n';
    std::cout << "monitored set " << r["monitored_set"]["set"] << " slice " << r["monitored_set"]["slice"]
              << " (" << r["set_source"].get<std::string>() << "), eviction set size " << r["eviction_set_size"]
              << '\n';
    if (r["scan"]["performed"].get<bool>())
      std::cout << "scan: " << r["scan"]["trials"] << " sets examined, first hit after "
                << r["scan"]["trials_to_first_hit"] << " (" << fmt(r["scan"]["seconds_to_first_hit"], 3)
                << " s simulated)\n";
    for (const auto& tr : r["traces"])
      std::cout << "trace " << tr["id"] << ": partial error " << fmt(tr["partial_error"]) << " ("
                << tr["edit_distance"] << " edits, " << tr["partial_bits"] << " bits)"
                << (tr["decoded"].get<bool>() ? "" : "  decode failed: " + tr["decode_error"].get<std::string>())
                << '\n';
    std::cout << "mean partial error " << fmt(r["mean_partial_error"]) << ", merged bit errors "
              << r["merged_bit_errors"] << " (" << r["traces"].size() << " traces, lookahead " << r["lookahead"]
              << ")\n";
    std::cout << "wall time " << fmt(t["total_seconds"], 2) << " s, output in " << e.out_dir << '\n';
  }
  bool ok = true;
  if (max_errors >= 0)
    ok &= assertion(r["merged_bit_errors"].get<long>() <= max_errors,
                    "merged bit errors " + r["merged_bit_errors"].dump() + " <= " + std::to_string(max_errors));
  if (max_partial >= 0)
    ok &= assertion(r["mean_partial_error"].get<double>() <= max_partial,
                    "mean partial error " + fmt(r["mean_partial_error"]) + " <= " + fmt(max_partial));
  return ok ? 0 : 1;
}

int cmd_sweep(const Common& c, const std::string& param, const std::vector<double>& values, unsigned runs,
              unsigned threads, bool assert_nonincreasing) {
  Experiment e(c);
  Owned csv, js;
  check(ppsim_sweep(e.h, c.seed, param.c_str(), values.data(), values.size(), runs, threads, &csv.p, &js.p),
        "sweep");
  spit(e.out_dir, "sweep_" + param + ".csv", csv.str());
  spit(e.out_dir, "sweep_" + param + ".json", js.str());
  std::cout << csv.str();
  if (!assert_nonincreasing) return 0;
  const json t = js.parse();
  bool mono = true;
  for (std::size_t i = 1; i < t["rows"].size(); ++i)
    mono &= t["rows"][i]["mean"].get<double>() <= t["rows"][i - 1]["mean"].get<double>();
  return assertion(mono, "mean errors nonincreasing over " + param) ? 0 : 1;
}

int cmd_calibrate(const Common& c, double target, unsigned budget, bool assert_converged) {
  Experiment e(c);
  Owned res;
  check(ppsim_calibrate_noise(e.h, c.seed, target, budget, &res.p), "calibrate");
  const json r = res.parse();
  spit(e.out_dir, "noise.json", res.str());
  std::cout << res.str() << '\n';
  std::cout << "noise written to " << e.out_dir << "/noise.json (reuse with --noise)\n";
  if (!assert_converged) return 0;
  return assertion(r["converged"].get<bool>(), "calibration converged to " + fmt(target)) ? 0 : 1;
}

int cmd_scan(const Common& c, bool assert_found) {
  Experiment e(c);
  Owned res;
  check(ppsim_run_scan(e.h, c.seed, e.out_dir.c_str(), &res.p), "scan");
  const json s = res.parse();
  std::cout << res.str() << '\n';
  if (!assert_found) return 0;
  return assertion(!s["matches"].empty(), "vulnerable set found") ? 0 : 1;
}

int cmd_monitor(const Common& c, unsigned n) {
  Experiment e(c);
  Owned res;
  if (!n) n = e.cfg["attack"]["n_traces"].get<unsigned>();
  check(ppsim_run_monitor(e.h, c.seed, n, e.out_dir.c_str(), &res.p), "monitor");
  json s = res.parse();
  s.erase("reference_hex");
  std::cout << s.dump(2) << '\n' << "traces written to " << e.out_dir << '\n';
  return 0;
}

int cmd_recover(const Common& c, const std::vector<std::string>& files, const std::string& reference,
                long max_errors) {
  Experiment e(c);
  std::vector<const char*> paths;
  for (const auto& f : files) paths.push_back(f.c_str());
  const std::string ref = reference.empty() ? "" : slurp(reference);
  Owned res;
  check(ppsim_recover(e.h, paths.data(), paths.size(), ref.empty() ? nullptr : ref.c_str(), &res.p), "recover");
  const json r = res.parse();
  if (!c.out_dir.empty()) {
    spit(c.out_dir, "recovery.json", res.str());
    spit(c.out_dir, "key.hex", r["recovered_hex"].get<std::string>());
  }
  for (const auto& tr : r["traces"])
    std::cout << "trace " << tr["id"] << ": " << tr["partial_bits"] << " bits"
              << (ref.empty() ? "" : ", partial error " + fmt(tr["partial_error"])) << '\n';
  std::cout << "recovered " << r["recovered_bits"] << " bits";
  if (!r["bit_errors"].is_null()) std::cout << ", " << r["bit_errors"] << " bit errors";
  std::cout << "\n" << r["recovered_hex"].get<std::string>() << '\n';
  if (max_errors < 0) return 0;
  if (r["bit_errors"].is_null()) return assertion(false, "bit errors need --reference") ? 0 : 1;
  return assertion(r["bit_errors"].get<long>() <= max_errors, "bit errors <= " + std::to_string(max_errors)) ? 0
                                                                                                               : 1;
}

int cmd_timer_bench(double seconds, unsigned samples, bool force, bool assert_faster) {
  const unsigned hw = ppsim_hardware_threads();
  std::cout << "hardware threads: " << hw << '\n';
  std::vector<json> rows;
  for (const char* v : {"memory_inc", "shadow_register"}) {
    ppsim_timer* t = nullptr;
    const ppsim_status st = ppsim_timer_create(v, force, &t);
    if (st == PPSIM_ERR_UNSUPPORTED) {
      std::cout << "skipped: " << ppsim_last_error() << '\n';
      return assert_faster ? 1 : 0;
    }
    check(st, "timer");
    Owned cal;
    const ppsim_status cs = ppsim_timer_calibrate(t, seconds, samples, &cal.p);
    ppsim_timer_destroy(t);
    check(cs, "timer calibration");
    rows.push_back(cal.parse());
  }
  const double ref = rows[1]["increments_per_second"].get<double>();
  std::printf("%-16s %16s %10s %14s %12s %9s %7s\n", "variant", "increments/s", "stddev%", "per TSC cycle",
              "vs shadow", "unstable", "pinned");
  for (const auto& r : rows) {
    const double rate = r["increments_per_second"].get<double>();
    std::printf("%-16s %16.4g %10.2f %14.4f %12.3f %9s %7s\n", r["variant"].get<std::string>().c_str(), rate,
                rate > 0 ? 100.0 * r["stddev"].get<double>() / rate : 0.0,
                r["increments_per_tsc_cycle"].get<double>(), ref > 0 ? rate / ref : 0.0,
                r["unstable"].get<bool>() ? "yes" : "no", r["pinned"].get<bool>() ? "yes" : "no");
  }
  const double tsc = rows[1]["increments_per_tsc_cycle"].get<double>();
  if (tsc > 0) std::printf("shadow_register: %.3f cycles per increment (reference machine: 0.87)\n", 1.0 / tsc);
  if (!assert_faster) return 0;
  return assertion(ref > rows[0]["increments_per_second"].get<double>(), "shadow_register faster than memory_inc")
             ? 0
             : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prime+Probe attack simulator"};
  app.require_subcommand(1);
  Common c;
  auto add_common = [&](CLI::App* s, bool experiment = true) {
    s->add_option("--seed", c.seed, "experiment seed");
    s->add_option("--out-dir", c.out_dir, "output directory");
    if (!experiment) return;
    s->add_option("--config", c.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    s->add_option("--noise", c.noise, "noise JSON from `calibrate`")->check(CLI::ExistingFile);
    s->add_option("--traces", c.traces, "number of traces")->check(CLI::PositiveNumber);
    s->add_option("--lookahead", c.lookahead, "merge lookahead window")->check(CLI::PositiveNumber);
    s->add_option("--set-source", c.set_source, "scan | oracle | fixed")
        ->check(CLI::IsMember({"scan", "oracle", "fixed"}));
    s->add_flag("-q,--quiet", c.quiet);
  };

  auto* e2e = app.add_subcommand("e2e", "scan, monitor and recover a key");
  add_common(e2e);
  bool no_trace_files = false;
  long max_errors = -1;
  double max_partial = -1;
  e2e->add_flag("--no-trace-files", no_trace_files, "skip writing raw traces");
  e2e->add_option("--assert-max-errors", max_errors, "fail if merged bit errors exceed this");
  e2e->add_option("--assert-max-partial-error", max_partial, "fail if mean partial-key error exceeds this");

  auto* sw = app.add_subcommand("sweep", "repeat runs over a parameter");
  add_common(sw);
  std::string param = "n_traces";
  std::vector<double> values;
  unsigned runs = 5, threads = 0;
  bool assert_nonincreasing = false;
  sw->add_option("--param", param)->check(CLI::IsMember({"n_traces", "lookahead", "noise_scale"}));
  sw->add_option("--values", values)->required()->delimiter(',');
  sw->add_option("--runs", runs)->check(CLI::PositiveNumber);
  sw->add_option("--threads", threads, "0 uses all cores");
  sw->add_flag("--assert-nonincreasing", assert_nonincreasing);

  auto* cal = app.add_subcommand("calibrate", "fit noise rates to a single-trace error");
  add_common(cal);
  double target = 0.04;
  unsigned budget = 200;
  bool assert_converged = false;
  cal->add_option("--target", target)->check(CLI::Range(0.0, 0.5));
  cal->add_option("--budget", budget, "traces to spend");
  cal->add_flag("--assert-converged", assert_converged);

  auto* sc = app.add_subcommand("scan", "search for vulnerable cache sets");
  add_common(sc);
  bool assert_found = false;
  sc->add_flag("--assert-found", assert_found);

  auto* mon = app.add_subcommand("monitor", "record raw traces");
  add_common(mon);

  auto* rec = app.add_subcommand("recover", "decode and merge trace files");
  add_common(rec);
  std::vector<std::string> files;
  std::string reference;
  long rec_max_errors = -1;
  rec->add_option("files", files, "trace CSV files")->required()->check(CLI::ExistingFile);
  rec->add_option("--reference", reference, "file with the true exponent in hex")->check(CLI::ExistingFile);
  rec->add_option("--assert-max-errors", rec_max_errors);

  auto* tb = app.add_subcommand("timer-bench", "measure real counting-thread timers");
  double seconds = 0.5;
  unsigned samples = 10;
  bool force = false, assert_faster = false;
  tb->add_option("--seconds", seconds)->check(CLI::Range(0.1, 60.0));
  tb->add_option("--samples", samples)->check(CLI::Range(2, 1000));
  tb->add_flag("--force", force, "run even with a single hardware thread");
  tb->add_flag("--assert-shadow-faster", assert_faster);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*e2e) return cmd_e2e(c, no_trace_files, max_errors, max_partial);
    if (*sw) return cmd_sweep(c, param, values, runs, threads, assert_nonincreasing);
    if (*cal) return cmd_calibrate(c, target, budget, assert_converged);
    if (*sc) return cmd_scan(c, assert_found);
    if (*mon) return cmd_monitor(c, c.traces);
    if (*rec) return cmd_recover(c, files, reference, rec_max_errors);
    if (*tb) return cmd_timer_bench(seconds, samples, force, assert_faster);
  } catch (const Failure& f) {
    return f.code;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 3;
  }
  return 0;
}
