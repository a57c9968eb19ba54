#include "ppsim/trace.hpp"

#include <fstream>
#include "json.hpp"
#include <sstream>

namespace ppsim {

using nlohmann::json;

void RawTrace::validate() const {
  require(timestamps.size() == latencies.size(), ErrorKind::invalid_argument,
          "trace timestamps and latencies differ in length");
  for (std::size_t i = 1; i < timestamps.size(); ++i)
    require(timestamps[i] > timestamps[i - 1], ErrorKind::invalid_argument,
            "trace timestamps must be strictly increasing");
  require(meta.end_tick >= meta.start_tick, ErrorKind::invalid_argument, "trace end precedes its start");
}

std::string trace_meta_json(const TraceMeta& m) {
  json j;
  j["set"] = m.set.set;
  j["slice"] = m.set.slice;
  j["config_digest"] = m.config_digest;
  j["seed"] = m.seed;
  j["trace_id"] = m.trace_id;
  j["threshold"] = m.threshold;
  j["probe_median"] = m.probe_median;
  j["counter_resolution"] = m.counter_resolution;
  j["start_tick"] = m.start_tick;
  j["end_tick"] = m.end_tick;
  return j.dump(2);
}

TraceMeta trace_meta_from_json(const std::string& text) {
  TraceMeta m;
  try {
    const json j = json::parse(text);
    m.set.set = j.at("set").get<std::uint32_t>();
    m.set.slice = j.at("slice").get<std::uint32_t>();
    m.config_digest = j.at("config_digest").get<std::uint64_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.trace_id = j.value("trace_id", 0u);
    m.threshold = j.at("threshold").get<double>();
    m.probe_median = j.value("probe_median", 0.0);
    m.counter_resolution = j.at("counter_resolution").get<double>();
    m.start_tick = j.at("start_tick").get<Ticks>();
    m.end_tick = j.at("end_tick").get<Ticks>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::io, std::string("bad trace metadata: ") + e.what());
  }
  return m;
}

void write_trace_csv(const RawTrace& t, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::io, "cannot write " + path);
  out << "timestamp,probe_latency\n";
  for (std::size_t i = 0; i < t.size(); ++i) out << t.timestamps[i] << ',' << t.latencies[i] << '\n';
  std::ofstream meta(path + ".meta.json");
  require(meta.good(), ErrorKind::io, "cannot write " + path + ".meta.json");
  meta << trace_meta_json(t.meta) << '\n';
}

RawTrace read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::io, "cannot read " + path);
  RawTrace t;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::io, path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "timestamp,probe_latency", ErrorKind::io, path + ": unexpected header '" + line + "'");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::istringstream ss(line);
    Ticks ts;
    std::uint64_t lat;
    char comma;
    if (!(ss >> ts >> comma >> lat) || comma != ',')
      throw Error(ErrorKind::io, path + ":" + std::to_string(lineno) + ": malformed row");
    t.timestamps.push_back(ts);
    t.latencies.push_back(lat);
  }
  std::ifstream meta(path + ".meta.json");
  if (meta.good()) {
    std::stringstream buf;
    buf << meta.rdbuf();
    t.meta = trace_meta_from_json(buf.str());
  } else if (!t.timestamps.empty()) {
    t.meta.start_tick = t.timestamps.front();
    t.meta.end_tick = t.timestamps.back();
  }
  t.validate();
  return t;
}

}  // namespace ppsim
