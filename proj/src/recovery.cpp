#include "ppsim/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

namespace ppsim {

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

long long round_half_away(double x) { return std::llround(x); }

struct Run {
  std::size_t begin;
  std::size_t end;  // inclusive
  std::size_t length() const { return end - begin + 1; }
};

}  // namespace

void RecoveryConfig::validate() const {
  require(sample_interval > 0 && window >= sample_interval, ErrorKind::config,
          "resampling needs 0 < sample_interval <= window");
  require(outlier_factor > 1.0, ErrorKind::config, "outlier_factor must exceed 1");
  require(smooth_mults > 0.0 && smooth_mults <= 4.0, ErrorKind::config, "smooth_mults must be in (0,4]");
  require(peak_drop_ratio > 0.0 && peak_drop_ratio <= 1.0, ErrorKind::config, "peak_drop_ratio must be in (0,1]");
  require(median_peaks >= 1, ErrorKind::config, "median_peaks must be at least 1");
  require(burst_min_mults > 1.0, ErrorKind::config, "burst_min_mults must exceed 1");
  require(active_fraction > 0.0 && active_fraction < 1.0, ErrorKind::config, "active_fraction must be in (0,1)");
  require(mult_time_override >= 0.0, ErrorKind::config, "mult_time_override must be >= 0");
}

ResampledTrace resample(const RawTrace& raw, const RecoveryConfig& cfg) {
  cfg.validate();
  raw.validate();
  const Ticks span = raw.meta.end_tick - raw.meta.start_tick;
  require(span >= cfg.window, ErrorKind::invalid_argument,
          "trace spans " + std::to_string(span) + " ticks, shorter than one resampling window");
  ResampledTrace rt;
  rt.start = raw.meta.start_tick;
  rt.interval = cfg.sample_interval;
  rt.window = cfg.window;
  const std::size_t n = static_cast<std::size_t>(span / cfg.sample_interval);
  rt.values.assign(n, 0.0);
  rt.interpolated.assign(n, 0);

  double reference = raw.meta.probe_median;
  if (reference <= 0.0) {
    std::vector<double> lat(raw.latencies.begin(), raw.latencies.end());
    reference = median_of(lat);
  }
  const double limit = cfg.outlier_factor * reference;
  const double res = raw.meta.counter_resolution > 0 ? raw.meta.counter_resolution : 1.0;

  std::vector<std::pair<std::int64_t, double>> kept;
  std::vector<std::pair<std::int64_t, std::int64_t>> holes;
  kept.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto ts = static_cast<std::int64_t>(raw.timestamps[i]);
    const double l = static_cast<double>(raw.latencies[i]);
    if (l > limit) {
      const auto dur = static_cast<std::int64_t>(std::ceil(l / res));
      holes.emplace_back(ts - dur, ts);
    } else {
      kept.emplace_back(ts, l * l);
    }
  }

  const auto half = static_cast<std::int64_t>(cfg.window / 2);
  const auto step = static_cast<std::int64_t>(cfg.sample_interval);
  const auto origin = static_cast<std::int64_t>(rt.start);
  const double norm = static_cast<double>(cfg.window);
  std::size_t lo = 0, hi = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::int64_t p = origin + static_cast<std::int64_t>(k) * step;
    while (hi < kept.size() && kept[hi].first < p + half) sum += kept[hi++].second;
    while (lo < hi && kept[lo].first < p - half) sum -= kept[lo++].second;
    // Recompute from scratch now and then to keep rounding from drifting.
    if (k % 4096 == 0) {
      sum = 0.0;
      for (std::size_t j = lo; j < hi; ++j) sum += kept[j].second;
    }
    rt.values[k] = std::max(0.0, sum) / norm;
  }

  for (const auto& [a, b] : holes) {
    const std::int64_t first = (a - half - origin) / step;
    const std::int64_t last = (b + half - origin) / step;
    for (std::int64_t k = std::max<std::int64_t>(0, first - 1); k <= last + 1; ++k) {
      if (k >= static_cast<std::int64_t>(n)) break;
      const std::int64_t p = origin + k * step;
      if (p - half <= b && p + half > a) rt.interpolated[static_cast<std::size_t>(k)] = 1;
    }
  }
  std::size_t k = 0;
  while (k < n) {
    if (!rt.interpolated[k]) {
      ++k;
      continue;
    }
    std::size_t e = k;
    while (e < n && rt.interpolated[e]) ++e;
    const bool has_left = k > 0, has_right = e < n;
    const double left = has_left ? rt.values[k - 1] : (has_right ? rt.values[e] : 0.0);
    const double right = has_right ? rt.values[e] : left;
    const double width = static_cast<double>(e - k + 1);
    for (std::size_t j = k; j < e; ++j) {
      const double f = static_cast<double>(j - k + 1) / width;
      rt.values[j] = left + (right - left) * f;
    }
    k = e;
  }
  return rt;
}

std::vector<Peak> detect_peaks(const ResampledTrace& rt, double mult_time, const RecoveryConfig& cfg) {
  require(mult_time > 0.0, ErrorKind::invalid_argument, "mult_time must be positive");
  const std::size_t n = rt.values.size();
  std::vector<Peak> out;
  if (n < 3) return out;
  const auto w = static_cast<std::size_t>(
      std::max<long long>(1, std::llround(cfg.smooth_mults * mult_time / static_cast<double>(rt.interval))));
  const std::size_t left_half = w / 2;
  std::vector<double> s(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto lo = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(left_half);
    const auto a = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, lo));
    const auto b = static_cast<std::size_t>(std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n),
                                                                     lo + static_cast<std::ptrdiff_t>(w)));
    double acc = 0.0;
    for (std::size_t j = a; j < b; ++j) acc += rt.values[j];
    s[i] = acc / static_cast<double>(w);
  }
  const double top = *std::max_element(s.begin(), s.end());
  if (top <= 0.0) return out;
  const double tol = top * 1e-9;

  std::vector<Peak> raw;
  std::size_t i = 1;
  while (i + 1 < n) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(s[j + 1] - s[i]) <= tol) ++j;
    if (j + 1 < n && s[i] > tol && s[i - 1] < s[i] - tol && s[j + 1] < s[i] - tol)
      raw.push_back({rt.time_of(0.5 * static_cast<double>(i + j)), s[i]});
    i = j + 1;
  }

  std::vector<Peak> merged;
  for (const Peak& p : raw) {
    if (!merged.empty() && p.time - merged.back().time < mult_time) {
      if (p.value > merged.back().value) merged.back() = p;
    } else {
      merged.push_back(p);
    }
  }

  std::deque<double> recent;
  for (const Peak& p : merged) {
    if (!recent.empty()) {
      const double med = median_of({recent.begin(), recent.end()});
      if (p.value < cfg.peak_drop_ratio * med) continue;
    }
    out.push_back(p);
    recent.push_back(p.value);
    if (recent.size() > cfg.median_peaks) recent.pop_front();
  }
  return out;
}

PartialKey extract_partial_key(const std::vector<double>& peak_times, double mult_time, std::optional<double> anchor,
                               std::optional<double> exp_end) {
  require(mult_time > 0.0, ErrorKind::invalid_argument, "mult_time must be positive");
  require(!peak_times.empty(), ErrorKind::invalid_argument, "cannot extract a key without peaks");
  PartialKey key;
  auto zeros = [&](long long z) {
    for (long long k = 0; k < z; ++k) key.bits.push_back(0);
  };
  if (anchor) {
    const long long z = round_half_away((peak_times.front() - *anchor) / mult_time) - 2;
    // Two or more missing multiplications before the first peak: the
    // leading 1 itself was not observed.
    if (z >= 2) {
      key.bits.push_back(1);
      zeros(z - 2);
    }
  }
  key.bits.push_back(1);
  for (std::size_t i = 1; i < peak_times.size(); ++i) {
    const long long z = round_half_away((peak_times[i] - peak_times[i - 1]) / mult_time) - 2;
    zeros(std::max(0LL, z));
    key.bits.push_back(1);
  }
  if (exp_end) {
    const long long z = round_half_away((*exp_end - peak_times.back()) / mult_time - 0.5);
    zeros(std::max(0LL, z));
  }
  return key;
}

DecodeResult decode_resampled(const ResampledTrace& rt, std::size_t key_bits, const RecoveryConfig& cfg) {
  cfg.validate();
  require(key_bits >= 2, ErrorKind::invalid_argument, "key_bits must be at least 2");
  const std::size_t n = rt.values.size();
  std::vector<double> sorted(rt.values);
  std::sort(sorted.begin(), sorted.end());
  const double p95 = n ? sorted[std::min(n - 1, static_cast<std::size_t>(0.95 * static_cast<double>(n)))] : 0.0;
  require(p95 > 0.0, ErrorKind::stage, "trace shows no cache activity");
  const double level = cfg.active_fraction * p95;

  std::vector<Run> runs;
  for (std::size_t i = 0; i < n;) {
    if (rt.values[i] <= level) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < n && rt.values[j + 1] > level) ++j;
    runs.push_back({i, j});
    i = j + 1;
  }
  require(runs.size() >= 2, ErrorKind::stage, "trace has fewer than two activity bursts");

  const double interval = static_cast<double>(rt.interval);
  const double window = static_cast<double>(rt.window);
  double t_guess = cfg.mult_time_override;
  if (t_guess <= 0.0) {
    std::vector<double> lens;
    lens.reserve(runs.size());
    for (const Run& r : runs) lens.push_back(static_cast<double>(r.length()));
    t_guess = std::max(interval, median_of(lens) * interval - window);
  }
  const double min_burst = cfg.burst_min_mults * t_guess + window;
  const Run* init = nullptr;
  const Run* clear = nullptr;
  for (const Run& r : runs)
    if (static_cast<double>(r.length()) * interval >= min_burst) {
      if (!init) init = &r;
      clear = &r;
    }
  require(init && clear && init != clear, ErrorKind::stage,
          "could not locate both the initialization and the clearing burst");

  DecodeResult res;
  res.exp_start = rt.time_of(static_cast<double>(init->end)) - window / 2;
  const double clear_start = rt.time_of(static_cast<double>(clear->begin)) + window / 2;
  const double span = clear_start - res.exp_start;
  require(span > 0.0, ErrorKind::stage, "bursts overlap");

  double t = cfg.mult_time_override > 0.0 ? cfg.mult_time_override
                                          : span / (1.5 * static_cast<double>(key_bits) + cfg.tail_mults);
  auto in_range = [&](const std::vector<Peak>& peaks, double lo, double hi) {
    std::vector<Peak> sel;
    for (const Peak& p : peaks)
      if (p.time > lo && p.time < hi) sel.push_back(p);
    return sel;
  };
  if (cfg.mult_time_override <= 0.0) {
    for (unsigned it = 0; it < cfg.t_iterations; ++it) {
      const auto peaks = in_range(detect_peaks(rt, t, cfg), res.exp_start, clear_start - cfg.tail_mults * t);
      t = span / (static_cast<double>(key_bits + peaks.size()) + cfg.tail_mults);
    }
    // Interrupt delays stretch the span but rarely the short gaps, so the
    // median short gap per multiplication count is the steadier estimate.
    for (unsigned it = 0; it < cfg.t_iterations; ++it) {
      const auto peaks = in_range(detect_peaks(rt, t, cfg), res.exp_start, clear_start - cfg.tail_mults * t);
      std::vector<double> per_mult;
      for (std::size_t i = 1; i < peaks.size(); ++i) {
        const double g = peaks[i].time - peaks[i - 1].time;
        const long long m = round_half_away(g / t);
        if (m >= 2 && m <= 6) per_mult.push_back(g / static_cast<double>(m));
      }
      if (per_mult.size() >= 16) t = median_of(per_mult);
    }
  }
  res.mult_time = t;
  res.exp_end = clear_start - cfg.tail_mults * t;
  res.peaks = in_range(detect_peaks(rt, t, cfg), res.exp_start, res.exp_end);
  res.n_peaks = res.peaks.size();
  require(!res.peaks.empty(), ErrorKind::stage, "no multiplication peaks between the bursts");
  std::vector<double> times;
  times.reserve(res.peaks.size());
  for (const Peak& p : res.peaks) times.push_back(p.time);
  res.key = extract_partial_key(times, t, res.exp_start - 0.5 * t, res.exp_end);
  return res;
}

DecodeResult decode_trace(const RawTrace& raw, std::size_t key_bits, const RecoveryConfig& cfg) {
  DecodeResult r = decode_resampled(resample(raw, cfg), key_bits, cfg);
  r.key.source = raw.meta.trace_id;
  return r;
}

std::size_t levenshtein(const Bits& a, const Bits& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] != b[j - 1]);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

namespace {

// With free_tail, unmatched trailing bits of either sequence cost nothing,
// so a window shifted by s bits aligns at cost s.
EditScript align(const Bits& a, const Bits& b, bool free_tail) {
  const std::size_t n = a.size(), m = b.size();
  // d[x][y]: distance between the suffixes a[x:] and b[y:].
  std::vector<std::uint32_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t x, std::size_t y) -> std::uint32_t& { return d[x * (m + 1) + y]; };
  for (std::size_t x = n + 1; x-- > 0;)
    for (std::size_t y = m + 1; y-- > 0;) {
      if (x == n)
        at(x, y) = free_tail ? 0u : static_cast<std::uint32_t>(m - y);
      else if (y == m)
        at(x, y) = free_tail ? 0u : static_cast<std::uint32_t>(n - x);
      else
        at(x, y) = std::min({at(x + 1, y + 1) + (a[x] != b[y] ? 1u : 0u), at(x + 1, y) + 1, at(x, y + 1) + 1});
    }
  EditScript s;
  s.distance = at(0, 0);
  std::size_t x = 0, y = 0;
  while (x < n || y < m) {
    const std::uint32_t here = at(x, y);
    if (free_tail && (x == n || y == m)) break;
    if (x < n && y < m && a[x] == b[y] && here == at(x + 1, y + 1)) {
      s.actions.push_back({EditKind::match, y, b[y]});
      ++x;
      ++y;
    } else if (x < n && y < m && a[x] != b[y] && here == at(x + 1, y + 1) + 1) {
      s.actions.push_back({EditKind::substitute, y, b[y]});
      ++x;
      ++y;
    } else if (x < n && here == at(x + 1, y) + 1) {
      s.actions.push_back({EditKind::del, y, a[x]});
      ++x;
    } else {
      s.actions.push_back({EditKind::insert, y, b[y]});
      ++y;
    }
  }
  return s;
}

}  // namespace

EditScript edit_distance_actions(const Bits& a, const Bits& b) { return align(a, b, false); }

Bits apply_actions(const Bits& source, const std::vector<EditAction>& actions) {
  Bits out(source);
  for (const EditAction& act : actions) {
    require(act.position <= out.size(), ErrorKind::invalid_argument, "edit action position out of range");
    switch (act.kind) {
      case EditKind::match:
        require(act.position < out.size() && out[act.position] == act.value, ErrorKind::invalid_argument,
                "match action does not match");
        break;
      case EditKind::substitute:
        require(act.position < out.size(), ErrorKind::invalid_argument, "substitute past the end");
        out[act.position] = act.value;
        break;
      case EditKind::insert:
        out.insert(out.begin() + static_cast<std::ptrdiff_t>(act.position), act.value);
        break;
      case EditKind::del:
        require(act.position < out.size(), ErrorKind::invalid_argument, "delete past the end");
        out.erase(out.begin() + static_cast<std::ptrdiff_t>(act.position));
        break;
    }
  }
  return out;
}

namespace {

Bits window_of(const Bits& k, std::size_t i, std::size_t len) {
  if (i >= k.size()) return {};
  const std::size_t end = std::min(k.size(), i + len);
  return Bits(k.begin() + static_cast<std::ptrdiff_t>(i), k.begin() + static_cast<std::ptrdiff_t>(end));
}

int kind_rank(EditKind k) {
  switch (k) {
    case EditKind::match: return 0;
    case EditKind::substitute: return 1;
    case EditKind::del: return 2;
    case EditKind::insert: return 3;
  }
  return 4;
}

}  // namespace

MergeResult merge_keys(const std::vector<PartialKey>& partials, std::size_t lookahead, bool record_corrections) {
  require(!partials.empty(), ErrorKind::invalid_argument, "merge needs at least one partial key");
  require(lookahead >= 1, ErrorKind::invalid_argument, "lookahead must be at least 1");
  std::vector<Bits> keys;
  keys.reserve(partials.size());
  for (const auto& p : partials) keys.push_back(p.bits);
  const std::size_t nk = keys.size();
  MergeResult res;
  res.corrections_per_key.assign(nk, 0);

  for (std::size_t i = 0;; ++i) {
    std::size_t ones = 0, zeros = 0;
    for (const Bits& k : keys)
      if (i < k.size()) (k[i] ? ones : zeros)++;
    const std::size_t exhausted = nk - ones - zeros;
    if (2 * exhausted > nk || ones + zeros == 0) break;
    if (ones == zeros) ++res.ties;
    const std::uint8_t bit = ones >= zeros ? 1 : 0;
    res.bits.push_back(bit);

    std::vector<std::size_t> correct, wrong;
    for (std::size_t k = 0; k < nk; ++k) {
      if (i >= keys[k].size()) continue;
      (keys[k][i] == bit ? correct : wrong).push_back(k);
    }
    for (std::size_t w : wrong) {
      Bits& kw = keys[w];
      std::vector<std::vector<EditAction>> scripts;
      scripts.reserve(correct.size());
      const Bits src = window_of(kw, i, lookahead);
      for (std::size_t c : correct) scripts.push_back(align(src, window_of(keys[c], i, lookahead), true).actions);

      for (std::size_t ai = 0; i < kw.size() && kw[i] != bit; ++ai) {
        EditAction chosen{EditKind::substitute, i, bit};
        if (ai < 4 * lookahead) {
          // Vote over the actions at this index, ties broken by the same
          // preference order as the alignment itself.
          std::vector<std::pair<EditAction, std::size_t>> votes;
          for (const auto& sc : scripts) {
            if (ai >= sc.size()) continue;
            EditAction a = sc[ai];
            a.position = 0;
            auto it = std::find_if(votes.begin(), votes.end(), [&](const auto& v) { return v.first == a; });
            if (it == votes.end())
              votes.emplace_back(a, 1);
            else
              ++it->second;
          }
          const std::pair<EditAction, std::size_t>* best = nullptr;
          for (const auto& v : votes)
            if (!best || v.second > best->second ||
                (v.second == best->second && kind_rank(v.first.kind) < kind_rank(best->first.kind)))
              best = &v;
          if (best && best->first.kind != EditKind::match) chosen = {best->first.kind, i, best->first.value};
        }
        switch (chosen.kind) {
          case EditKind::del: kw.erase(kw.begin() + static_cast<std::ptrdiff_t>(i)); break;
          case EditKind::insert: kw.insert(kw.begin() + static_cast<std::ptrdiff_t>(i), chosen.value); break;
          default: kw[i] = chosen.value; break;
        }
        ++res.corrections_per_key[w];
        if (record_corrections) res.corrections.push_back({w, i, chosen.kind, chosen.value});
      }
    }
  }
  return res;
}

double partial_error(const Bits& partial, const Bits& truth) {
  require(!truth.empty(), ErrorKind::invalid_argument, "reference key is empty");
  return static_cast<double>(levenshtein(partial, truth)) / static_cast<double>(truth.size());
}

std::size_t bit_errors(const Bits& recovered, const Bits& truth) { return levenshtein(recovered, truth); }

}  // namespace ppsim
