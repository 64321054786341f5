#include "fremer/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fremer {

void SplitSpec::validate() const {
  if (!(train > 0.0 && val > 0.0 && test > 0.0)) {
    throw std::invalid_argument("data: split ratios must be positive");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) {
    throw std::invalid_argument("data: split ratios must sum to 1");
  }
}

SplitSpans split(std::size_t n, const SplitSpec& s) {
  s.validate();
  const auto cut = [n](double ratio) {
    return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
  };
  const std::size_t b1 = cut(s.train);
  const std::size_t b2 = cut(s.train + s.val);
  return SplitSpans{{0, b1}, {b1, b2}, {b2, n}};
}

SplitSpans split(const TimeSeries& ts, const SplitSpec& s) { return split(ts.values.size(), s); }

std::vector<Window> windows(const SampleSpan& span, std::size_t lookback, std::size_t horizon,
                            std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("data: window stride must be >= 1");
  std::vector<Window> out;
  const std::size_t need = lookback + horizon;
  if (span.size() < need) return out;
  for (std::size_t b = span.begin; b + need <= span.end; b += stride) {
    out.push_back(Window{b});
  }
  return out;
}

std::vector<Window> windows_with_history(const SampleSpan& span, std::size_t lookback,
                                         std::size_t horizon, std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("data: window stride must be >= 1");
  std::vector<Window> out;
  // target start must leave room for the lookback in the full series
  std::size_t s = std::max(span.begin, lookback);
  for (; s + horizon <= span.end; s += stride) {
    out.push_back(Window{s - lookback});
  }
  return out;
}

Normalizer Normalizer::fit(std::span<const double> train_values) {
  if (train_values.empty()) throw std::invalid_argument("data: normalizer fit on empty span");
  double mean = 0.0;
  for (double v : train_values) mean += v;
  mean /= static_cast<double>(train_values.size());
  double var = 0.0;
  for (double v : train_values) {
    const double d = v - mean;
    var += d * d;
  }
  var /= static_cast<double>(train_values.size());
  Normalizer n;
  n.mean = mean;
  n.stddev = std::max(std::sqrt(var), 1e-8);
  return n;
}

namespace {

// Hinnant's civil-date algorithm; days since 1970-01-01.
std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

bool parse_timestamp(const std::string& field, double* out) {
  // epoch seconds first
  {
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end && *end == '\0' && end != field.c_str()) {
      if (!std::isfinite(v)) return false;
      *out = v;
      return true;
    }
  }
  // ISO-8601 UTC: YYYY-MM-DD[T ]HH:MM:SS with optional trailing Z
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
  char sep = 0, tail = 0;
  const int n = std::sscanf(field.c_str(), "%d-%d-%d%c%d:%d:%d%c", &y, &mo, &d, &sep, &h, &mi,
                            &se, &tail);
  if (n < 7 || (sep != 'T' && sep != ' ')) return false;
  if (n == 8 && tail != 'Z') return false;
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 || se < 0 ||
      se > 60) {
    return false;
  }
  *out = static_cast<double>(days_from_civil(y, static_cast<unsigned>(mo),
                                             static_cast<unsigned>(d)) *
                             86400LL +
                             h * 3600LL + mi * 60LL + se);
  return true;
}

struct Row {
  double t;
  double v;
};

}  // namespace

TraceSet ingest_csv(const std::string& path, IngestReport* report, double granularity_override) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("data: cannot open '" + path + "'");

  std::map<std::string, std::vector<Row>> rows;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "timestamp,series_id,value") {
        throw std::runtime_error("data: line 1: expected header 'timestamp,series_id,value'");
      }
      header_seen = true;
      continue;
    }
    const std::size_t c1 = line.find(',');
    const std::size_t c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos ||
        line.find(',', c2 + 1) != std::string::npos) {
      throw std::runtime_error("data: line " + std::to_string(line_no) + ": malformed row");
    }
    const std::string ts_field = line.substr(0, c1);
    const std::string id = line.substr(c1 + 1, c2 - c1 - 1);
    const std::string val_field = line.substr(c2 + 1);
    double t = 0.0;
    if (id.empty() || !parse_timestamp(ts_field, &t)) {
      throw std::runtime_error("data: line " + std::to_string(line_no) + ": malformed row");
    }
    char* end = nullptr;
    const double v = std::strtod(val_field.c_str(), &end);
    if (!end || *end != '\0' || end == val_field.c_str() || !std::isfinite(v)) {
      throw std::runtime_error("data: line " + std::to_string(line_no) + ": malformed row");
    }
    rows[id].push_back(Row{t, v});
  }
  if (!header_seen) throw std::runtime_error("data: empty file '" + path + "'");
  if (rows.empty()) throw std::runtime_error("data: no data rows in '" + path + "'");

  // Infer the shared granularity as the smallest positive spacing.
  double step = granularity_override;
  if (step <= 0.0) {
    double best = 0.0;
    for (auto& [id, rs] : rows) {
      std::stable_sort(rs.begin(), rs.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
      for (std::size_t i = 1; i < rs.size(); ++i) {
        const double d = rs[i].t - rs[i - 1].t;
        if (d > 0.0 && (best == 0.0 || d < best)) best = d;
      }
    }
    if (best <= 0.0) throw std::runtime_error("data: cannot infer granularity (need >= 2 samples)");
    step = best;
  } else {
    for (auto& [id, rs] : rows) {
      std::stable_sort(rs.begin(), rs.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
    }
  }

  TraceSet out;
  out.granularity = step;
  for (const auto& [id, rs] : rows) {
    bool rejected = false;
    TimeSeries ts;
    ts.id = id;
    ts.step_seconds = step;
    ts.start_epoch = rs.front().t;
    ts.values.push_back(rs.front().v);
    for (std::size_t i = 1; i < rs.size() && !rejected; ++i) {
      const double dt = rs[i].t - rs[i - 1].t;
      if (dt <= 0.0) {
        throw std::runtime_error("data: duplicate timestamp in instance '" + id + "'");
      }
      const double steps = dt / step;
      const double k_real = std::round(steps);
      if (std::abs(steps - k_real) > 1e-6 || k_real < 1.0) {
        throw std::runtime_error("data: mixed granularity in instance '" + id + "' (spacing " +
                                 std::to_string(dt) + "s vs step " + std::to_string(step) + "s)");
      }
      const std::size_t k = static_cast<std::size_t>(k_real);
      if (k > 4) {
        if (report) {
          report->rejections.push_back(
              {id, "gap of " + std::to_string(k - 1) + " samples exceeds interpolation limit"});
        }
        rejected = true;
        break;
      }
      for (std::size_t j = 1; j < k; ++j) {
        const double frac = static_cast<double>(j) / static_cast<double>(k);
        ts.values.push_back(rs[i - 1].v + frac * (rs[i].v - rs[i - 1].v));
        if (report) ++report->interpolated;
      }
      ts.values.push_back(rs[i].v);
    }
    if (!rejected) out.instances.emplace(id, std::move(ts));
  }
  if (out.instances.empty()) {
    throw std::runtime_error("data: every instance was rejected during ingest");
  }
  return out;
}

void write_trace_csv(const std::string& path, const TraceSet& ts) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("data: cannot open '" + path + "' for writing");
  out << "timestamp,series_id,value\n";
  char buf[128];
  for (const auto& [id, series] : ts.instances) {
    for (std::size_t i = 0; i < series.values.size(); ++i) {
      const double t = series.start_epoch + static_cast<double>(i) * series.step_seconds;
      std::snprintf(buf, sizeof buf, "%.17g,%s,%.17g\n", t, id.c_str(), series.values[i]);
      out << buf;
    }
  }
}

void write_rejections_jsonl(const std::string& path, const IngestReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("data: cannot open '" + path + "' for writing");
  for (const auto& r : report.rejections) {
    out << "{\"id\": \"" << r.id << "\", \"reason\": \"" << r.reason << "\"}\n";
  }
}

}  // namespace fremer
