#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fremer/spectral.hpp"

namespace fremer {

// Chronological split ratios over a series' time span.
struct SplitSpec {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
  void validate() const;  // positive, summing to 1
};

struct SampleSpan {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  std::size_t size() const { return end - begin; }
};

struct SplitSpans {
  SampleSpan train, val, test;
};

// Boundaries at floor(train*N) and floor((train+val)*N).
SplitSpans split(std::size_t n, const SplitSpec& s);
SplitSpans split(const TimeSeries& ts, const SplitSpec& s);

// A forecasting window: lookback [input_begin, input_begin+L), target
// [input_begin+L, input_begin+L+T).
struct Window {
  std::size_t input_begin = 0;
};

// Windows lying entirely inside the span. Count for stride 1 is
// span_len - (L+T) + 1.
std::vector<Window> windows(const SampleSpan& span, std::size_t lookback, std::size_t horizon,
                            std::size_t stride = 1);

// Windows whose targets lie inside the span; lookbacks may reach into earlier
// samples (the first val/test targets are forecastable this way).
std::vector<Window> windows_with_history(const SampleSpan& span, std::size_t lookback,
                                         std::size_t horizon, std::size_t stride = 1);

// Per-instance normalization statistics, fit on the training span only.
struct Normalizer {
  double mean = 0.0;
  double stddev = 1.0;

  double normalize(double v) const { return (v - mean) / stddev; }
  double denormalize(double v) const { return v * stddev + mean; }
  static Normalizer fit(std::span<const double> train_values);
};

struct TraceSet {
  std::map<std::string, TimeSeries> instances;  // ordered by id
  double granularity = 0.0;                     // shared sampling step, seconds
};

struct IngestReport {
  struct Rejection {
    std::string id;
    std::string reason;
  };
  std::vector<Rejection> rejections;
  std::size_t interpolated = 0;  // filled gap samples
};

// Long-format CSV: header `timestamp,series_id,value`; timestamps are epoch
// seconds or ISO-8601 UTC. Gaps of up to 3 consecutive missing samples are
// linearly interpolated; longer gaps reject the instance (reported, others
// retained). Throws on malformed rows (with line number), mixed granularity,
// or duplicate timestamps.
TraceSet ingest_csv(const std::string& path, IngestReport* report = nullptr,
                    double granularity_override = 0.0);

void write_trace_csv(const std::string& path, const TraceSet& ts);

// JSON-lines rejection report: {"id": ..., "reason": ...} per line.
void write_rejections_jsonl(const std::string& path, const IngestReport& report);

}  // namespace fremer
