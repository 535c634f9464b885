#pragma once

#include "atrim/linalg.hpp"

#include <compare>
#include <optional>
#include <string>
#include <vector>

namespace atrim {

/// Calendar day. Only ordering and day-stepping are needed; trading days are
/// whatever dates appear in the files.
struct Date {
  int year = 1970;
  int month = 1;
  int day = 1;

  auto operator<=>(const Date&) const = default;

  static Date parse(const std::string& iso);  // YYYY-MM-DD
  std::string str() const;

  long serial() const;  // days since 1970-01-01
  static Date from_serial(long days);
  Date next_weekday() const;
  bool is_weekend() const;
};

struct SeriesRecord {
  Date date;
  double close = 0.0;
  std::optional<double> sentiment;
};

/// Joined, date-sorted price (and optional sentiment) series.
struct RawSeries {
  std::vector<SeriesRecord> records;

  bool bivariate() const;
  std::size_t size() const { return records.size(); }
};

struct DateRange {
  Date begin;  // inclusive
  Date end;    // inclusive

  bool contains(const Date& d) const { return begin <= d && d <= end; }
};

/// Contiguous, ordered train/validation/test date ranges with optional
/// exclusion windows (records inside them belong to no split).
struct SplitSpec {
  DateRange train, validation, test;
  std::vector<DateRange> exclusions;

  void validate() const;
  /// -1 when excluded or outside every range, else 0/1/2.
  int split_of(const Date& d) const;

  /// Ranges cut at the given fractions of the record list (by position).
  static SplitSpec by_fraction(const RawSeries& series, double train_frac, double val_frac);
};

struct FeatureStats {
  double mean = 0.0;
  double stddev = 1.0;
};

/// Training-split statistics used to standardize every split alike.
struct NormStats {
  FeatureStats log_close;
  std::optional<FeatureStats> sentiment;
};

/// One standardized record: z of log close, z of (smoothed) sentiment.
struct StandardizedSeries {
  std::vector<Date> dates;
  Matrix values;             // rows x features, feature 0 is the price channel
  std::vector<int> split_of; // -1 excluded, 0 train, 1 validation, 2 test
  NormStats stats;
};

struct WindowPair {
  Matrix input;       // lookback x features
  Vector target;      // horizon, standardized log close
  Date origin;        // last input date
  Vector target_raw;  // horizon, original close prices
};

struct WindowedDataset {
  std::vector<WindowPair> windows;
  NormStats stats;
  int lookback = 0;
  int horizon = 0;
  int features = 0;

  std::size_t size() const { return windows.size(); }
};

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

/// Parse a `date,close` file, optionally inner-joined with a
/// `date,sentiment` file on matching dates. Rows must be date-sorted with
/// positive prices; a bad row is reported with its line number.
RawSeries ingest(const std::string& price_path,
                 const std::optional<std::string>& sentiment_path = std::nullopt);

RawSeries parse_price_csv(const std::string& text, const std::string& name);
void write_series_csv(const RawSeries& series, const std::string& price_path,
                      const std::optional<std::string>& sentiment_path);

// ---------------------------------------------------------------------------
// Transformations
// ---------------------------------------------------------------------------

/// Causal convolution: y_t = sum_j kernel_j x_{t-j}, renormalized over the
/// available history while t < kernel length. Weights must be non-negative
/// with a positive sum.
std::vector<double> kernel_smooth(const std::vector<double>& values,
                                  const std::vector<double>& kernel);

/// Trailing triangular weights of the given width, most recent heaviest.
std::vector<double> triangular_kernel(int width);

/// log-transform the close, standardize each channel with statistics taken
/// from the training split only, and tag each record with its split. The
/// sentiment channel (already smoothed by the caller) is standardized
/// without the log.
StandardizedSeries log_then_standardize(const RawSeries& series, const SplitSpec& split);

/// Invert the price transform: z -> exp(z * sigma + mu).
double rescale(double z, const NormStats& stats);

/// Forward price transform for a single value (test helper and target math).
double standardize_close(double close, const NormStats& stats);

/// Sliding stride-1 windows within each split segment; targets are the next
/// `horizon` standardized log closes after the window.
struct SplitWindows {
  WindowedDataset train, validation, test;
};
SplitWindows make_windows(const StandardizedSeries& series, int lookback, int horizon = 5);

/// Full pipeline: smooth sentiment (when present), transform, window.
SplitWindows build_dataset(const RawSeries& series, const SplitSpec& split, int lookback,
                           int horizon = 5, int sentiment_kernel_width = 7);

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

/// Non-stationary synthetic market: log price = base + trend + seasonality
/// + regime step + AR(1) noise; sentiment encodes the standardized future
/// log-return over `sentiment_lead` days plus independent noise, so it is
/// genuinely predictive by construction.
struct SynthSpec {
  int length = 1600;
  std::uint64_t seed = 1;
  Date start = {2015, 1, 5};
  double base_log_price = 4.6051701859880914;  // log(100)
  double trend_per_step = 0.00005;
  double seasonal_amplitude = 0.08;
  int seasonal_period = 63;
  std::optional<Date> regime_date;  // default: 92% through the series
  double regime_magnitude = 0.08;
  double noise_sigma = 0.02;
  double ar_coeff = 0.8;
  int sentiment_lead = 5;
  double sentiment_strength = 1.0;
  double sentiment_noise = 1.0;
};

RawSeries generate_synthetic(const SynthSpec& spec);

}  // namespace atrim
