#include "atrim/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace atrim {

// ---------------------------------------------------------------------------
// Dates (civil-day arithmetic after Howard Hinnant's algorithms)
// ---------------------------------------------------------------------------

Date Date::parse(const std::string& iso) {
  Date d;
  char dash1 = 0, dash2 = 0;
  std::istringstream is(iso);
  if (!(is >> d.year >> dash1 >> d.month >> dash2 >> d.day) || dash1 != '-' || dash2 != '-') {
    throw std::invalid_argument("bad date '" + iso + "', expected YYYY-MM-DD");
  }
  if (d.month < 1 || d.month > 12 || d.day < 1 || d.day > 31) {
    throw std::invalid_argument("bad date '" + iso + "'");
  }
  // Negative components sneak past operator>> via the dash.
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') {
    throw std::invalid_argument("bad date '" + iso + "', expected YYYY-MM-DD");
  }
  return d;
}

std::string Date::str() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
  return buf;
}

long Date::serial() const {
  const int y = year - (month <= 2);
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (month + (month > 2 ? -3 : 9)) + 2) / 5 + day - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097L + static_cast<long>(doe) - 719468L;
}

Date Date::from_serial(long days) {
  days += 719468L;
  const long era = (days >= 0 ? days : days - 146096L) / 146097L;
  const unsigned doe = static_cast<unsigned>(days - era * 146097L);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const long y = static_cast<long>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  return Date{static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

bool Date::is_weekend() const {
  const long wd = ((serial() % 7) + 11) % 7;  // 0 = Sunday
  return wd == 0 || wd == 6;
}

Date Date::next_weekday() const {
  Date d = from_serial(serial() + 1);
  while (d.is_weekend()) d = from_serial(d.serial() + 1);
  return d;
}

// ---------------------------------------------------------------------------
// Series and splits
// ---------------------------------------------------------------------------

bool RawSeries::bivariate() const {
  return !records.empty() && records.front().sentiment.has_value();
}

void SplitSpec::validate() const {
  auto ordered = [](const DateRange& r) { return r.begin <= r.end; };
  if (!ordered(train) || !ordered(validation) || !ordered(test)) {
    throw std::invalid_argument("split: each range needs begin <= end");
  }
  if (!(train.end < validation.begin) || !(validation.end < test.begin)) {
    throw std::invalid_argument("split: ranges must be ordered train < validation < test");
  }
}

int SplitSpec::split_of(const Date& d) const {
  for (const DateRange& ex : exclusions) {
    if (ex.contains(d)) return -1;
  }
  if (train.contains(d)) return 0;
  if (validation.contains(d)) return 1;
  if (test.contains(d)) return 2;
  return -1;
}

SplitSpec SplitSpec::by_fraction(const RawSeries& series, double train_frac, double val_frac) {
  if (series.records.size() < 3) throw std::invalid_argument("split: series too short");
  if (!(train_frac > 0.0) || !(val_frac > 0.0) || !(train_frac + val_frac < 1.0)) {
    throw std::invalid_argument("split: fractions must be positive and leave room for a test set");
  }
  const auto n = static_cast<std::ptrdiff_t>(series.records.size());
  const auto i_train = static_cast<std::ptrdiff_t>(train_frac * n);
  const auto i_val = static_cast<std::ptrdiff_t>((train_frac + val_frac) * n);
  if (i_train < 1 || i_val <= i_train || i_val >= n) {
    throw std::invalid_argument("split: fractions leave an empty segment");
  }
  SplitSpec s;
  s.train = {series.records.front().date, series.records[i_train - 1].date};
  s.validation = {series.records[i_train].date, series.records[i_val - 1].date};
  s.test = {series.records[i_val].date, series.records.back().date};
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct CsvColumn {
  std::vector<Date> dates;
  std::vector<double> values;
};

CsvColumn parse_two_column(const std::string& text, const std::string& name,
                           const std::string& value_header) {
  CsvColumn out;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw std::runtime_error(name + ":" + std::to_string(line_no) + ": expected two columns");
    }
    const std::string first = line.substr(0, comma);
    const std::string second = line.substr(comma + 1);
    if (line_no == 1) {
      if (first != "date" || second != value_header) {
        throw std::runtime_error(name + ":1: expected header 'date," + value_header + "'");
      }
      continue;
    }
    try {
      out.dates.push_back(Date::parse(first));
      std::size_t used = 0;
      out.values.push_back(std::stod(second, &used));
      if (used != second.size()) throw std::invalid_argument("trailing text");
    } catch (const std::exception& e) {
      throw std::runtime_error(name + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (out.dates.size() > 1 && !(out.dates[out.dates.size() - 2] < out.dates.back())) {
      throw std::runtime_error(name + ":" + std::to_string(line_no) +
                               ": dates must be strictly increasing");
    }
  }
  return out;
}

}  // namespace

RawSeries parse_price_csv(const std::string& text, const std::string& name) {
  const CsvColumn col = parse_two_column(text, name, "close");
  RawSeries series;
  series.records.reserve(col.dates.size());
  for (std::size_t i = 0; i < col.dates.size(); ++i) {
    if (!(col.values[i] > 0.0)) {
      throw std::runtime_error(name + ": non-positive close " + std::to_string(col.values[i]) +
                               " at " + col.dates[i].str());
    }
    series.records.push_back({col.dates[i], col.values[i], std::nullopt});
  }
  return series;
}

RawSeries ingest(const std::string& price_path, const std::optional<std::string>& sentiment_path) {
  RawSeries series = parse_price_csv(read_file(price_path), price_path);
  if (!sentiment_path) return series;

  const CsvColumn sent = parse_two_column(read_file(*sentiment_path), *sentiment_path, "sentiment");
  RawSeries joined;
  std::size_t j = 0;
  for (const SeriesRecord& rec : series.records) {
    while (j < sent.dates.size() && sent.dates[j] < rec.date) ++j;
    if (j < sent.dates.size() && sent.dates[j] == rec.date) {
      joined.records.push_back({rec.date, rec.close, sent.values[j]});
    }
  }
  if (joined.records.empty()) {
    throw std::runtime_error("ingest: price and sentiment dates do not overlap");
  }
  return joined;
}

void write_series_csv(const RawSeries& series, const std::string& price_path,
                      const std::optional<std::string>& sentiment_path) {
  std::ofstream price(price_path);
  if (!price) throw std::runtime_error("cannot write " + price_path);
  price.precision(17);
  price << "date,close\n";
  for (const auto& r : series.records) price << r.date.str() << "," << r.close << "\n";

  if (!sentiment_path) return;
  if (!series.bivariate()) throw std::runtime_error("series has no sentiment channel to write");
  std::ofstream sent(*sentiment_path);
  if (!sent) throw std::runtime_error("cannot write " + *sentiment_path);
  sent.precision(17);
  sent << "date,sentiment\n";
  for (const auto& r : series.records) sent << r.date.str() << "," << *r.sentiment << "\n";
}

// ---------------------------------------------------------------------------
// Transformations
// ---------------------------------------------------------------------------

std::vector<double> kernel_smooth(const std::vector<double>& values,
                                  const std::vector<double>& kernel) {
  if (kernel.empty()) throw std::invalid_argument("kernel_smooth: empty kernel");
  double total = 0.0;
  for (double w : kernel) {
    if (w < 0.0) throw std::invalid_argument("kernel_smooth: negative weight");
    total += w;
  }
  if (total <= 0.0) throw std::invalid_argument("kernel_smooth: zero-sum kernel");

  std::vector<double> out(values.size());
  for (std::size_t t = 0; t < values.size(); ++t) {
    const std::size_t span = std::min(t + 1, kernel.size());
    double acc = 0.0, norm = 0.0;
    for (std::size_t j = 0; j < span; ++j) {
      acc += kernel[j] * values[t - j];
      norm += kernel[j];
    }
    out[t] = acc / norm;
  }
  return out;
}

std::vector<double> triangular_kernel(int width) {
  if (width < 1) throw std::invalid_argument("triangular_kernel: width must be positive");
  std::vector<double> k(width);
  double total = 0.0;
  for (int j = 0; j < width; ++j) {
    k[j] = static_cast<double>(width - j);  // j lags back from the current day
    total += k[j];
  }
  for (double& w : k) w /= total;
  return k;
}

namespace {

FeatureStats stats_of(const std::vector<double>& values, const char* what) {
  if (values.size() < 2) throw std::runtime_error(std::string(what) + ": too few training values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  const double sd = std::sqrt(var);
  if (!(sd > 0.0)) throw std::runtime_error(std::string(what) + ": zero variance in the training split");
  return {mean, sd};
}

}  // namespace

StandardizedSeries log_then_standardize(const RawSeries& series, const SplitSpec& split) {
  split.validate();
  const bool bivar = series.bivariate();
  StandardizedSeries out;
  out.dates.reserve(series.size());
  out.split_of.reserve(series.size());

  std::vector<double> train_log_close, train_sent;
  for (const SeriesRecord& r : series.records) {
    if (!(r.close > 0.0)) throw std::runtime_error("non-positive close at " + r.date.str());
    const int s = split.split_of(r.date);
    out.dates.push_back(r.date);
    out.split_of.push_back(s);
    if (s == 0) {
      train_log_close.push_back(std::log(r.close));
      if (bivar) train_sent.push_back(*r.sentiment);
    }
  }

  out.stats.log_close = stats_of(train_log_close, "close");
  if (bivar) out.stats.sentiment = stats_of(train_sent, "sentiment");

  out.values = Matrix(static_cast<Index>(series.size()), bivar ? 2 : 1);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const SeriesRecord& r = series.records[i];
    out.values(static_cast<Index>(i), 0) =
        (std::log(r.close) - out.stats.log_close.mean) / out.stats.log_close.stddev;
    if (bivar) {
      out.values(static_cast<Index>(i), 1) =
          (*r.sentiment - out.stats.sentiment->mean) / out.stats.sentiment->stddev;
    }
  }
  return out;
}

double rescale(double z, const NormStats& stats) {
  return std::exp(z * stats.log_close.stddev + stats.log_close.mean);
}

double standardize_close(double close, const NormStats& stats) {
  return (std::log(close) - stats.log_close.mean) / stats.log_close.stddev;
}

SplitWindows make_windows(const StandardizedSeries& series, int lookback, int horizon) {
  if (lookback < 1 || horizon < 1) throw std::invalid_argument("make_windows: bad geometry");
  const Index n = series.values.rows();
  const int features = static_cast<int>(series.values.cols());

  SplitWindows out;
  for (WindowedDataset* d : {&out.train, &out.validation, &out.test}) {
    d->stats = series.stats;
    d->lookback = lookback;
    d->horizon = horizon;
    d->features = features;
  }

  // Contiguous runs of one split id, windows never crossing a boundary.
  Index run_begin = 0;
  while (run_begin < n) {
    const int id = series.split_of[run_begin];
    Index run_end = run_begin;
    while (run_end < n && series.split_of[run_end] == id) ++run_end;
    if (id >= 0) {
      WindowedDataset& dst = id == 0 ? out.train : id == 1 ? out.validation : out.test;
      for (Index origin = run_begin + lookback - 1; origin + horizon < run_end; ++origin) {
        WindowPair w;
        w.input = series.values.block(origin - lookback + 1, 0, lookback, features);
        w.target = series.values.col(0).segment(origin + 1, horizon);
        w.origin = series.dates[origin];
        w.target_raw = Vector(horizon);
        for (int s = 0; s < horizon; ++s) {
          w.target_raw(s) = rescale(w.target(s), series.stats);
        }
        dst.windows.push_back(std::move(w));
      }
    }
    run_begin = run_end;
  }

  if (out.train.windows.empty()) {
    throw std::runtime_error("make_windows: training split too short for lookback " +
                             std::to_string(lookback) + " + horizon " + std::to_string(horizon));
  }
  return out;
}

SplitWindows build_dataset(const RawSeries& series, const SplitSpec& split, int lookback,
                           int horizon, int sentiment_kernel_width) {
  RawSeries prepared = series;
  if (series.bivariate() && sentiment_kernel_width > 1) {
    std::vector<double> raw(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) raw[i] = *series.records[i].sentiment;
    const std::vector<double> smooth = kernel_smooth(raw, triangular_kernel(sentiment_kernel_width));
    for (std::size_t i = 0; i < series.size(); ++i) prepared.records[i].sentiment = smooth[i];
  }
  return make_windows(log_then_standardize(prepared, split), lookback, horizon);
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

RawSeries generate_synthetic(const SynthSpec& spec) {
  if (spec.length < 100) throw std::invalid_argument("synthetic: length must be at least 100");
  if (spec.sentiment_lead < 1) throw std::invalid_argument("synthetic: lead must be positive");
  SeededRng rng(spec.seed);

  const int total = spec.length + spec.sentiment_lead;
  std::vector<Date> dates(total);
  Date d = spec.start.is_weekend() ? spec.start.next_weekday() : spec.start;
  for (int t = 0; t < total; ++t) {
    dates[t] = d;
    d = d.next_weekday();
  }
  const Date regime =
      spec.regime_date.value_or(dates[static_cast<std::size_t>(0.92 * spec.length)]);

  std::vector<double> log_price(total);
  double ar = 0.0;
  for (int t = 0; t < total; ++t) {
    ar = spec.ar_coeff * ar + spec.noise_sigma * rng.normal();
    const double seasonal =
        spec.seasonal_amplitude * std::sin(2.0 * M_PI * t / spec.seasonal_period);
    const double step = dates[t] < regime ? 0.0 : spec.regime_magnitude;
    log_price[t] = spec.base_log_price + spec.trend_per_step * t + seasonal + step + ar;
  }

  // Forward log-returns over the lead, standardized over the emitted range.
  std::vector<double> fwd(spec.length);
  double mean = 0.0;
  for (int t = 0; t < spec.length; ++t) {
    fwd[t] = log_price[t + spec.sentiment_lead] - log_price[t];
    mean += fwd[t];
  }
  mean /= spec.length;
  double var = 0.0;
  for (double r : fwd) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / spec.length);

  RawSeries out;
  out.records.resize(spec.length);
  for (int t = 0; t < spec.length; ++t) {
    const double z = sd > 0.0 ? (fwd[t] - mean) / sd : 0.0;
    out.records[t].date = dates[t];
    out.records[t].close = std::exp(log_price[t]);
    out.records[t].sentiment = spec.sentiment_strength * z + spec.sentiment_noise * rng.normal();
  }
  return out;
}

}  // namespace atrim
