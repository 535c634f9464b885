#include "atrim/report.hpp"

#include <nlohmann/json.hpp>

#include <iomanip>
#include <sstream>

namespace atrim {

using nlohmann::json;

ModelReport make_model_report(const std::string& name, const TrainResult& r, std::uint64_t seed) {
  ModelReport m;
  m.model = name;
  m.train = r.train;
  m.validation = r.validation;
  m.test = r.test;
  m.test_mape.assign(r.test_mape.data(), r.test_mape.data() + r.test_mape.size());
  m.seed = seed;
  m.epochs_run = r.epochs_run;
  m.best_epoch = r.best_epoch;
  m.diverged = r.diverged;
  m.seconds = r.seconds;
  return m;
}

std::string report_to_json(const ExperimentReport& report, bool include_timings) {
  json j;
  j["dataset"] = report.dataset;
  j["lookback"] = report.lookback;
  j["horizon"] = report.horizon;
  j["features"] = report.features;
  j["models"] = json::array();
  for (const ModelReport& m : report.models) {
    json jm;
    jm["model"] = m.model;
    jm["mse"] = {{"train", m.train.mse}, {"validation", m.validation.mse}, {"test", m.test.mse}};
    jm["mae"] = {{"train", m.train.mae}, {"validation", m.validation.mae}, {"test", m.test.mae}};
    jm["test_mape"] = m.test_mape;
    jm["seed"] = m.seed;
    jm["epochs_run"] = m.epochs_run;
    jm["best_epoch"] = m.best_epoch;
    jm["diverged"] = m.diverged;
    if (include_timings) jm["seconds"] = m.seconds;
    j["models"].push_back(std::move(jm));
  }
  return j.dump(2);
}

ExperimentReport report_from_json(const std::string& text) {
  const json j = json::parse(text);
  ExperimentReport report;
  report.dataset = j.at("dataset").get<std::string>();
  report.lookback = j.at("lookback").get<int>();
  report.horizon = j.at("horizon").get<int>();
  report.features = j.at("features").get<int>();
  for (const json& jm : j.at("models")) {
    ModelReport m;
    m.model = jm.at("model").get<std::string>();
    m.train = {jm.at("mse").at("train").get<double>(), jm.at("mae").at("train").get<double>()};
    m.validation = {jm.at("mse").at("validation").get<double>(),
                    jm.at("mae").at("validation").get<double>()};
    m.test = {jm.at("mse").at("test").get<double>(), jm.at("mae").at("test").get<double>()};
    m.test_mape = jm.at("test_mape").get<std::vector<double>>();
    m.seed = jm.at("seed").get<std::uint64_t>();
    m.epochs_run = jm.at("epochs_run").get<int>();
    m.best_epoch = jm.at("best_epoch").get<int>();
    m.diverged = jm.at("diverged").get<bool>();
    if (jm.contains("seconds")) m.seconds = jm.at("seconds").get<double>();
    report.models.push_back(std::move(m));
  }
  return report;
}

namespace {

std::string fixed4(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

}  // namespace

std::string render_report(const ExperimentReport& report) {
  std::ostringstream os;
  os << "dataset: " << report.dataset << "  lookback " << report.lookback << ", horizon "
     << report.horizon << ", " << (report.features == 1 ? "univariate" : "bivariate") << "\n\n";

  os << std::left << std::setw(24) << "Model" << std::right << std::setw(12) << "MSE"
     << std::setw(12) << "MAE" << "\n";
  os << std::string(48, '-') << "\n";
  for (const ModelReport& m : report.models) {
    const std::pair<const char*, const SplitMetrics*> rows[] = {
        {"train", &m.train}, {"val", &m.validation}, {"test", &m.test}};
    for (const auto& [split, metrics] : rows) {
      os << std::left << std::setw(24) << (m.model + " " + split) << std::right << std::setw(12)
         << fixed4(metrics->mse) << std::setw(12) << fixed4(metrics->mae) << "\n";
    }
  }

  os << "\nTest MAPE per step ahead (re-scaled)\n";
  os << std::left << std::setw(6) << "Step";
  for (const ModelReport& m : report.models) os << std::right << std::setw(16) << m.model;
  os << "\n" << std::string(6 + 16 * report.models.size(), '-') << "\n";
  for (int s = 0; s < report.horizon; ++s) {
    os << std::left << std::setw(6) << (s + 1);
    // Lowest entry per row gets the flag, mirroring bold-best table style.
    std::size_t best = 0;
    for (std::size_t k = 1; k < report.models.size(); ++k) {
      if (report.models[k].test_mape.size() > static_cast<std::size_t>(s) &&
          report.models[k].test_mape[s] < report.models[best].test_mape[s]) {
        best = k;
      }
    }
    for (std::size_t k = 0; k < report.models.size(); ++k) {
      const double v = report.models[k].test_mape[s];
      os << std::right << std::setw(15) << fixed4(v) << (k == best ? "*" : " ");
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace atrim
