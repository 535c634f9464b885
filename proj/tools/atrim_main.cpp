// Command-line surface: synthetic data generation, training, randomized
// grid search with walk-forward validation, checkpoint evaluation, gradient
// checking, and report rendering.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "atrim/checkpoint.hpp"
#include "atrim/data.hpp"
#include "atrim/hyper.hpp"
#include "atrim/report.hpp"
#include "atrim/train.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

using namespace atrim;

struct DataArgs {
  std::string price_path;
  std::string sentiment_path;
  int lookback = 10;
  int kernel_width = 7;
  double train_frac = 0.7;
  double val_frac = 0.15;
  std::string train_end, val_end;
  std::vector<std::string> exclusions;
};

void add_data_flags(CLI::App* cmd, DataArgs& args) {
  cmd->add_option("--price", args.price_path, "price csv (date,close)")->required();
  cmd->add_option("--sentiment", args.sentiment_path, "sentiment csv (date,sentiment)");
  cmd->add_option("--lookback", args.lookback, "input window length (5, 10 or 21)")
      ->check(CLI::IsMember({5, 10, 21}));
  cmd->add_option("--kernel-width", args.kernel_width,
                  "triangular smoothing width for the sentiment channel; 1 disables");
  cmd->add_option("--train-frac", args.train_frac, "training share when no dates are given");
  cmd->add_option("--val-frac", args.val_frac, "validation share when no dates are given");
  cmd->add_option("--train-end", args.train_end, "last training date (YYYY-MM-DD)");
  cmd->add_option("--val-end", args.val_end, "last validation date (YYYY-MM-DD)");
  cmd->add_option("--exclude", args.exclusions,
                  "date range BEGIN:END dropped from every split; repeatable");
}

SplitWindows load_windows(const DataArgs& args, std::string* dataset_name) {
  std::optional<std::string> sentiment;
  if (!args.sentiment_path.empty()) sentiment = args.sentiment_path;
  const RawSeries series = ingest(args.price_path, sentiment);

  SplitSpec split;
  if (!args.train_end.empty() || !args.val_end.empty()) {
    if (args.train_end.empty() || args.val_end.empty()) {
      throw std::runtime_error("--train-end and --val-end must be given together");
    }
    const Date t_end = Date::parse(args.train_end);
    const Date v_end = Date::parse(args.val_end);
    split.train = {series.records.front().date, t_end};
    split.validation = {Date::from_serial(t_end.serial() + 1), v_end};
    split.test = {Date::from_serial(v_end.serial() + 1), series.records.back().date};
    split.validate();
  } else {
    split = SplitSpec::by_fraction(series, args.train_frac, args.val_frac);
  }
  for (const std::string& range : args.exclusions) {
    const auto colon = range.find(':');
    if (colon == std::string::npos) {
      throw std::runtime_error("--exclude expects BEGIN:END, got '" + range + "'");
    }
    split.exclusions.push_back(
        {Date::parse(range.substr(0, colon)), Date::parse(range.substr(colon + 1))});
  }

  if (dataset_name) {
    *dataset_name = args.price_path + (sentiment ? "+" + *sentiment : "");
  }
  return build_dataset(series, split, args.lookback, 5, args.kernel_width);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

ExperimentReport report_shell(const std::string& dataset, const SplitWindows& data) {
  ExperimentReport report;
  report.dataset = dataset;
  report.lookback = data.train.lookback;
  report.horizon = data.train.horizon;
  report.features = data.train.features;
  return report;
}

int cmd_synth(const SynthSpec& spec, const std::string& price_path,
              const std::string& sentiment_path) {
  const RawSeries series = generate_synthetic(spec);
  std::optional<std::string> sentiment;
  if (!sentiment_path.empty()) sentiment = sentiment_path;
  write_series_csv(series, price_path, sentiment);
  std::cout << "wrote " << series.size() << " records to " << price_path;
  if (sentiment) std::cout << " and " << *sentiment;
  std::cout << "\n";
  return 0;
}

int cmd_train(const DataArgs& data_args, ModelConfig cfg, TrainOptions opts,
              const std::string& checkpoint_path, const std::string& report_path) {
  std::string dataset;
  const SplitWindows data = load_windows(data_args, &dataset);
  cfg.lookback = data.train.lookback;
  cfg.features = data.train.features;
  cfg.validate();

  SeededRng rng(opts.seed);
  auto model = make_forecaster(cfg, rng);
  std::cout << "training " << cfg.kind << " on " << data.train.size() << "/"
            << data.validation.size() << "/" << data.test.size() << " windows\n";
  const TrainResult result = train_model(*model, data.train, data.validation, data.test, opts);
  if (result.diverged) {
    std::cerr << "training diverged after epoch " << result.epochs_run
              << "; best finite parameters kept\n";
  }

  ExperimentReport report = report_shell(dataset, data);
  report.models.push_back(make_model_report(cfg.kind, result, opts.seed));
  std::cout << render_report(report);

  if (!checkpoint_path.empty()) {
    save_checkpoint(checkpoint_path, *model, cfg, opts.seed);
    std::cout << "checkpoint: " << checkpoint_path << "\n";
  }
  if (!report_path.empty()) {
    write_text(report_path, report_to_json(report));
    std::cout << "report: " << report_path << "\n";
  }
  return result.diverged ? 1 : 0;
}

int cmd_grid_search(const DataArgs& data_args, const std::string& kind, int folds, int samples,
                    bool full_grid, TrainOptions opts, const std::string& checkpoint_path,
                    const std::string& report_path) {
  std::string dataset;
  const SplitWindows data = load_windows(data_args, &dataset);

  std::vector<HyperDict> grid;
  if (kind == "alpha_t_rim") {
    SeededRng rng(opts.seed);
    grid = sample_hyper_dicts(rng, samples);
  } else {
    grid = baseline_grid(full_grid);
  }
  std::cout << "cross-validating " << grid.size() << " candidates, " << folds << " folds\n";
  const CvOutcome cv = ts_cross_validate(kind, data.train, grid, folds, opts);
  std::cout << "best candidate (mean validation mse " << cv.mean_val_mse[cv.best_index]
            << "):\n"
            << hyper_to_json(cv.best).dump(2) << "\n";

  const TrainedModel final_fit = train(kind, data, cv.best, opts);
  ExperimentReport report = report_shell(dataset, data);
  report.models.push_back(make_model_report(kind, final_fit.result, opts.seed));
  std::cout << render_report(report);

  if (!checkpoint_path.empty()) {
    save_checkpoint(checkpoint_path, *final_fit.model, final_fit.config, opts.seed);
    std::cout << "checkpoint: " << checkpoint_path << "\n";
  }
  if (!report_path.empty()) {
    nlohmann::json j = nlohmann::json::parse(report_to_json(report));
    j["best_hyper"] = hyper_to_json(cv.best);
    j["mean_val_mse"] = cv.mean_val_mse;
    write_text(report_path, j.dump(2));
    std::cout << "report: " << report_path << "\n";
  }
  return 0;
}

int cmd_evaluate(const DataArgs& data_args, const std::string& checkpoint_path,
                 const std::string& report_path) {
  LoadedModel loaded = load_checkpoint(checkpoint_path);
  DataArgs args = data_args;
  args.lookback = loaded.config.lookback;
  if (loaded.config.features == 2 && args.sentiment_path.empty()) {
    throw std::runtime_error("checkpoint expects a sentiment channel; pass --sentiment");
  }
  if (loaded.config.features == 1) args.sentiment_path.clear();

  std::string dataset;
  const SplitWindows data = load_windows(args, &dataset);
  TrainResult result;
  result.train = evaluate_split(*loaded.model, data.train);
  result.validation = evaluate_split(*loaded.model, data.validation);
  result.test = evaluate_split(*loaded.model, data.test);
  result.test_mape = evaluate_mape(*loaded.model, data.test);

  ExperimentReport report = report_shell(dataset, data);
  report.models.push_back(make_model_report(loaded.config.kind, result, loaded.seed));
  std::cout << render_report(report);
  if (!report_path.empty()) {
    write_text(report_path, report_to_json(report));
    std::cout << "report: " << report_path << "\n";
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  SeededRng data_rng(seed);
  const int lookback = 4;
  Matrix window(lookback, 2);
  for (Index i = 0; i < window.rows(); ++i)
    for (Index j = 0; j < window.cols(); ++j) window(i, j) = data_rng.normal();
  Vector target(5);
  for (int i = 0; i < 5; ++i) target(i) = data_rng.normal();

  bool ok = true;
  std::cout << "model            max relative error   (tolerance 1e-4)\n";
  for (const std::string kind : {"rnn", "lstm", "alpha_rnn", "alpha_t_rnn", "alpha_t_rim"}) {
    ModelConfig cfg;
    cfg.kind = kind;
    cfg.lookback = lookback;
    cfg.features = 2;
    cfg.units = 3;
    cfg.dropout = 0.2;
    cfg.rim.units = 2;
    cfg.rim.num_modules_total = 2;
    cfg.rim.num_modules_active = 1;
    SeededRng init_rng(seed + 1);
    auto model = make_forecaster(cfg, init_rng);
    SeededRng mask_rng(seed + 2);
    const double err = frozen_gradcheck_error(*model, window, target, mask_rng);
    const bool pass = err <= 1e-4;
    ok = ok && pass;
    std::cout << kind << std::string(17 - kind.size(), ' ') << err
              << (pass ? "   ok" : "   FAIL") << "\n";
  }
  return ok ? 0 : 1;
}

int cmd_report(const std::string& in_path) {
  std::ifstream in(in_path);
  if (!in) throw std::runtime_error("cannot open " + in_path);
  std::ostringstream os;
  os << in.rdbuf();
  std::cout << render_report(report_from_json(os.str()));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"alpha_t-RIM forecasting engine"};
  app.require_subcommand(1);

  // synth
  SynthSpec synth;
  std::string synth_price = "price.csv";
  std::string synth_sentiment = "sentiment.csv";
  std::string synth_start = "2015-01-05", synth_regime;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic price/sentiment dataset");
  synth_cmd->add_option("--price", synth_price, "output price csv");
  synth_cmd->add_option("--sentiment", synth_sentiment, "output sentiment csv; empty to skip");
  synth_cmd->add_option("--length", synth.length, "trading days");
  synth_cmd->add_option("--seed", synth.seed, "generator seed");
  synth_cmd->add_option("--start", synth_start, "first date");
  synth_cmd->add_option("--trend", synth.trend_per_step, "log-price drift per day");
  synth_cmd->add_option("--seasonal-amp", synth.seasonal_amplitude, "seasonal amplitude");
  synth_cmd->add_option("--seasonal-period", synth.seasonal_period, "seasonal period in days");
  synth_cmd->add_option("--regime-date", synth_regime, "level-shift date; default 92% through");
  synth_cmd->add_option("--regime-mag", synth.regime_magnitude, "level shift in log price");
  synth_cmd->add_option("--noise", synth.noise_sigma, "AR(1) innovation sigma");
  synth_cmd->add_option("--ar", synth.ar_coeff, "AR(1) coefficient");
  synth_cmd->add_option("--lead", synth.sentiment_lead, "days of return the sentiment leads");
  synth_cmd->add_option("--strength", synth.sentiment_strength, "sentiment signal strength");
  synth_cmd->add_option("--sent-noise", synth.sentiment_noise, "sentiment noise sigma");

  // train
  DataArgs train_data;
  ModelConfig train_cfg;
  TrainOptions train_opts;
  std::string train_config_path, train_checkpoint, train_report;
  auto* train_cmd = app.add_subcommand("train", "train one model and report metrics");
  add_data_flags(train_cmd, train_data);
  train_cmd
      ->add_option("--model", train_cfg.kind, "rnn | lstm | alpha_rnn | alpha_t_rnn | alpha_t_rim")
      ->check(CLI::IsMember({"rnn", "lstm", "alpha_rnn", "alpha_t_rnn", "alpha_t_rim"}));
  train_cmd->add_option("--config", train_config_path, "json config file (model/train sections)");
  train_cmd->add_option("--units", train_cfg.units, "baseline hidden units");
  train_cmd->add_option("--dropout", train_cfg.dropout, "baseline output dropout rate");
  train_cmd->add_option("--alpha", train_cfg.alpha, "fixed smoothing coefficient (alpha_rnn)");
  train_cmd->add_option("--modules", train_cfg.rim.num_modules_total, "total modules");
  train_cmd->add_option("--active", train_cfg.rim.num_modules_active, "active modules per step");
  train_cmd->add_option("--rim-units", train_cfg.rim.units, "units per module");
  train_cmd->add_option("--epochs", train_opts.epochs, "training epochs");
  train_cmd->add_option("--batch", train_opts.batch_size, "minibatch size");
  train_cmd->add_option("--lr", train_opts.learning_rate, "Adam learning rate");
  train_cmd->add_option("--l1", train_opts.l1_weight, "L1 penalty weight");
  train_cmd->add_option("--patience", train_opts.patience, "early-stop patience");
  train_cmd->add_flag_callback("--no-early-stop", [&] { train_opts.early_stop = false; });
  train_cmd->add_option("--seed", train_opts.seed, "seed for init, shuffling and dropout");
  train_cmd->add_option("--checkpoint", train_checkpoint, "write the trained model here");
  train_cmd->add_option("--report", train_report, "write the machine-readable report here");

  // grid-search
  DataArgs grid_data;
  TrainOptions grid_opts;
  grid_opts.epochs = 40;
  std::string grid_kind = "alpha_t_rim";
  int grid_folds = 0, grid_samples = 20;
  bool grid_full = false;
  std::string grid_checkpoint, grid_report;
  auto* grid_cmd =
      app.add_subcommand("grid-search", "walk-forward hyperparameter search, then a final fit");
  add_data_flags(grid_cmd, grid_data);
  grid_cmd->add_option("--model", grid_kind, "rnn | lstm | alpha_t_rim")
      ->check(CLI::IsMember({"rnn", "lstm", "alpha_t_rim"}));
  grid_cmd->add_option("--folds", grid_folds, "folds; default 3 for alpha_t_rim, 5 otherwise");
  grid_cmd->add_option("--samples", grid_samples, "sampled candidates for alpha_t_rim");
  grid_cmd->add_flag("--full-grid", grid_full, "full baseline grid instead of the reduced one");
  grid_cmd->add_option("--epochs", grid_opts.epochs, "epochs per candidate and final fit");
  grid_cmd->add_option("--batch", grid_opts.batch_size, "minibatch size");
  grid_cmd->add_option("--lr", grid_opts.learning_rate, "Adam learning rate");
  grid_cmd->add_option("--seed", grid_opts.seed, "seed");
  grid_cmd->add_option("--checkpoint", grid_checkpoint, "write the final model here");
  grid_cmd->add_option("--report", grid_report, "write the search report here");

  // evaluate
  DataArgs eval_data;
  std::string eval_checkpoint, eval_report;
  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on a dataset");
  add_data_flags(eval_cmd, eval_data);
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--report", eval_report, "write the machine-readable report here");

  // gradcheck
  std::uint64_t grad_seed = 1;
  auto* grad_cmd =
      app.add_subcommand("gradcheck", "verify analytic gradients against finite differences");
  grad_cmd->add_option("--seed", grad_seed, "seed");

  // report
  std::string report_in;
  auto* report_cmd = app.add_subcommand("report", "render a machine-readable report");
  report_cmd->add_option("--in", report_in, "report json file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) {
      synth.start = Date::parse(synth_start);
      if (!synth_regime.empty()) synth.regime_date = Date::parse(synth_regime);
      return cmd_synth(synth, synth_price, synth_sentiment);
    }
    if (train_cmd->parsed()) {
      ModelConfig cfg = train_cfg;
      TrainOptions opts = train_opts;
      if (!train_config_path.empty()) {
        const RunConfig rc = load_run_config(train_config_path);
        cfg = rc.model;
        opts = rc.train;
        // Explicit flags win over the config file.
        if (train_cmd->count("--model")) cfg.kind = train_cfg.kind;
        if (train_cmd->count("--units")) cfg.units = train_cfg.units;
        if (train_cmd->count("--dropout")) cfg.dropout = train_cfg.dropout;
        if (train_cmd->count("--alpha")) cfg.alpha = train_cfg.alpha;
        if (train_cmd->count("--modules"))
          cfg.rim.num_modules_total = train_cfg.rim.num_modules_total;
        if (train_cmd->count("--active"))
          cfg.rim.num_modules_active = train_cfg.rim.num_modules_active;
        if (train_cmd->count("--rim-units")) cfg.rim.units = train_cfg.rim.units;
        if (train_cmd->count("--epochs")) opts.epochs = train_opts.epochs;
        if (train_cmd->count("--batch")) opts.batch_size = train_opts.batch_size;
        if (train_cmd->count("--lr")) opts.learning_rate = train_opts.learning_rate;
        if (train_cmd->count("--l1")) opts.l1_weight = train_opts.l1_weight;
        if (train_cmd->count("--patience")) opts.patience = train_opts.patience;
        if (train_cmd->count("--no-early-stop")) opts.early_stop = false;
        if (train_cmd->count("--seed")) opts.seed = train_opts.seed;
      }
      return cmd_train(train_data, cfg, opts, train_checkpoint, train_report);
    }
    if (grid_cmd->parsed()) {
      if (grid_folds == 0) grid_folds = grid_kind == "alpha_t_rim" ? 3 : 5;
      return cmd_grid_search(grid_data, grid_kind, grid_folds, grid_samples, grid_full, grid_opts,
                             grid_checkpoint, grid_report);
    }
    if (eval_cmd->parsed()) return cmd_evaluate(eval_data, eval_checkpoint, eval_report);
    if (grad_cmd->parsed()) return cmd_gradcheck(grad_seed);
    if (report_cmd->parsed()) return cmd_report(report_in);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
