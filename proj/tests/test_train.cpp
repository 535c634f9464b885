#include <doctest.h>

#include "atrim/checkpoint.hpp"
#include "atrim/data.hpp"
#include "atrim/hyper.hpp"
#include "atrim/report.hpp"
#include "atrim/train.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

using namespace atrim;

namespace {

SplitWindows default_synthetic(int lookback, bool bivariate, int length = 420,
                               std::uint64_t seed = 5) {
  SynthSpec spec;
  spec.length = length;
  spec.seed = seed;
  RawSeries s = generate_synthetic(spec);
  if (!bivariate) {
    for (SeriesRecord& r : s.records) r.sentiment.reset();
  }
  return build_dataset(s, SplitSpec::by_fraction(s, 0.7, 0.15), lookback);
}

HyperDict small_rim_hyper() {
  HyperDict h;
  h.units = 4;
  h.num_rims = 2;
  h.k_modules = 3;
  h.input_key_size = 4;
  h.input_query_size = 4;
  h.input_value_size = 4;
  h.input_keep_prob = 0.9;
  h.comm_heads = 2;
  h.comm_key_size = 4;
  h.comm_query_size = 4;
  h.comm_value_size = 4;
  h.comm_keep_prob = 0.9;
  return h;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("adam: zero gradient, first-step magnitude, convergence") {
  Vector params = Vector::Constant(3, 1.5);
  Adam opt(3);
  const Vector before = params;
  opt.step(params, Vector::Zero(3));
  CHECK((params - before).cwiseAbs().maxCoeff() == 0.0);

  // At step one the bias corrections cancel: the move is lr * g/(|g|+eps).
  Vector p2 = Vector::Zero(2);
  Adam opt2(2, AdamConfig{0.01, 0.9, 0.999, 1e-8});
  Vector g(2);
  g << 3.0, -0.25;
  opt2.step(p2, g);
  CHECK(p2(0) == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p2(1) == doctest::Approx(0.01).epsilon(1e-6));

  // Scripted run frozen beforehand: lr 0.1 on f(x)=x^2 from 1.0 lands at
  // |x| ~ 2.9e-3 after 100 steps.
  Vector x = Vector::Constant(1, 1.0);
  Adam opt3(1, AdamConfig{0.1, 0.9, 0.999, 1e-8});
  for (int t = 0; t < 100; ++t) {
    opt3.step(x, 2.0 * x);
  }
  CHECK(std::abs(x(0)) < 0.1);
  CHECK(x(0) == doctest::Approx(0.002936675681102549).epsilon(1e-9));
}

TEST_CASE("loss: exact zeros, single-error value, brute-force l1") {
  SeededRng rng(1);
  ModelConfig cfg;
  cfg.kind = "rnn";
  cfg.units = 3;
  cfg.features = 1;
  auto model = make_forecaster(cfg, rng);

  Vector pred(5), target(5);
  pred << 1, 0, 0, 0, 0;
  target.setZero();
  CHECK(loss_value(*model, target, target, 0.0) == 0.0);
  CHECK(loss_value(*model, pred, target, 0.0) == doctest::Approx(0.2).epsilon(1e-15));

  // Brute-force the penalty from the named weight tensors.
  double by_hand = 0.0;
  for (const auto& e : model->registry().entries()) {
    if (!e.weight) continue;
    for (Index i = 0; i < e.rows * e.cols; ++i) by_hand += std::abs(e.data[i]);
  }
  const double l1 = 0.01;
  CHECK(loss_value(*model, target, target, l1) == doctest::Approx(l1 * by_hand).epsilon(1e-12));

  // Monotone in the weight: a larger multiplier never shrinks the term.
  CHECK(loss_value(*model, target, target, 0.02) >= loss_value(*model, target, target, 0.01));
}

TEST_CASE("mape per step: exact cases and scale invariance") {
  Matrix perfect(3, 5);
  perfect.setConstant(100.0);
  const Vector zero = mape_per_step(perfect, perfect);
  CHECK(zero.cwiseAbs().maxCoeff() == 0.0);

  Matrix pred(2, 5), act(2, 5);
  act.setConstant(100.0);
  pred.setConstant(110.0);
  const Vector ten = mape_per_step(pred, act);
  for (int s = 0; s < 5; ++s) CHECK(ten(s) == doctest::Approx(10.0).epsilon(1e-12));

  // Hand computation: (|100-110|/100 + |200-190|/200)/2 * 100 = 7.5.
  Matrix p2(2, 1), a2(2, 1);
  a2 << 100, 200;
  p2 << 110, 190;
  CHECK(mape_per_step(p2, a2)(0) == doctest::Approx(7.5).epsilon(1e-12));

  SeededRng rng(2);
  Matrix pr(4, 5), ar(4, 5);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 5; ++j) {
      ar(i, j) = 50.0 + 10.0 * rng.uniform();
      pr(i, j) = ar(i, j) * (0.9 + 0.2 * rng.uniform());
    }
  const Vector base = mape_per_step(pr, ar);
  const Vector scaled = mape_per_step(3.7 * pr, 3.7 * ar);
  CHECK((base - scaled).cwiseAbs().maxCoeff() <= 1e-12);

  Matrix neg = ar;
  neg(1, 2) = 0.0;
  CHECK_THROWS_AS(mape_per_step(pr, neg), std::invalid_argument);
}

TEST_CASE("sampled hyper assignments respect the grid and replay per seed") {
  SeededRng rng(7);
  const auto dicts = sample_hyper_dicts(rng, 300);
  CHECK(dicts.size() == 300);
  for (const HyperDict& h : dicts) {
    CHECK(h.num_rims <= h.k_modules);
    CHECK(h.input_query_size == h.input_key_size);
    CHECK(h.comm_query_size == h.comm_key_size);
    CHECK(in_grid(h));
  }
  for (std::size_t i = 0; i < dicts.size(); ++i)
    for (std::size_t j = i + 1; j < dicts.size(); ++j) CHECK(!(dicts[i] == dicts[j]));

  SeededRng r1(99), r2(99);
  const auto a = sample_hyper_dicts(r1, 40);
  const auto b = sample_hyper_dicts(r2, 40);
  CHECK(a == b);
}

TEST_CASE("baseline grid shapes") {
  const auto reduced = baseline_grid(false);
  CHECK(reduced.size() == 3 * 2 * 2);
  const auto full = baseline_grid(true);
  CHECK(full.size() == 50 * 4 * 6);
  CHECK(full.front().hidden_units == 5);
  CHECK(full.back().hidden_units == 250);
}

TEST_CASE("cross-validation fold arithmetic") {
  const auto bounds = cv_fold_boundaries(300, 2);
  REQUIRE(bounds.size() == 4);
  CHECK(bounds[0] == 0);
  CHECK(bounds[1] == 100);
  CHECK(bounds[2] == 200);
  CHECK(bounds[3] == 300);
  CHECK_THROWS_AS(cv_fold_boundaries(2, 2), std::invalid_argument);
  const auto five = cv_fold_boundaries(601, 5);
  CHECK(five.back() == 601);
  for (std::size_t i = 1; i < five.size(); ++i) CHECK(five[i] > five[i - 1]);
}

TEST_CASE("training with zero epochs is the deterministic initial model") {
  const SplitWindows data = default_synthetic(5, false);
  TrainOptions opts;
  opts.epochs = 0;
  opts.seed = 31;
  const TrainedModel a = train("rnn", data, baseline_grid(false)[0], opts);
  const TrainedModel b = train("rnn", data, baseline_grid(false)[0], opts);
  CHECK(a.result.train.mse == b.result.train.mse);
  CHECK(a.result.test.mse == b.result.test.mse);
  CHECK((a.model->registry().flatten() - b.model->registry().flatten()).cwiseAbs().maxCoeff() ==
        0.0);
}

TEST_CASE("same seed twice reproduces training bitwise") {
  const SplitWindows data = default_synthetic(5, true);
  HyperDict h = small_rim_hyper();
  TrainOptions opts;
  opts.epochs = 3;
  opts.seed = 17;
  opts.early_stop = false;
  const TrainedModel a = train("alpha_t_rim", data, h, opts);
  const TrainedModel b = train("alpha_t_rim", data, h, opts);
  CHECK((a.model->registry().flatten() - b.model->registry().flatten()).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK(a.result.test.mse == b.result.test.mse);
  CHECK((a.result.test_mape - b.result.test_mape).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("training lowers the training error on synthetic data") {
  const SplitWindows data = default_synthetic(5, false);
  HyperDict h;
  h.hidden_units = 8;
  h.dropout = 0.0;
  h.l1_weight = 0.0;
  TrainOptions opts;
  opts.seed = 3;
  opts.epochs = 0;
  const double initial = train("rnn", data, h, opts).result.train.mse;
  opts.epochs = 15;
  opts.early_stop = false;
  const double trained = train("rnn", data, h, opts).result.train.mse;
  CHECK(trained < initial);
}

TEST_CASE("cross-validation prefers the candidate that can learn") {
  const SplitWindows data = default_synthetic(5, false);
  HyperDict weak;
  weak.hidden_units = 1;
  weak.dropout = 0.6;
  weak.l1_weight = 0.1;
  HyperDict strong;
  strong.hidden_units = 12;
  strong.dropout = 0.0;
  strong.l1_weight = 0.0;

  TrainOptions opts;
  opts.epochs = 12;
  opts.seed = 11;
  opts.early_stop = false;
  const CvOutcome out = ts_cross_validate("rnn", data.train, {weak, strong}, 3, opts);
  CHECK(out.best_index == 1);
  CHECK(out.mean_val_mse[1] < out.mean_val_mse[0]);

  // A single candidate comes back untouched.
  const CvOutcome single = ts_cross_validate("rnn", data.train, {weak}, 2, opts);
  CHECK(single.best == weak);
}

TEST_CASE("divergence aborts with the last finite epoch recorded") {
  const SplitWindows data = default_synthetic(5, false);
  HyperDict h;
  h.hidden_units = 4;
  h.dropout = 0.0;
  h.l1_weight = 0.0;
  TrainOptions opts;
  opts.epochs = 6;
  opts.seed = 1;
  opts.learning_rate = 1e18;  // drives saturation and non-finite losses
  const TrainedModel m = train("rnn", data, h, opts);
  CHECK((m.result.diverged || m.result.epochs_run == 6));
}

TEST_CASE("checkpoints round-trip bitwise and reject mismatches") {
  const std::string path = "/tmp/atrim_test_ckpt.json";
  SeededRng rng(13);
  ModelConfig cfg;
  cfg.kind = "alpha_t_rim";
  cfg.lookback = 5;
  cfg.features = 2;
  cfg.rim.units = 3;
  cfg.rim.num_modules_total = 2;
  cfg.rim.num_modules_active = 1;
  cfg.rim.input_key_size = 4;
  cfg.rim.input_query_size = 4;
  cfg.rim.input_value_size = 3;
  cfg.rim.comm_heads = 2;
  cfg.rim.comm_key_size = 3;
  cfg.rim.comm_query_size = 3;
  cfg.rim.comm_value_size = 2;
  auto model = make_forecaster(cfg, rng);
  save_checkpoint(path, *model, cfg, 13);

  LoadedModel loaded = load_checkpoint(path);
  CHECK(loaded.seed == 13);
  CHECK(loaded.config.kind == "alpha_t_rim");
  CHECK((loaded.model->registry().flatten() - model->registry().flatten()).cwiseAbs().maxCoeff() ==
        0.0);

  Matrix window(5, 2);
  SeededRng wrng(3);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 2; ++j) window(i, j) = wrng.normal();
  CHECK((loaded.model->predict(window) - model->predict(window)).cwiseAbs().maxCoeff() == 0.0);

  // Tamper with a tensor shape: load must refuse.
  {
    std::ifstream in(path);
    nlohmann::json j = nlohmann::json::parse(in);
    j["tensors"]["readout.b"]["rows"] = 4;
    std::ofstream out(path);
    out << j.dump();
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("readout.b"), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("strict config parsing rejects unknown keys") {
  const nlohmann::json good = {{"kind", "rnn"}, {"units", 7}, {"features", 1}};
  const ModelConfig cfg = model_config_from_json(good);
  CHECK(cfg.units == 7);

  const nlohmann::json bad = {{"kind", "rnn"}, {"unitz", 7}};
  CHECK_THROWS_WITH_AS(model_config_from_json(bad), doctest::Contains("unitz"),
                       std::runtime_error);

  const nlohmann::json bad_rim = {{"kind", "alpha_t_rim"},
                                  {"rim", {{"units", 4}, {"bogus", 1}}}};
  CHECK_THROWS_WITH_AS(model_config_from_json(bad_rim), doctest::Contains("bogus"),
                       std::runtime_error);

  const nlohmann::json bad_train = {{"epochs", 3}, {"velocity", 9}};
  CHECK_THROWS_WITH_AS(train_options_from_json(bad_train), doctest::Contains("velocity"),
                       std::runtime_error);
}

TEST_CASE("reports render both tables and round-trip through the parser") {
  ExperimentReport report;
  report.dataset = "synthetic";
  report.lookback = 10;
  report.horizon = 5;
  report.features = 2;
  for (const char* name : {"rnn", "lstm", "alpha_t_rim"}) {
    ModelReport m;
    m.model = name;
    m.train = {0.01, 0.05};
    m.validation = {0.02, 0.08};
    m.test = {0.03, 0.09};
    m.test_mape = {2.0, 2.5, 3.0, 3.5, 4.0};
    if (m.model == "alpha_t_rim") m.test_mape = {1.0, 1.5, 2.0, 2.5, 3.0};
    m.seed = 42;
    m.epochs_run = 10;
    m.best_epoch = 8;
    m.seconds = 1.25;
    report.models.push_back(m);
  }

  const std::string text = report_to_json(report);
  const ExperimentReport back = report_from_json(text);
  CHECK(back.models.size() == 3);
  CHECK(back.models[2].test_mape[0] == 1.0);
  CHECK(back.models[0].test.mse == 0.03);
  CHECK(back.models[0].seconds == 1.25);

  // Canonical emission carries no wall-clock numbers.
  const std::string canonical = report_to_json(report, false);
  CHECK(canonical.find("seconds") == std::string::npos);

  const std::string human = render_report(report);
  // Five MAPE rows, one per step, with the winner starred.
  for (const char* row : {"\n1 ", "\n2 ", "\n3 ", "\n4 ", "\n5 "}) {
    CHECK(human.find(row) != std::string::npos);
  }
  CHECK(human.find("1.0000*") != std::string::npos);  // best step-1 value flagged
  CHECK(human.find("alpha_t_rim") != std::string::npos);
}

}  // TEST_SUITE
