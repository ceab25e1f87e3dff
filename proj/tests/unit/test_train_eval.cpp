#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "helpers.hpp"
#include "step/errors.hpp"
#include "step/evaluate.hpp"
#include "step/synth.hpp"
#include "step/train.hpp"

using namespace step;

namespace {

SynthConfig tiny_synth(double noise = 0.1) {
  SynthConfig c;
  c.num_pairs = 2;
  c.num_nsym = 2;
  c.clips_per_class = 20;
  c.frames = 6;
  c.tokens = 3;
  c.dim = 16;
  c.noise_std = noise;
  return c;
}

ProbeConfig probe_for(ProbeVariant v, const SynthConfig& s) {
  return make_probe_config(v, s.dim, 4, s.num_classes(), s.frames, s.tokens);
}

TrainConfig quick_train(std::size_t epochs = 5) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 8;
  t.learning_rate = 3e-3;
  t.warmup_epochs = 1;
  return t;
}

bool same_params(const ProbeModel<float>& a, const ProbeModel<float>& b) {
  if (a.params.size() != b.params.size()) return false;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    const auto x = a.params.tensor(i).data(), y = b.params.tensor(i).data();
    if (!std::equal(x.begin(), x.end(), y.begin(), y.end())) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("lr = 0 leaves parameters bit-identical") {
  const auto data = generate_synthetic(tiny_synth());
  auto model = init_params<float>(probe_for(ProbeVariant::Step, tiny_synth()), 1);
  auto cfg = quick_train(3);
  cfg.learning_rate = 0.0;
  const auto result = train(model.clone(), data.dataset, cfg);
  CHECK(same_params(result.model, model));
  CHECK(result.history.size() == 3);
}

TEST_CASE("a single clip is memorized") {
  Dataset ds;
  ds.manifest.class_names = {"a", "b", "c"};
  ds.manifest.frames = 3;
  ds.manifest.tokens = 2;
  ds.manifest.dim = 8;
  std::mt19937_64 rng(5);
  ds.features.push_back(testutil::random_features(rng, 3, 2, 8, true, "only"));
  ds.manifest.clips.push_back({"only", "only.stepfeat", 2, Split::Train});
  auto model = init_params<float>(make_probe_config(ProbeVariant::Step, 8, 2, 3, 3, 2), 3);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 1;
  cfg.learning_rate = 1e-3;
  cfg.schedule = LrSchedule::Constant;
  const auto result = train(model, ds, cfg);
  CHECK(result.history.back().train_loss < 1e-2);
  CHECK(result.history.front().train_loss > result.history.back().train_loss);
}

TEST_CASE("training is deterministic and independent of the thread count") {
  const auto data = generate_synthetic(tiny_synth());
  const auto model = init_params<float>(probe_for(ProbeVariant::Step, tiny_synth()), 2);
  auto cfg = quick_train(3);
  const auto a = train(model.clone(), data.dataset, cfg);
  const auto b = train(model.clone(), data.dataset, cfg);
  cfg.threads = 3;
  const auto c = train(model.clone(), data.dataset, cfg);
  for (const auto* r : {&b, &c}) {
    REQUIRE(r->history.size() == a.history.size());
    for (std::size_t e = 0; e < a.history.size(); ++e) {
      CHECK(r->history[e].train_loss == a.history[e].train_loss);
      CHECK(r->history[e].val_acc == a.history[e].val_acc);
    }
    CHECK(same_params(r->model, a.model));
  }
  cfg.threads = 1;
  cfg.seed = 43;
  const auto d = train(model.clone(), data.dataset, cfg);
  CHECK_FALSE(same_params(d.model, a.model));
}

TEST_CASE("training rejects bad inputs") {
  auto data = generate_synthetic(tiny_synth());
  const auto cfg_probe = probe_for(ProbeVariant::Linear, tiny_synth());
  SUBCASE("empty train split") {
    for (auto& c : data.dataset.manifest.clips) c.split = Split::Test;
    CHECK_THROWS_AS(train(init_params<float>(cfg_probe, 0), data.dataset, quick_train()), ContractError);
  }
  SUBCASE("class count mismatch") {
    auto p = cfg_probe;
    p.num_classes = 5;
    CHECK_THROWS_AS(train(init_params<float>(p, 0), data.dataset, quick_train()), ContractError);
  }
  SUBCASE("invalid config") {
    auto t = quick_train();
    t.batch_size = 0;
    CHECK_THROWS_AS(train(init_params<float>(cfg_probe, 0), data.dataset, t), ConfigError);
    t = quick_train();
    t.beta1 = 1.0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
  }
  SUBCASE("non-finite loss aborts with diagnostics") {
    data.dataset.features[0].patch_tokens[0] = std::numeric_limits<float>::quiet_NaN();
    auto t = quick_train();
    t.batch_size = 1000;
    CHECK_THROWS_WITH_AS(train(init_params<float>(probe_for(ProbeVariant::Step, tiny_synth()), 0), data.dataset, t),
                         doctest::Contains("epoch 1, batch 1, lr"), NumericError);
  }
}

TEST_CASE("every Step parameter receives gradient") {
  for (auto style : {BlockStyle::AttnOnly, BlockStyle::FullBlock}) {
    auto cfg = make_probe_config(ProbeVariant::Step, 8, 2, 3, 3, 2);
    cfg.block_style = style;
    auto model = init_params<float>(cfg, 4);
    std::mt19937_64 rng(1);
    Tape<float> tape;
    tape.backward(ops::cross_entropy(tape, forward(tape, model, testutil::random_features(rng, 3, 2, 8)), 1));
    for (const auto& [name, t] : model.params) {
      double mx = 0;
      for (float g : t.grad()) mx = std::max(mx, double(std::abs(g)));
      INFO(name);
      if (name == "attn.k.bias") {
        CHECK(mx < 1e-6);  // softmax is shift invariant per query
      } else {
        CHECK(mx > 0);
      }
    }
  }
}

TEST_CASE("learning-rate schedule") {
  TrainConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.epochs = 10;
  cfg.warmup_epochs = 2;
  const std::size_t spe = 5;
  CHECK(scheduled_lr(cfg, 0, spe) == doctest::Approx(0.1));
  CHECK(scheduled_lr(cfg, 9, spe) == doctest::Approx(1.0));
  CHECK(scheduled_lr(cfg, 10, spe) == doctest::Approx(1.0));
  CHECK(scheduled_lr(cfg, 30, spe) == doctest::Approx(0.5));
  CHECK(scheduled_lr(cfg, 49, spe) == doctest::Approx(0.5 * (1 + std::cos(M_PI * 39.0 / 40.0))));
  for (std::size_t s = 10; s + 1 < 50; ++s) CHECK(scheduled_lr(cfg, s + 1, spe) <= scheduled_lr(cfg, s, spe));
  cfg.schedule = LrSchedule::Constant;
  CHECK(scheduled_lr(cfg, 0, spe) == 1.0);
  CHECK(scheduled_lr(cfg, 49, spe) == 1.0);
}

TEST_CASE("argmax breaks ties toward the lowest index") {
  const std::vector<float> a{1.0f, 3.0f, 3.0f, 2.0f};
  CHECK(argmax(a) == 1);
  const std::vector<float> b{0.0f, 0.0f};
  CHECK(argmax(b) == 0);
}

TEST_CASE("report of a perfect and a constant predictor") {
  const std::vector<std::string> names{"a", "b", "c", "d"};
  const SymmetricSplit split(4, {{0, 1}});
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < 4; ++c)
    for (int i = 0; i < 5; ++i) labels.push_back(c);
  const auto perfect = build_report(labels, labels, names, split);
  CHECK(perfect.overall_acc == 1.0);
  CHECK(perfect.sym_acc == 1.0);
  CHECK(perfect.nsym_acc == 1.0);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(perfect.confusion[i][j] == (i == j ? 5u : 0u));

  const std::vector<std::size_t> constant(labels.size(), 2);
  const auto r = build_report(labels, constant, names, split);
  CHECK(r.overall_acc == doctest::Approx(0.25));
  CHECK(r.sym_acc == 0.0);
  CHECK(r.nsym_acc == doctest::Approx(0.5));
  CHECK(r.sym_support == 10);
  CHECK(r.nsym_support == 10);
  // Class 0 never predicted as its mirror; class 3's top confusion is 2.
  CHECK(r.confusions[0].partner == 1u);
  CHECK(r.confusions[0].is_mirror);
  CHECK(r.confusions[0].rate == 0.0);
  CHECK(r.confusions[3].partner == 2u);
  CHECK(r.confusions[3].rate == 1.0);
  CHECK_FALSE(r.confusions[2].partner.has_value());
}

TEST_CASE("confusion invariants on random predictions") {
  std::mt19937_64 rng(8);
  const std::vector<std::string> names{"a", "b", "c", "d", "e"};
  const SymmetricSplit split(5, {{0, 3}});
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> labels, preds;
    for (int i = 0; i < 60; ++i) {
      labels.push_back(rng() % 5);
      preds.push_back(rng() % 5);
    }
    const auto r = build_report(labels, preds, names, split);
    double weighted = 0;
    std::size_t total = 0;
    for (std::size_t c = 0; c < 5; ++c) {
      const auto row = std::accumulate(r.confusion[c].begin(), r.confusion[c].end(), std::size_t{0});
      CHECK(row == r.support[c]);
      CHECK(r.per_class_acc[c] >= 0.0);
      CHECK(r.per_class_acc[c] <= 1.0);
      weighted += r.per_class_acc[c] * static_cast<double>(r.support[c]);
      total += r.support[c];
    }
    CHECK(total == 60);
    CHECK(r.overall_acc == doctest::Approx(weighted / 60.0));
    CHECK(r.sym_support + r.nsym_support == 60);
  }
  CHECK_THROWS_AS(build_report({0, 1}, {0}, names, split), ContractError);
  CHECK_THROWS_AS(build_report({0}, {7}, names, split), IndexError);
}

TEST_CASE("order-blind probes: accuracy is unchanged by any corruption") {
  const auto s = tiny_synth();
  const auto data = generate_synthetic(s);
  for (auto v : {ProbeVariant::Linear, ProbeVariant::Attentive, ProbeVariant::SelfAttn}) {
    const auto trained = train(init_params<float>(probe_for(v, s), 1), data.dataset, quick_train(4));
    auto report = evaluate(trained.model, data.dataset, data.split);
    sensitivity_analysis(trained.model, data.dataset, data.split,
                         {CorruptionMode::reverse(), CorruptionMode::shuffle(1), CorruptionMode::shuffle(2)}, report);
    REQUIRE(report.corruption.size() == 3);
    for (const auto& c : report.corruption) {
      CHECK(c.delta == 0.0);
      CHECK(c.overall_acc == report.overall_acc);
      CHECK(c.sym_acc == report.sym_acc);
      CHECK(c.nsym_acc == report.nsym_acc);
    }
    const auto idx = data.dataset.manifest.indices(Split::Test);
    CHECK(predict(trained.model, data.dataset, idx, 1) ==
          predict(trained.model, data.dataset, idx, 1, CorruptionMode::reverse()));
  }
}

TEST_CASE("noiseless pairs: an order-blind probe splits its mass between the pair") {
  const auto s = tiny_synth(0.0);
  const auto data = generate_synthetic(s);
  auto t = quick_train(30);
  t.learning_rate = 1e-2;
  const auto trained = train(init_params<float>(probe_for(ProbeVariant::Linear, s), 1), data.dataset, t);
  const auto r = evaluate(trained.model, data.dataset, data.split);
  for (auto c : data.split.sym_classes()) {
    const auto m = *data.split.mirror(c);
    const double on_pair = static_cast<double>(r.confusion[c][c] + r.confusion[c][m]) /
                           static_cast<double>(r.support[c]);
    INFO("class " << c);
    CHECK(on_pair == 1.0);
  }
  // A pair's two classes give identical inputs, so their predictions coincide.
  CHECK(r.sym_acc == doctest::Approx(0.5));
  CHECK(r.nsym_acc == 1.0);
}

TEST_CASE("evaluate fills metadata and rejects mismatches") {
  const auto s = tiny_synth();
  const auto data = generate_synthetic(s);
  const auto model = init_params<float>(probe_for(ProbeVariant::Step, s), 0);
  const auto r = evaluate(model, data.dataset, data.split, Split::Val);
  CHECK(r.total == data.dataset.manifest.indices(Split::Val).size());
  CHECK(r.param_count == model.count_params());
  CHECK(r.probe_gflops == doctest::Approx(estimate_probe_flops(model.config) / 1e9));
  auto wrong = probe_for(ProbeVariant::Step, s);
  wrong.num_classes = 3;
  CHECK_THROWS_AS(evaluate(init_params<float>(wrong, 0), data.dataset, data.split), ContractError);
}
