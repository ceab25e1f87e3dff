#include <doctest.h>

#include <map>

#include "helpers.hpp"
#include "step/errors.hpp"
#include "step/multitask.hpp"

using namespace step;

namespace {

constexpr std::size_t kT = 4, kN = 2, kD = 8;

struct Fixture {
  std::map<std::filesystem::path, FeatureSequence> store;
  std::size_t loads = 0;

  explicit Fixture(std::size_t clips) {
    std::mt19937_64 rng(17);
    for (std::size_t i = 0; i < clips; ++i) {
      const auto id = "clip" + std::to_string(i);
      store[std::filesystem::path("/feats") / (id + ".stepfeat")] = testutil::random_features(rng, kT, kN, kD, true, id);
    }
  }

  FeatureLoader loader() {
    return [this](const std::filesystem::path& p, const std::string&) {
      ++loads;
      return store.at(p);
    };
  }

  // Task with C classes whose labels are a function of the clip index.
  TaskSpec task(const std::string& name, std::size_t classes, std::uint64_t seed, ProbeVariant v) {
    TaskSpec t{name, {}, SymmetricSplit(classes, {{0, 1}}), init_params<float>(make_probe_config(v, kD, 2, classes, kT, kN), seed)};
    t.manifest.frames = kT;
    t.manifest.tokens = kN;
    t.manifest.dim = kD;
    t.manifest.base_dir = "/";
    for (std::size_t c = 0; c < classes; ++c) t.manifest.class_names.push_back(name + std::to_string(c));
    std::size_t i = 0;
    for (const auto& [path, f] : store) {
      // Relative paths, so each manifest resolves through base_dir.
      t.manifest.clips.push_back({f.clip_id, path.relative_path(), (i * 7 + seed) % classes, Split::Test});
      ++i;
    }
    return t;
  }

  Dataset dataset_for(const TaskSpec& t) const {
    Dataset ds;
    ds.manifest = t.manifest;
    for (const auto& c : t.manifest.clips) ds.features.push_back(store.at(t.manifest.resolve(c)));
    return ds;
  }
};

}  // namespace

TEST_CASE("three heads over 100 clips load each feature file once") {
  Fixture fx(100);
  MultiTaskSpec spec;
  spec.tasks.push_back(fx.task("verb", 6, 1, ProbeVariant::Step));
  spec.tasks.push_back(fx.task("noun", 4, 2, ProbeVariant::Linear));
  spec.tasks.push_back(fx.task("dir", 3, 3, ProbeVariant::Attentive));
  spec.shared_gflops = 12.5;
  const auto r = multi_task_evaluate(spec, 1, fx.loader());
  CHECK(r.clips == 100);
  CHECK(r.feature_loads == 100);
  CHECK(fx.loads == 100);
  REQUIRE(r.reports.size() == 3);

  double heads = 0;
  for (std::size_t t = 0; t < 3; ++t) {
    const auto& task = spec.tasks[t];
    // Same predictions as evaluating the head on its own.
    const auto alone = evaluate(task.model, fx.dataset_for(task), task.pairs);
    CHECK(r.reports[t].confusion == alone.confusion);
    CHECK(r.reports[t].overall_acc == alone.overall_acc);
    CHECK(r.reports[t].param_count == task.model.count_params());
    CHECK(r.head_gflops[t] == doctest::Approx(estimate_probe_flops(task.model.config) / 1e9));
    heads += r.head_gflops[t];
  }
  CHECK(r.shared_gflops == 12.5);
  CHECK(r.total_gflops == doctest::Approx(12.5 + heads));

  auto threaded = multi_task_evaluate(spec, 4, fx.loader());
  for (std::size_t t = 0; t < 3; ++t) CHECK(threaded.reports[t].confusion == r.reports[t].confusion);
}

TEST_CASE("clip order may differ between task manifests") {
  Fixture fx(12);
  MultiTaskSpec spec;
  spec.tasks.push_back(fx.task("a", 3, 1, ProbeVariant::Linear));
  auto b = fx.task("b", 3, 2, ProbeVariant::Linear);
  std::reverse(b.manifest.clips.begin(), b.manifest.clips.end());
  spec.tasks.push_back(b);
  const auto r = multi_task_evaluate(spec, 1, fx.loader());
  CHECK(r.feature_loads == 12);
  const auto alone = evaluate(b.model, fx.dataset_for(b), b.pairs);
  CHECK(r.reports[1].confusion == alone.confusion);
}

TEST_CASE("multitask contract checks") {
  Fixture fx(5);
  MultiTaskSpec spec;
  CHECK_THROWS_AS(multi_task_evaluate(spec, 1, fx.loader()), ContractError);

  spec.tasks.push_back(fx.task("a", 3, 1, ProbeVariant::Linear));
  SUBCASE("head dim mismatch") {
    auto bad = fx.task("b", 3, 2, ProbeVariant::Linear);
    bad.model = init_params<float>(make_probe_config(ProbeVariant::Linear, kD + 1, 1, 3, kT, kN), 0);
    spec.tasks.push_back(bad);
    CHECK_THROWS_AS(multi_task_evaluate(spec, 1, fx.loader()), ConfigError);
  }
  SUBCASE("different clip sets") {
    auto other = fx.task("b", 3, 2, ProbeVariant::Linear);
    other.manifest.clips.pop_back();
    spec.tasks.push_back(other);
    CHECK_THROWS_AS(multi_task_evaluate(spec, 1, fx.loader()), ContractError);
  }
  SUBCASE("class count mismatch") {
    auto other = fx.task("b", 3, 2, ProbeVariant::Linear);
    other.model = init_params<float>(make_probe_config(ProbeVariant::Linear, kD, 1, 5, kT, kN), 0);
    spec.tasks.push_back(other);
    CHECK_THROWS_AS(multi_task_evaluate(spec, 1, fx.loader()), ContractError);
  }
  SUBCASE("empty split") {
    spec.split = Split::Val;
    CHECK_THROWS_AS(multi_task_evaluate(spec, 1, fx.loader()), ContractError);
  }
}
