#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "helpers.hpp"
#include "step/dataset.hpp"
#include "step/errors.hpp"
#include "step/evaluate.hpp"

using namespace step;
namespace fs = std::filesystem;

namespace {

const char* kManifest = R"(STEP-MANIFEST 1
# two classes
dims 2 1 3
classes 2
class open
class close

clip a open train feats/a.stepfeat
clip b close test feats/b.stepfeat
)";

std::string replace(std::string s, const std::string& from, const std::string& to) {
  s.replace(s.find(from), from.size(), to);
  return s;
}

}  // namespace

TEST_CASE("manifest parse and format round trip") {
  auto m = parse_manifest(kManifest, "/data");
  CHECK(m.frames == 2);
  CHECK(m.tokens == 1);
  CHECK(m.dim == 3);
  CHECK(m.class_names == std::vector<std::string>{"open", "close"});
  REQUIRE(m.clips.size() == 2);
  CHECK(m.clips[1].label == 1);
  CHECK(m.clips[1].split == Split::Test);
  CHECK(m.resolve(m.clips[0]) == fs::path("/data/feats/a.stepfeat"));
  CHECK(m.indices(Split::Train) == std::vector<std::size_t>{0});
  auto again = parse_manifest(format_manifest(m), "/data");
  CHECK(format_manifest(again) == format_manifest(m));
}

TEST_CASE("manifest errors name the line") {
  CHECK_THROWS_WITH_AS(parse_manifest(replace(kManifest, "clip b close", "clip b shut")),
                       doctest::Contains("line 9: unknown class name 'shut'"), DataError);
  CHECK_THROWS_WITH_AS(parse_manifest(replace(kManifest, "clip b close", "clip a close")),
                       doctest::Contains("duplicate clip_id 'a'"), DataError);
  CHECK_THROWS_AS(parse_manifest(replace(kManifest, "STEP-MANIFEST 1", "STEP-MANIFEST 2")), DataError);
  CHECK_THROWS_AS(parse_manifest(replace(kManifest, "classes 2", "classes 3")), DataError);
  CHECK_THROWS_AS(parse_manifest(replace(kManifest, "dims 2 1 3", "dims 2 x 3")), DataError);
  CHECK_THROWS_AS(parse_manifest(replace(kManifest, "test feats", "holdout feats")), DataError);
  CHECK_THROWS_AS(parse_manifest(replace(kManifest, "class close", "class open")), DataError);
  CHECK_THROWS_AS(parse_manifest("dims 1 1 1\n"), DataError);
}

TEST_CASE("manifest with zero clips is valid; evaluation refuses it") {
  const auto m = parse_manifest("STEP-MANIFEST 1\ndims 2 1 3\nclasses 1\nclass only\n");
  CHECK(m.clips.empty());
  const auto ds = load_dataset(m);
  CHECK(ds.size() == 0);
  auto model = init_params<float>(make_probe_config(ProbeVariant::Linear, 3, 1, 1, 2, 1), 0);
  CHECK_THROWS_WITH_AS(evaluate(model, ds, SymmetricSplit(1, {})), doctest::Contains("empty"), ContractError);
}

TEST_CASE("load_dataset checks container dims against the header") {
  const auto dir = fs::temp_directory_path() / ("step_manifest_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir / "feats");
  std::mt19937_64 rng(1);
  write_features(dir / "feats/a.stepfeat", testutil::random_features(rng, 2, 1, 3));
  write_features(dir / "feats/b.stepfeat", testutil::random_features(rng, 2, 1, 4));
  fs::path path = dir / "manifest.txt";
  {
    std::ofstream(path) << kManifest;
  }
  const auto m = load_manifest(path);
  CHECK_THROWS_WITH_AS(load_dataset(m), doctest::Contains("'b'"), DataError);
  write_features(dir / "feats/b.stepfeat", testutil::random_features(rng, 2, 1, 3));
  const auto ds = load_dataset(m);
  CHECK(ds.size() == 2);
  CHECK(ds.features[1].clip_id == "b");
  fs::remove(dir / "feats/a.stepfeat");
  CHECK_THROWS_AS(load_dataset(m), DataError);
  fs::remove_all(dir);
}

TEST_CASE("pair files") {
  const std::vector<std::string> names{"A", "B", "C", "D"};
  SUBCASE("mirror is symmetric and sets partition the classes") {
    const auto s = parse_pairs("# pairs\nA B\n", names);
    CHECK(s.mirror(0) == 1u);
    CHECK(s.mirror(1) == 0u);
    CHECK_FALSE(s.mirror(2).has_value());
    CHECK(s.sym_classes() == std::vector<std::size_t>{0, 1});
    CHECK(s.nsym_classes() == std::vector<std::size_t>{2, 3});
    CHECK(format_pairs(s, names) == "A B\n");
  }
  SUBCASE("overlapping pairs") {
    CHECK_THROWS_WITH_AS(parse_pairs("A B\nB C\n", names), doctest::Contains("two pairs"), DataError);
  }
  SUBCASE("unknown class") {
    CHECK_THROWS_WITH_AS(parse_pairs("A Z\n", names), doctest::Contains("unknown class name 'Z'"), DataError);
  }
  SUBCASE("self pair and malformed line") {
    CHECK_THROWS_AS(parse_pairs("A A\n", names), DataError);
    CHECK_THROWS_AS(parse_pairs("A B C\n", names), DataError);
    CHECK_THROWS_AS(SymmetricSplit(4, {{0, 1}, {1, 2}}), DataError);
  }
}

TEST_CASE("pair file with 10 pairs and 14 singleton classes") {
  std::vector<std::string> names;
  for (int i = 0; i < 34; ++i) names.push_back("c" + std::to_string(i));
  std::string text;
  for (int k = 0; k < 10; ++k) text += names[2 * k] + " " + names[2 * k + 1] + "\n";
  const auto s = parse_pairs(text, names);
  CHECK(s.sym_classes().size() == 20);
  CHECK(s.nsym_classes().size() == 14);
  for (std::size_t c = 0; c < 34; ++c) {
    if (auto m = s.mirror(c)) CHECK(s.mirror(*m) == c);
  }
}

TEST_CASE("split names") {
  CHECK(parse_split("val") == Split::Val);
  CHECK(to_string(Split::Test) == "test");
  CHECK_THROWS_AS(parse_split("dev"), DataError);
}
