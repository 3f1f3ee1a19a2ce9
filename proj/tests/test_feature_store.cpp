#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <cstring>
#include <algorithm>

#include "repsim/error.hpp"
#include "repsim/feature_store.hpp"
#include "repsim/npy.hpp"
#include "support.hpp"

using namespace repsim;
using repsim::testing::TempDir;

namespace {

FeatureMatrix small_matrix(Variant v = Variant::Original) {
  RowMatrixF data(3, 2);
  data << 1, 2, 3, 4, 5, 6;
  return FeatureMatrix(data, {"a", "b", "c"}, {0, 1, 0}, v);
}

void write_manifest_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream(path) << body;
}

}  // namespace

TEST_CASE("write then read returns the identical matrix") {
  TempDir dir;
  const auto m = small_matrix();
  write_features(m, dir / "f.npy");
  CHECK(std::filesystem::exists(dir / "f.labels.csv"));
  CHECK(read_features(dir / "f.npy") == m);
}

TEST_CASE("NaN is rejected with its position") {
  RowMatrixF data(2, 2);
  data << 1, 2, std::numeric_limits<float>::quiet_NaN(), 4;
  CHECK_THROWS_WITH_AS(FeatureMatrix(data, {"a", "b"}, {0, 0}), "non-finite value at (1, 0)",
                       ValidationError);
  data(1, 0) = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(FeatureMatrix(data, {"a", "b"}, {0, 0}), ValidationError);
}

TEST_CASE("1x1 file has the byte length implied by the format") {
  // Header: 6 magic + 2 version + 2 length bytes, then the dict literal and
  // a newline, padded with spaces to a multiple of 64; payload is 4 bytes.
  const std::string dict = "{'descr': '<f4', 'fortran_order': False, 'shape': (1, 1), }";
  const std::size_t unpadded = 10 + dict.size() + 1;
  const std::size_t expected = (unpadded + 63) / 64 * 64 + 4;
  REQUIRE(expected == 132);

  TempDir dir;
  RowMatrixF data(1, 1);
  data << 0.5f;
  write_features(FeatureMatrix(data, {"only"}, {3}), dir / "one.npy");
  CHECK(std::filesystem::file_size(dir / "one.npy") == expected);

  std::ifstream in(dir / "one.npy", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(bytes.substr(0, 6) == "\x93NUMPY");
  CHECK(bytes[6] == 1);
  CHECK(bytes[7] == 0);
  CHECK(bytes.substr(10, dict.size()) == dict);
  CHECK(bytes[127] == '\n');
  // 0.5f = 0x3F000000, little-endian
  CHECK(bytes.substr(128) == std::string("\x00\x00\x00\x3F", 4));
}

TEST_CASE("label count mismatch is reported") {
  TempDir dir;
  Rng rng(1);
  const auto x = repsim::testing::gaussian(rng, 10, 3);
  write_features(repsim::testing::make_features(x), dir / "f.npy");
  // Drop the last label row.
  auto rows = read_labels_csv(dir / "f.labels.csv");
  rows.pop_back();
  write_labels_csv(rows, dir / "f.labels.csv");
  CHECK_THROWS_WITH_AS(read_features(dir / "f.npy"),
                       doctest::Contains("label count 9 != sample count 10"), ValidationError);
}

TEST_CASE("truncated payload is a malformed file") {
  TempDir dir;
  write_features(small_matrix(), dir / "f.npy");
  std::filesystem::resize_file(dir / "f.npy", std::filesystem::file_size(dir / "f.npy") - 3);
  CHECK_THROWS_WITH_AS(read_features(dir / "f.npy"), doctest::Contains("malformed npy"), IoError);
}

TEST_CASE("malformed headers are rejected") {
  const std::vector<float> v{1, 2};
  std::string good = npy::encode(1, 2, v);
  CHECK(npy::decode(good).values == v);

  std::string bad_magic = good;
  bad_magic[1] = 'X';
  CHECK_THROWS_AS(npy::decode(bad_magic), IoError);

  std::string f8 = good;
  f8.replace(f8.find("<f4"), 3, "<f8");
  CHECK_THROWS_WITH_AS(npy::decode(f8), doctest::Contains("'<f8'"), IoError);

  std::string fortran = good;
  fortran.replace(fortran.find("False"), 5, "True ");
  CHECK_THROWS_WITH_AS(npy::decode(fortran), doctest::Contains("fortran_order"), IoError);

  std::string one_d = good;
  one_d.replace(one_d.find("(1, 2)"), 6, "(2,)  ");
  CHECK_THROWS_WITH_AS(npy::decode(one_d), doctest::Contains("2-D"), IoError);
}

TEST_CASE("property: roundtrip is bit-exact for arbitrary finite floats") {
  TempDir dir;
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const auto rows = static_cast<Eigen::Index>(1 + rng.uniform_index(40));
    const auto cols = static_cast<Eigen::Index>(1 + rng.uniform_index(12));
    RowMatrixF data(rows, cols);
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      // Random bit patterns, re-drawn until finite: covers subnormals and -0.
      float f;
      do {
        const auto bits = static_cast<std::uint32_t>(rng.next());
        std::memcpy(&f, &bits, 4);
      } while (!std::isfinite(f));
      data.data()[i] = f;
    }
    std::vector<std::int64_t> labels(static_cast<std::size_t>(rows));
    for (auto& l : labels) l = static_cast<std::int64_t>(rng.uniform_index(7));
    const FeatureMatrix m(data, repsim::testing::numbered_ids(static_cast<std::size_t>(rows)), labels);
    write_features(m, dir / "p.npy");
    REQUIRE(read_features(dir / "p.npy") == m);
  }
}

TEST_CASE("FeatureMatrix invariants") {
  RowMatrixF data(2, 1);
  data << 1, 2;
  CHECK_THROWS_WITH_AS(FeatureMatrix(data, {"a", "a"}, {0, 0}), doctest::Contains("duplicate"),
                       ValidationError);
  CHECK_THROWS_AS(FeatureMatrix(data, {"a", "b"}, {0, -1}), ValidationError);
  CHECK_THROWS_AS(FeatureMatrix(data, {"a", "b,c"}, {0, 0}), ValidationError);
  CHECK_THROWS_AS(FeatureMatrix(data, {"a"}, {0, 0}), ValidationError);
  CHECK_THROWS_AS(FeatureMatrix(RowMatrixF(2, 0), {"a", "b"}, {0, 0}), ValidationError);
}

TEST_CASE("load_manifest aligns variants to lexicographic sample order") {
  TempDir dir;
  Rng rng(7);
  const std::size_t n = 30;
  const auto ids = repsim::testing::numbered_ids(n);
  std::vector<std::int64_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<std::int64_t>(i % 3);

  VariantManifest manifest;
  manifest.model_name = "m";
  manifest.dataset_name = "d";
  std::vector<FeatureMatrix> originals;
  for (const Variant v : kAllVariants) {
    const FeatureMatrix m = repsim::testing::make_features(repsim::testing::gaussian(rng, n, 4),
                                                           labels, v, ids);
    // Store each variant in a different shuffled row order.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const std::string stem = std::string(variant_name(v));
    write_features(m.select_rows(order), dir / (stem + ".npy"));
    manifest.entries[v] = {dir / (stem + ".npy"), dir / (stem + ".labels.csv")};
    originals.push_back(m);
  }
  write_manifest(manifest, dir / "manifest.json");

  const LoadedManifest loaded = load_manifest(dir / "manifest.json");
  REQUIRE(loaded.matrices.size() == 5);
  for (std::size_t v = 0; v < 5; ++v) {
    CHECK(loaded.matrices[v].variant() == kAllVariants[v]);
    CHECK(loaded.matrices[v].sample_ids() == loaded.matrices[0].sample_ids());
    // Independent check: find each id's row in the unshuffled source.
    for (std::size_t i = 0; i < n; ++i) {
      const auto& id = loaded.matrices[v].sample_ids()[i];
      const auto src = static_cast<Eigen::Index>(
          std::find(ids.begin(), ids.end(), id) - ids.begin());
      CHECK(loaded.matrices[v].data().row(static_cast<Eigen::Index>(i)) ==
            originals[v].data().row(src));
    }
  }
  CHECK(std::is_sorted(loaded.matrices[0].sample_ids().begin(), loaded.matrices[0].sample_ids().end()));

  const LoadedManifest again = load_manifest(dir / "manifest.json");
  CHECK(again.digest == loaded.digest);
  for (std::size_t v = 0; v < 5; ++v) CHECK(again.matrices[v] == loaded.matrices[v]);
}

TEST_CASE("load_manifest rejects disjoint ids, dim mismatch and missing files") {
  TempDir dir;
  Rng rng(3);
  const auto a = repsim::testing::make_features(repsim::testing::gaussian(rng, 4, 2),
                                                {0, 0, 1, 1}, Variant::Original,
                                                {"a1", "a2", "a3", "a4"});
  const auto b = repsim::testing::make_features(repsim::testing::gaussian(rng, 4, 2),
                                                {0, 0, 1, 1}, Variant::Center,
                                                {"b1", "b2", "b3", "b4"});
  const auto c = repsim::testing::make_features(repsim::testing::gaussian(rng, 4, 3),
                                                {0, 0, 1, 1}, Variant::Border,
                                                {"a1", "a2", "a3", "a4"});
  write_features(a, dir / "a.npy");
  write_features(b, dir / "b.npy");
  write_features(c, dir / "c.npy");

  write_manifest_file(dir / "disjoint.json",
                      R"({"model":"m","dataset":"d","variants":{"original":{"features":"a.npy"},"center":{"features":"b.npy"}}})");
  CHECK_THROWS_WITH_AS(load_manifest(dir / "disjoint.json"),
                       "sample_id 'a1' of original is missing from center", ValidationError);

  write_manifest_file(dir / "dims.json",
                      R"({"model":"m","dataset":"d","variants":{"original":{"features":"a.npy"},"border":{"features":"c.npy","labels":"c.labels.csv"}}})");
  CHECK_THROWS_WITH_AS(load_manifest(dir / "dims.json"), doctest::Contains("dim mismatch"),
                       ValidationError);

  write_manifest_file(dir / "missing.json",
                      R"({"model":"m","dataset":"d","variants":{"original":{"features":"nope.npy"}}})");
  CHECK_THROWS_WITH_AS(load_manifest(dir / "missing.json"), doctest::Contains("nope.npy"), IoError);
  CHECK_THROWS_AS(load_manifest(dir / "absent.json"), IoError);

  write_manifest_file(dir / "unknown.json",
                      R"({"model":"m","dataset":"d","variants":{"sideways":{"features":"a.npy"}}})");
  CHECK_THROWS_WITH_AS(load_manifest(dir / "unknown.json"), doctest::Contains("sideways"),
                       ValidationError);
}

TEST_CASE("labels must agree across variants") {
  TempDir dir;
  Rng rng(5);
  const auto x = repsim::testing::gaussian(rng, 3, 2);
  write_features(repsim::testing::make_features(x, {0, 1, 2}, Variant::Original, {"a", "b", "c"}),
                 dir / "o.npy");
  write_features(repsim::testing::make_features(x, {0, 2, 2}, Variant::Foreground, {"a", "b", "c"}),
                 dir / "f.npy");
  write_manifest_file(dir / "m.json",
                      R"({"model":"m","dataset":"d","variants":{"original":{"features":"o.npy"},"foreground":{"features":"f.npy"}}})");
  CHECK_THROWS_WITH_AS(load_manifest(dir / "m.json"), doctest::Contains("label mismatch for sample_id 'b'"),
                       ValidationError);
}
