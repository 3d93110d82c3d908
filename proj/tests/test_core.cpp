#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "scert/core.hpp"
#include "scert/error.hpp"
#include "scert/io.hpp"
#include "scert/rng.hpp"

using namespace scert;

TEST_CASE("squared euclidean distance") {
  const Vec a{1.0, 2.0, 3.0};
  const Vec b{4.0, 6.0, 3.0};
  CHECK(squared_euclidean(a, b) == 25.0);
  CHECK(squared_euclidean(a, a) == 0.0);
  const Vec c{1.0, 2.0};
  CHECK_THROWS_AS(squared_euclidean(a, c), DimensionError);
}

TEST_CASE("all_finite flags bad coordinates") {
  CHECK(all_finite(Vec{0.0, -1.5}));
  CHECK_FALSE(all_finite(Vec{0.0, std::nan("")}));
  CHECK_FALSE(all_finite(Vec{1.0 / 0.0}));
}

TEST_CASE("embedding set validation") {
  CHECK_THROWS_AS(EmbeddingSet(3, {1.0, 2.0}, {"a"}), DimensionError);
  CHECK_THROWS_AS(EmbeddingSet(0, {}, {"a"}), DimensionError);
  CHECK_THROWS_AS(EmbeddingSet(1, {std::nan("")}, {"a"}), RangeError);
  CHECK_THROWS_AS(EmbeddingSet(1, {1.0, 2.0}, {"a", "a"}), ConfigError);

  const EmbeddingSet s(2, {1.0, 2.0, 3.0, 4.0}, {"x", "y"});
  CHECK(s.size() == 2);
  CHECK(s.dim() == 2);
  CHECK(s.id(1) == "y");
  CHECK(s.row(1)[0] == 3.0);
  CHECK_FALSE(s.empty());
  CHECK(EmbeddingSet().empty());
}

TEST_CASE("rng primitives are deterministic and in range") {
  Rng a(splitmix64(42)), b(splitmix64(42));
  for (int i = 0; i < 1000; ++i) {
    const double u = uniform01(a);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(u == uniform01(b));
  }
  Rng c(1);
  for (int i = 0; i < 1000; ++i) {
    CHECK(uniform_index(c, 7) < 7);
    const double r = uniform_range(c, 2.0, 5.0);
    CHECK(r >= 2.0);
    CHECK(r < 5.0);
  }
  CHECK(splitmix64(0) != splitmix64(1));
  CHECK(substream_seed(9, 0) != substream_seed(9, 1));
  CHECK(substream_seed(9, 0) != substream_seed(10, 0));
}

TEST_CASE("normal sampler moments") {
  Rng rng(splitmix64(7));
  NormalSampler normal;
  const int n = 200000;
  double mean = 0.0, var = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = normal(rng);
    mean += x;
    var += x * x;
  }
  mean /= n;
  var = var / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);

  Rng r1(splitmix64(3)), r2(splitmix64(3));
  NormalSampler n1, n2;
  for (int i = 0; i < 100; ++i) CHECK(n1(r1) == n2(r2));
}

TEST_CASE("score formatting") {
  CHECK(format_score(-2.5) == "-2.5");
  CHECK(format_score(0.0) == "0");
  CHECK(format_score(-1.0 / 3.0) == "-0.3333333333");
  CHECK(format_score(1e-300) == "1e-300");
}

TEST_CASE("file digest is fnv-1a 64 over bytes") {
  oracles::TempDir dir;
  const std::string content = "abc\ndef";
  oracles::write_file(dir.file("x.bin"), content);

  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : content) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  char expect[20];
  std::snprintf(expect, sizeof(expect), "%016llx",
                static_cast<unsigned long long>(h));
  CHECK(file_digest(dir.file("x.bin")) == expect);

  oracles::write_file(dir.file("y.bin"), content + "!");
  CHECK(file_digest(dir.file("y.bin")) != expect);
  CHECK_THROWS_AS(file_digest(dir.file("missing.bin")), IOError);
}
