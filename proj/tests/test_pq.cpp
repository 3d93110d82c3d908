#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "scert/pq.hpp"

using namespace scert;

namespace {

EmbeddingSet two_cluster_1d() {
  return EmbeddingSet(1, {0.0, 0.1, -0.1, 10.0, 10.1, 9.9},
                      {"a", "b", "c", "d", "e", "f"});
}

}  // namespace

TEST_CASE("default subspace count picks a divisor near D/8") {
  CHECK(default_num_subspaces(64) == 8);
  CHECK(default_num_subspaces(128) == 16);
  CHECK(default_num_subspaces(8) == 1);
  CHECK(default_num_subspaces(12) == 2);  // tie between 1 and 2 goes high
  CHECK(default_num_subspaces(17) == 1);  // prime: only 1 and 17 divide
}

TEST_CASE("training rejects bad configs") {
  const EmbeddingSet train = two_cluster_1d();
  PQConfig cfg;
  cfg.num_subspaces = 1;
  cfg.centroids_per_subspace = 1;
  CHECK_THROWS_AS(train_codebook(train, cfg), ConfigError);
  cfg.centroids_per_subspace = 2;
  cfg.kmeans_iters = 0;
  CHECK_THROWS_AS(train_codebook(train, cfg), ConfigError);
  cfg.kmeans_iters = 25;
  cfg.num_subspaces = 3;  // does not divide dim 1
  CHECK_THROWS_AS(train_codebook(train, cfg), ConfigError);
  cfg.num_subspaces = 1;
  cfg.centroids_per_subspace = 7;  // more centroids than rows
  CHECK_THROWS_AS(train_codebook(train, cfg), InsufficientDataError);
  CHECK_THROWS_AS(train_codebook(EmbeddingSet(), cfg), EmptyInputError);
}

TEST_CASE("two means on separated clusters finds the cluster means") {
  PQConfig cfg;
  cfg.num_subspaces = 1;
  cfg.centroids_per_subspace = 2;
  cfg.seed = 3;
  const PQCodebook cb = train_codebook(two_cluster_1d(), cfg);
  double lo = cb.centroid(0, 0)[0], hi = cb.centroid(0, 1)[0];
  if (lo > hi) std::swap(lo, hi);
  CHECK(lo == Catch::Approx(0.0).margin(1e-12));
  CHECK(hi == Catch::Approx(10.0).margin(1e-12));
}

TEST_CASE("degenerate training data cannot fill k distinct centroids") {
  const EmbeddingSet train(1, {1.0, 1.0, 5.0, 5.0, 1.0, 5.0},
                           {"a", "b", "c", "d", "e", "f"});
  PQConfig cfg;
  cfg.num_subspaces = 1;
  cfg.centroids_per_subspace = 4;  // only two distinct values exist
  CHECK_THROWS_AS(train_codebook(train, cfg), InsufficientDataError);
}

TEST_CASE("quantize ties resolve to the lowest centroid index") {
  PQConfig cfg;
  cfg.num_subspaces = 1;
  cfg.centroids_per_subspace = 2;
  const PQCodebook cb(cfg, 1, {1.0, -1.0});
  const Vec query{0.0};  // equidistant
  CHECK(quantize(query, cb) == PQCode{0});
}

TEST_CASE("codebook accessors and validation") {
  PQConfig cfg;
  cfg.num_subspaces = 2;
  cfg.centroids_per_subspace = 2;
  const PQCodebook cb(cfg, 2, {0, 0, 1, 1, 2, 2, 3, 3});
  CHECK(cb.dim() == 4);
  CHECK(cb.sub_dim() == 2);
  CHECK(cb.centroid(1, 1)[0] == 3.0);
  CHECK_THROWS_AS(PQCodebook(cfg, 2, {0.0}), ConfigError);
  CHECK_THROWS_AS(PQCodebook(cfg, 2,
                             {0, 0, 1, 1, 2, 2, 3, std::nan("")}),
                  RangeError);
  CHECK_THROWS_AS(quantize(Vec{0.0}, cb), DimensionError);
  CHECK_THROWS_AS(quantization_residual(Vec{0.0}, cb), DimensionError);
}

TEST_CASE("reconstruct validates codes") {
  PQConfig cfg;
  cfg.num_subspaces = 2;
  cfg.centroids_per_subspace = 2;
  const PQCodebook cb(cfg, 1, {0.0, 1.0, 2.0, 3.0});
  CHECK(reconstruct({1, 0}, cb) == Vec{1.0, 2.0});
  CHECK_THROWS_AS(reconstruct({1}, cb), CodeError);
  CHECK_THROWS_AS(reconstruct({1, 2}, cb), CodeError);
}

TEST_CASE("residual equals reconstruction error of the chosen code") {
  Rng rng(splitmix64(11));
  const EmbeddingSet train = oracles::random_embeddings(rng, 60, 8, "t");
  PQConfig cfg;
  cfg.num_subspaces = 2;
  cfg.centroids_per_subspace = 8;
  cfg.seed = 11;
  const PQCodebook cb = train_codebook(train, cfg);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const Vec recon = reconstruct(quantize(train.row(i), cb), cb);
    const double direct = squared_euclidean(train.row(i), recon);
    CHECK(quantization_residual(train.row(i), cb) ==
          Catch::Approx(direct).margin(1e-12));
  }
}

TEST_CASE("quantize agrees with exhaustive code enumeration") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(splitmix64(900 + seed));
    const std::uint32_t m = 1 + static_cast<std::uint32_t>(uniform_index(rng, 3));
    const std::uint32_t sd = 1 + static_cast<std::uint32_t>(uniform_index(rng, 3));
    const std::uint32_t k = 2 + static_cast<std::uint32_t>(uniform_index(rng, 5));
    const std::size_t n = k + 20;
    const EmbeddingSet train =
        oracles::random_embeddings(rng, n, m * sd, "t");
    PQConfig cfg;
    cfg.num_subspaces = m;
    cfg.centroids_per_subspace = k;
    cfg.seed = seed;
    const PQCodebook cb = train_codebook(train, cfg);
    for (std::size_t i = 0; i < 5; ++i) {
      const VecView v = train.row(uniform_index(rng, n));
      const oracles::BestCode best = oracles::pq_exhaustive(v, cb);
      CHECK(quantize(v, cb) == best.code);
      CHECK(quantization_residual(v, cb) ==
            Catch::Approx(best.err).margin(1e-9));
    }
  }
}

TEST_CASE("reconstruction mse is zero when points sit on centroids") {
  PQConfig cfg;
  cfg.num_subspaces = 1;
  cfg.centroids_per_subspace = 2;
  const PQCodebook cb(cfg, 1, {0.0, 10.0});
  const EmbeddingSet pts(1, {0.0, 10.0, 0.0}, {"a", "b", "c"});
  CHECK(reconstruction_mse(pts, cb) == 0.0);
  CHECK_THROWS_AS(reconstruction_mse(EmbeddingSet(), cb), EmptyInputError);
}

TEST_CASE("codebook files round-trip") {
  Rng rng(splitmix64(5));
  const EmbeddingSet train = oracles::random_embeddings(rng, 40, 6, "t");
  PQConfig cfg;
  cfg.num_subspaces = 3;
  cfg.centroids_per_subspace = 4;
  cfg.seed = 5;
  const PQCodebook cb = train_codebook(train, cfg);

  oracles::TempDir dir;
  save_codebook(cb, dir.file("cb.scpq"));
  const PQCodebook back = load_codebook(dir.file("cb.scpq"));
  REQUIRE(back.num_subspaces() == cb.num_subspaces());
  REQUIRE(back.centroids_per_subspace() == cb.centroids_per_subspace());
  REQUIRE(back.sub_dim() == cb.sub_dim());
  for (std::size_t i = 0; i < cb.raw().size(); ++i) {
    CHECK(back.raw()[i] ==
          static_cast<double>(static_cast<float>(cb.raw()[i])));
  }

  oracles::write_file(dir.file("bad.scpq"), "NOPE and then some");
  CHECK_THROWS_AS(load_codebook(dir.file("bad.scpq")), IOError);
  const std::string whole = oracles::read_file(dir.file("cb.scpq"));
  oracles::write_file(dir.file("trunc.scpq"),
                      whole.substr(0, whole.size() / 2));
  CHECK_THROWS_AS(load_codebook(dir.file("trunc.scpq")), IOError);
  CHECK_THROWS_AS(load_codebook(dir.file("missing.scpq")), IOError);
}

TEST_CASE("training is deterministic per seed") {
  Rng rng(splitmix64(21));
  const EmbeddingSet train = oracles::random_embeddings(rng, 50, 4, "t");
  PQConfig cfg;
  cfg.num_subspaces = 2;
  cfg.centroids_per_subspace = 4;
  cfg.seed = 77;
  const PQCodebook a = train_codebook(train, cfg);
  const PQCodebook b = train_codebook(train, cfg);
  CHECK(a.raw() == b.raw());
  cfg.seed = 78;
  const PQCodebook c = train_codebook(train, cfg);
  CHECK(a.raw() != c.raw());
}
