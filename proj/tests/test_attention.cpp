#include <doctest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "stakit/attention.hpp"
#include "stakit/error.hpp"

using namespace stakit;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double sigma = 1.0) {
  std::normal_distribution<double> n(0.0, sigma);
  Matrix m(r, c);
  for (double& x : m.data()) x = n(rng);
  return m;
}

Vector random_vector(std::size_t n, std::mt19937_64& rng, double sigma = 1.0) {
  return random_matrix(1, n, rng, sigma).values();
}

AttentionWeights random_weights(std::size_t d, std::size_t heads, std::size_t dh, std::mt19937_64& rng) {
  AttentionWeights w;
  for (std::size_t h = 0; h < heads; ++h) {
    w.w_q.push_back(random_matrix(d, dh, rng, 0.7));
    w.w_k.push_back(random_matrix(d, dh, rng, 0.7));
    w.w_v.push_back(random_matrix(d, dh, rng, 0.7));
  }
  w.w_o = random_matrix(heads * dh, d, rng, 0.7);
  return w;
}

MlpWeights random_mlp(std::size_t d, std::size_t hidden, std::mt19937_64& rng) {
  return {random_matrix(d, hidden, rng, 0.5), random_vector(hidden, rng, 0.1),
          random_matrix(hidden, d, rng, 0.5), random_vector(d, rng, 0.1)};
}

void check_close(const Matrix& got, const oracle::Rows& want, double tol) {
  REQUIRE(got.rows() == want.size());
  for (std::size_t i = 0; i < got.rows(); ++i) {
    REQUIRE(got.cols() == want[i].size());
    for (std::size_t j = 0; j < got.cols(); ++j) CHECK(std::abs(got(i, j) - want[i][j]) <= tol);
  }
}

void check_close(const Matrix& got, const Matrix& want, double tol) {
  check_close(got, oracle::rows_of(want), tol);
}

TokenBundle plain(Matrix tokens) { return TokenBundle{std::move(tokens), std::nullopt, std::nullopt}; }

}  // namespace

TEST_CASE("mha with one key and identity projections adds the value") {
  const Matrix q = Matrix::from_rows({{1.0, -2.0, 0.5}, {0.0, 3.0, 1.0}});
  const Matrix kv = Matrix::from_rows({{0.25, 0.5, -1.0}});
  const TokenBundle out = mha(plain(q), plain(kv), AttentionWeights::identity(3));
  check_close(out.tokens, Matrix::from_rows({{1.25, -1.5, -0.5}, {0.25, 3.5, 0.0}}), 1e-15);
}

TEST_CASE("mha residual identity when W_V is zero") {
  std::mt19937_64 rng(1);
  AttentionWeights w = random_weights(4, 2, 3, rng);
  for (Matrix& v : w.w_v) v = Matrix(4, 3);
  const Matrix q = random_matrix(3, 4, rng);
  const TokenBundle out = mha(plain(q), plain(random_matrix(5, 4, rng)), w);
  check_close(out.tokens, q, 1e-12);
}

TEST_CASE("mha matches the straight-line oracle") {
  std::mt19937_64 rng(2024);
  const AttentionWeights w = random_weights(2, 1, 2, rng);
  const Matrix q = random_matrix(2, 2, rng);
  const Matrix kv = random_matrix(3, 2, rng);
  const auto want = oracle::plus(oracle::rows_of(q), oracle::attention(oracle::rows_of(q), oracle::rows_of(kv), w));
  check_close(mha(plain(q), plain(kv), w).tokens, want, 1e-13);

  for (int trial = 0; trial < 10; ++trial) {
    const AttentionWeights w2 = random_weights(6, 3, 2, rng);
    const Matrix q2 = random_matrix(4, 6, rng), kv2 = random_matrix(5, 6, rng);
    const auto want2 =
        oracle::plus(oracle::rows_of(q2), oracle::attention(oracle::rows_of(q2), oracle::rows_of(kv2), w2));
    check_close(mha(plain(q2), plain(kv2), w2).tokens, want2, 1e-12);
  }
}

TEST_CASE("mha includes class tokens and positional embeddings in the sequence") {
  std::mt19937_64 rng(4);
  const AttentionWeights w = random_weights(3, 1, 3, rng);
  TokenBundle q{random_matrix(2, 3, rng), random_vector(3, rng), random_matrix(3, 3, rng)};
  TokenBundle kv{random_matrix(4, 3, rng), std::nullopt, std::nullopt};
  const TokenBundle out = mha(q, kv, w);
  REQUIRE(out.class_token.has_value());
  CHECK(out.tokens.rows() == 2);
  const Matrix seq = sequence_of(q);
  const auto want =
      oracle::plus(oracle::rows_of(seq), oracle::attention(oracle::rows_of(seq), oracle::rows_of(kv.tokens), w));
  check_close(vstack(out.tokens, Matrix(1, 3, *out.class_token)), want, 1e-12);

  q.positional = Matrix(2, 3);
  CHECK_THROWS_AS(mha(q, kv, w), Error);
}

TEST_CASE("mha is invariant to key/value order") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const AttentionWeights w = random_weights(4, 2, 2, rng);
    const Matrix q = random_matrix(3, 4, rng);
    const Matrix kv = random_matrix(5, 4, rng);
    std::vector<std::size_t> perm{0, 1, 2, 3, 4};
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix shuffled(5, 4);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 4; ++j) shuffled(i, j) = kv(perm[i], j);
    check_close(mha(plain(q), plain(shuffled), w).tokens, mha(plain(q), plain(kv), w).tokens, 1e-12);
  }
}

TEST_CASE("attention rows are stochastic") {
  std::mt19937_64 rng(12);
  const AttentionWeights w = random_weights(5, 3, 2, rng);
  for (const Matrix& a : attention_probabilities(random_matrix(4, 5, rng, 3.0), random_matrix(6, 5, rng, 3.0), w)) {
    for (std::size_t i = 0; i < a.rows(); ++i) {
      double total = 0.0;
      for (double v : a.row(i)) total += v;
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("mha rejects mismatched widths") {
  std::mt19937_64 rng(3);
  CHECK_THROWS_AS(mha(plain(random_matrix(2, 3, rng)), plain(random_matrix(2, 4, rng)), AttentionWeights::identity(3)),
                  Error);
}

TEST_CASE("frame-guided pooling examples") {
  std::mt19937_64 rng(5);
  const Matrix last = random_matrix(3, 4, rng);

  AttentionWeights w = AttentionWeights::identity(4);
  w.w_o = Matrix(4, 4);
  check_close(frame_guided_pooling(plain(last), plain(last), w).tokens, last, 0.0);

  AttentionWeights wv = random_weights(4, 2, 2, rng);
  for (Matrix& v : wv.w_v) v = Matrix(4, 2);
  const Matrix video = vstack(random_matrix(3, 4, rng), last);
  check_close(frame_guided_pooling(plain(last), plain(video), wv).tokens, last, 1e-12);
}

TEST_CASE("frame-guided pooling matches the oracle on a 2-token, 2-frame clip") {
  const Matrix video = Matrix::from_rows({{0.5, -1.0}, {1.5, 0.25}, {-0.75, 2.0}, {1.0, 1.0}});
  TokenBundle v{video, Vector{0.3, -0.3}, std::nullopt};
  const TokenBundle last = last_frame_of(v, 2);
  check_close(last.tokens, Matrix::from_rows({{-0.75, 2.0}, {1.0, 1.0}}), 0.0);

  AttentionWeights w;
  w.w_q = {Matrix::from_rows({{1.0, 0.5}, {-0.5, 1.0}})};
  w.w_k = {Matrix::from_rows({{0.8, 0.0}, {0.2, 1.2}})};
  w.w_v = {Matrix::from_rows({{1.0, -1.0}, {0.5, 0.5}})};
  w.w_o = Matrix::from_rows({{0.9, 0.1}, {-0.2, 1.1}});
  const TokenBundle out = frame_guided_pooling(last, v, w);
  const auto want = oracle::plus(oracle::rows_of(last.tokens),
                                 oracle::attention(oracle::rows_of(last.tokens), oracle::rows_of(video), w));
  check_close(out.tokens, want, 1e-14);
  REQUIRE(out.class_token.has_value());
  CHECK(*out.class_token == Vector{0.3, -0.3});
}

TEST_CASE("frame-guided pooling shape rules") {
  std::mt19937_64 rng(6);
  const AttentionWeights w = random_weights(3, 1, 3, rng);
  for (std::size_t t = 1; t <= 4; ++t) {
    const Matrix video = random_matrix(2 * t, 3, rng);
    CHECK(frame_guided_pooling(last_frame_of(plain(video), 2), plain(video), w).tokens.rows() == 2);
  }
  CHECK_THROWS_AS(frame_guided_pooling(plain(random_matrix(5, 3, rng)), plain(random_matrix(4, 3, rng)), w), Error);
  CHECK_THROWS_AS(frame_guided_pooling(plain(random_matrix(3, 3, rng)), plain(random_matrix(4, 3, rng)), w), Error);
}

TEST_CASE("frame-guided pooling with pre-norm matches the oracle") {
  std::mt19937_64 rng(15);
  const AttentionWeights w = random_weights(4, 2, 2, rng);
  const Matrix video = random_matrix(6, 4, rng);
  const TokenBundle last = last_frame_of(plain(video), 3);
  PoolingConfig cfg;
  cfg.pre_norm = LayerNormParams{{1.1, 0.9, 1.0, 1.2}, {0.1, 0.0, -0.1, 0.2}, 1e-5};
  const auto q = oracle::layer_norm(oracle::rows_of(last.tokens), *cfg.pre_norm);
  const auto kv = oracle::layer_norm(oracle::rows_of(video), *cfg.pre_norm);
  const auto want = oracle::plus(oracle::rows_of(last.tokens), oracle::attention(q, kv, w));
  check_close(frame_guided_pooling(last, plain(video), w, cfg).tokens, want, 1e-12);
}

TEST_CASE("dual attention residual identity and shapes") {
  std::mt19937_64 rng(7);
  const std::size_t d = 4;
  DualAttentionWeights w{random_weights(d, 2, 2, rng), random_weights(d, 2, 2, rng),
                         MlpWeights::zeros(d, 4 * d), MlpWeights::zeros(d, 4 * d),
                         LayerNormParams::unit(d), LayerNormParams::unit(d)};
  for (Matrix& v : w.image_to_video.w_v) v = Matrix(d, 2);
  for (Matrix& v : w.video_to_image.w_v) v = Matrix(d, 2);
  const TokenBundle image{random_matrix(3, d, rng), random_vector(d, rng), random_matrix(4, d, rng)};
  const TokenBundle video{random_matrix(3, d, rng), random_vector(d, rng), random_matrix(4, d, rng)};
  const auto [oi, ov] = dual_attention(image, video, w);
  CHECK(oi.tokens.rows() == 3);
  CHECK(ov.tokens.rows() == 3);
  REQUIRE(oi.class_token.has_value());
  REQUIRE(ov.class_token.has_value());
  check_close(vstack(oi.tokens, Matrix(1, d, *oi.class_token)), sequence_of(image), 1e-12);
  check_close(vstack(ov.tokens, Matrix(1, d, *ov.class_token)), sequence_of(video), 1e-12);
}

TEST_CASE("dual attention matches the oracle on 2 tokens plus class token") {
  std::mt19937_64 rng(99);
  const std::size_t d = 2;
  const DualAttentionWeights w{random_weights(d, 1, 2, rng), random_weights(d, 1, 2, rng),
                               random_mlp(d, 4 * d, rng),    random_mlp(d, 4 * d, rng),
                               LayerNormParams{{1.0, 0.8}, {0.1, -0.1}, 1e-5},
                               LayerNormParams{{0.9, 1.1}, {0.0, 0.2}, 1e-5}};
  const TokenBundle image{Matrix::from_rows({{0.3, -0.4}, {1.2, 0.7}}), Vector{0.5, 0.5}, std::nullopt};
  const TokenBundle video{Matrix::from_rows({{-1.0, 0.2}, {0.6, -0.9}}), Vector{0.1, -0.2},
                          Matrix::from_rows({{0.01, 0.02}, {0.03, 0.04}, {0.05, 0.06}})};
  const auto [oi, ov] = dual_attention(image, video, w);
  const auto [wi, wv] = oracle::dual(oracle::rows_of(sequence_of(image)), oracle::rows_of(sequence_of(video)), w);
  check_close(vstack(oi.tokens, Matrix(1, d, *oi.class_token)), wi, 1e-13);
  check_close(vstack(ov.tokens, Matrix(1, d, *ov.class_token)), wv, 1e-13);
}

TEST_CASE("dual attention errors") {
  std::mt19937_64 rng(17);
  const std::size_t d = 3;
  const DualAttentionWeights w{random_weights(d, 1, 3, rng), random_weights(d, 1, 3, rng),
                               MlpWeights::zeros(d, 4 * d), MlpWeights::zeros(d, 4 * d),
                               LayerNormParams::unit(d), LayerNormParams::unit(d)};
  const TokenBundle with_class{random_matrix(2, d, rng), random_vector(d, rng), std::nullopt};
  const TokenBundle without{random_matrix(2, d, rng), std::nullopt, std::nullopt};
  const TokenBundle longer{random_matrix(3, d, rng), random_vector(d, rng), std::nullopt};
  CHECK_THROWS_AS(dual_attention(with_class, without, w), Error);
  CHECK_THROWS_AS(dual_attention(without, with_class, w), Error);
  CHECK_THROWS_AS(dual_attention(with_class, longer, w), Error);
}

TEST_CASE("class token fusion") {
  const Vector x{1.5, -2.0, 0.25};
  CHECK(fuse_class_tokens(Vector(3, 0.0), x) == x);
  CHECK(fuse_class_tokens(x, Vector{-1.5, 2.0, -0.25}) == Vector(3, 0.0));
  CHECK(fuse_class_tokens({1, 2}, {3, 5}) == Vector{4, 7});
  CHECK_THROWS_AS(fuse_class_tokens({1}, {1, 2}), Error);
}

TEST_CASE("pyramid fusion") {
  std::mt19937_64 rng(21);
  auto random_grid = [&](std::size_t h, std::size_t w, std::size_t c) {
    return Grid(h, w, c, random_matrix(1, h * w * c, rng).values());
  };
  FeaturePyramid p2d{{random_grid(4, 4, 2), random_grid(2, 2, 2)}, {}};
  FeaturePyramid p3d{{random_grid(4, 4, 2), random_grid(2, 2, 2)}, {}};
  const std::vector<Vector> id{identity_kernel3x3(2), identity_kernel3x3(2)};
  const FeaturePyramid pt = fuse_pyramids(p2d, p3d, id);
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t k = 0; k < pt.levels[l].data().size(); ++k)
      CHECK(pt.levels[l].data()[k] == p2d.levels[l].data()[k] + p3d.levels[l].data()[k]);

  FeaturePyramid zero{{Grid(4, 4, 2), Grid(2, 2, 2)}, {}};
  const FeaturePyramid same = fuse_pyramids(p2d, zero, id);
  CHECK(same.levels[0] == p2d.levels[0]);
  CHECK(same.levels[1] == p2d.levels[1]);

  // One level, 3x3 single channel, Laplacian-style kernel; hand-convolved centre and corner.
  const FeaturePyramid a{{Grid(3, 3, 1, {1, 2, 3, 4, 5, 6, 7, 8, 9})}, {}};
  const FeaturePyramid b{{Grid(3, 3, 1, {0, 0, 0, 0, 1, 0, 0, 0, 0})}, {}};
  const Vector lap{0, 1, 0, 1, -4, 1, 0, 1, 0};
  const FeaturePyramid c = fuse_pyramids(a, b, {lap});
  CHECK(c.levels[0].at(1, 1, 0) == 2 + 4 + 6 + 8 - 4 * 6);
  CHECK(c.levels[0].at(0, 0, 0) == 2 + 4 - 4 * 1);
  CHECK(c.levels[0].at(0, 1, 0) == 1 + 3 + 6 - 4 * 2);

  FeaturePyramid mismatched{{random_grid(4, 4, 2), random_grid(3, 3, 2)}, {}};
  CHECK_THROWS_AS(fuse_pyramids(p2d, mismatched, id), Error);
}

TEST_CASE("pyramid building") {
  std::mt19937_64 rng(22);
  const Matrix tokens = random_matrix(6, 3, rng);
  const FeaturePyramid one = build_pyramid(plain(tokens), 2, 3, {{2, 3}}, {identity_kernel3x3(3)});
  CHECK(one.levels.size() == 1);
  CHECK(one.levels[0] == tokens_to_grid(tokens, 2, 3));

  const FeaturePyramid flat =
      build_pyramid(plain(Matrix(4, 2, 0.75)), 2, 2, {{4, 4}, {2, 2}, {1, 1}},
                    {identity_kernel3x3(2), identity_kernel3x3(2), identity_kernel3x3(2)});
  for (const Grid& g : flat.levels)
    for (double v : g.data()) CHECK(v == doctest::Approx(0.75).epsilon(1e-15));

  const Matrix single = Matrix::from_rows({{1.0}, {2.0}, {3.0}, {4.0}});
  const FeaturePyramid up = build_pyramid(plain(single), 2, 2, {{4, 4}}, {identity_kernel3x3(1)});
  const auto want = oracle::bilinear({1.0, 2.0, 3.0, 4.0}, 2, 2, 4, 4);
  for (std::size_t k = 0; k < want.size(); ++k) CHECK(up.levels[0].data()[k] == doctest::Approx(want[k]).epsilon(1e-15));
  CHECK(up.levels[0].at(0, 1, 0) == doctest::Approx(1.25));

  CHECK_THROWS_AS(build_pyramid(plain(tokens), 4, 2, {{4, 2}}, {identity_kernel3x3(3)}), Error);
  CHECK_THROWS_AS(build_pyramid(plain(tokens), 2, 3, {{1, 1}, {2, 3}},
                                {identity_kernel3x3(3), identity_kernel3x3(3)}),
                  Error);
}
