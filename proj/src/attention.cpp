#include "stakit/attention.hpp"

#include <cmath>
#include <numbers>

#include "stakit/error.hpp"

namespace stakit {

namespace {

Matrix row_matrix(const Vector& v) { return Matrix(1, v.size(), v); }

void require_cols(const Matrix& m, std::size_t cols, const char* what) {
  if (m.cols() != cols) {
    throw Error(ErrorCode::dimension_mismatch,
                std::string(what) + " has " + std::to_string(m.cols()) +
                    " channels, expected d_model = " + std::to_string(cols));
  }
}

Matrix zeros_like(const Matrix& m) { return Matrix(m.rows(), m.cols()); }

void add_vector(Vector& acc, const Vector& v) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
}

}  // namespace

void AttentionWeights::validate() const {
  if (w_q.empty()) throw Error(ErrorCode::invalid_argument, "attention needs at least one head");
  if (w_k.size() != w_q.size() || w_v.size() != w_q.size()) {
    throw Error(ErrorCode::dimension_mismatch, "per-head projection counts differ");
  }
  const std::size_t dm = w_o.cols();
  const std::size_t dh = d_head();
  for (std::size_t h = 0; h < heads(); ++h) {
    for (const Matrix* m : {&w_q[h], &w_k[h], &w_v[h]}) {
      if (m->rows() != dm || m->cols() != dh) {
        throw Error(ErrorCode::dimension_mismatch,
                    "head " + std::to_string(h) + " projection is " + m->shape_string() +
                        ", expected " + std::to_string(dm) + "x" + std::to_string(dh));
      }
    }
  }
  if (w_o.rows() != heads() * dh) {
    throw Error(ErrorCode::dimension_mismatch,
                "w_o is " + w_o.shape_string() + ", expected input dim heads*d_head = " +
                    std::to_string(heads() * dh));
  }
}

AttentionWeights AttentionWeights::identity(std::size_t d_model) {
  AttentionWeights w;
  w.w_q.push_back(Matrix::identity(d_model));
  w.w_k.push_back(Matrix::identity(d_model));
  w.w_v.push_back(Matrix::identity(d_model));
  w.w_o = Matrix::identity(d_model);
  return w;
}

AttentionWeights AttentionWeights::zeros(std::size_t d_model, std::size_t heads,
                                         std::size_t d_head) {
  AttentionWeights w;
  for (std::size_t h = 0; h < heads; ++h) {
    w.w_q.emplace_back(d_model, d_head);
    w.w_k.emplace_back(d_model, d_head);
    w.w_v.emplace_back(d_model, d_head);
  }
  w.w_o = Matrix(heads * d_head, d_model);
  return w;
}

LayerNormParams LayerNormParams::unit(std::size_t d_model, double eps) {
  return {Vector(d_model, 1.0), Vector(d_model, 0.0), eps};
}

MlpWeights MlpWeights::zeros(std::size_t d_model, std::size_t hidden) {
  return {Matrix(d_model, hidden), Vector(hidden, 0.0), Matrix(hidden, d_model),
          Vector(d_model, 0.0)};
}

Matrix sequence_of(const TokenBundle& bundle) {
  Matrix seq = bundle.class_token ? vstack(bundle.tokens, row_matrix(*bundle.class_token))
                                  : bundle.tokens;
  if (bundle.positional) {
    if (bundle.positional->rows() != seq.rows() || bundle.positional->cols() != seq.cols()) {
      throw Error(ErrorCode::dimension_mismatch,
                  "positional embedding is " + bundle.positional->shape_string() +
                      " but the token sequence is " + seq.shape_string());
    }
    add_in_place(seq, *bundle.positional);
  }
  return seq;
}

TokenBundle bundle_from_sequence(const Matrix& sequence, bool has_class_token) {
  TokenBundle out;
  if (!has_class_token) {
    out.tokens = sequence;
    return out;
  }
  if (sequence.rows() == 0) {
    throw Error(ErrorCode::dimension_mismatch, "empty sequence cannot carry a class token");
  }
  const std::size_t n = sequence.rows() - 1;
  out.tokens = slice_rows(sequence, 0, n);
  const auto last = sequence.row(n);
  out.class_token = Vector(last.begin(), last.end());
  return out;
}

namespace {
constexpr double kGeluCoeff = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);
}  // namespace

double gelu(double x) noexcept {
  const double u = kSqrt2OverPi * (x + kGeluCoeff * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_derivative(double x) noexcept {
  const double u = kSqrt2OverPi * (x + kGeluCoeff * x * x * x);
  const double t = std::tanh(u);
  const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluCoeff * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

namespace {

void check_mlp(const Matrix& x, const MlpWeights& w) {
  if (w.w1.rows() != x.cols() || w.b1.size() != w.w1.cols() || w.w2.rows() != w.w1.cols() ||
      w.w2.cols() != x.cols() || w.b2.size() != x.cols()) {
    throw Error(ErrorCode::dimension_mismatch,
                "mlp weights " + w.w1.shape_string() + " / " + w.w2.shape_string() +
                    " do not fit input " + x.shape_string());
  }
}

Matrix affine(const Matrix& x, const Matrix& w, const Vector& b) {
  Matrix out = matmul(x, w);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += b[j];
  return out;
}

Vector column_sums(const Matrix& m) {
  Vector out(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += m(i, j);
  return out;
}

}  // namespace

Matrix mlp_forward(const Matrix& x, const MlpWeights& w) {
  check_mlp(x, w);
  Matrix hidden = affine(x, w.w1, w.b1);
  for (double& v : hidden.data()) v = gelu(v);
  return affine(hidden, w.w2, w.b2);
}

MlpGrads mlp_backward(const Matrix& x, const MlpWeights& w, const Matrix& d_out) {
  check_mlp(x, w);
  const Matrix pre = affine(x, w.w1, w.b1);
  Matrix hidden = pre;
  for (double& v : hidden.data()) v = gelu(v);

  MlpGrads g;
  g.d_w2 = matmul_tn(hidden, d_out);
  g.d_b2 = column_sums(d_out);
  Matrix d_hidden = matmul_nt(d_out, w.w2);
  auto dh = d_hidden.data();
  auto p = pre.data();
  for (std::size_t i = 0; i < dh.size(); ++i) dh[i] *= gelu_derivative(p[i]);
  g.d_w1 = matmul_tn(x, d_hidden);
  g.d_b1 = column_sums(d_hidden);
  g.d_input = matmul_nt(d_hidden, w.w1);
  return g;
}

LayerNormGrads layer_norm_backward(const Matrix& x, const LayerNormParams& p,
                                   const Matrix& d_out) {
  if (p.gamma.size() != x.cols() || p.beta.size() != x.cols() || d_out.rows() != x.rows() ||
      d_out.cols() != x.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "layer_norm_backward: shape mismatch");
  }
  const std::size_t d = x.cols();
  const double n = static_cast<double>(d);
  LayerNormGrads g{Matrix(x.rows(), d), Vector(d, 0.0), Vector(d, 0.0)};
  Vector xhat(d);
  Vector dxhat(d);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = x.row(i);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= n;
    const double inv_std = 1.0 / std::sqrt(var + p.eps);
    double mean_dxhat = 0.0;
    double mean_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      xhat[j] = (row[j] - mean) * inv_std;
      dxhat[j] = d_out(i, j) * p.gamma[j];
      g.d_gamma[j] += d_out(i, j) * xhat[j];
      g.d_beta[j] += d_out(i, j);
      mean_dxhat += dxhat[j];
      mean_dxhat_xhat += dxhat[j] * xhat[j];
    }
    mean_dxhat /= n;
    mean_dxhat_xhat /= n;
    for (std::size_t j = 0; j < d; ++j)
      g.d_input(i, j) = inv_std * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
  }
  return g;
}

namespace {

struct HeadState {
  Matrix q;
  Matrix k;
  Matrix v;
  Matrix p;
};

HeadState head_forward(const Matrix& queries, const Matrix& keys_values,
                       const AttentionWeights& w, std::size_t h) {
  HeadState s;
  s.q = matmul(queries, w.w_q[h]);
  s.k = matmul(keys_values, w.w_k[h]);
  s.v = matmul(keys_values, w.w_v[h]);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(w.d_head()));
  s.p = softmax_rows(scale(matmul_nt(s.q, s.k), inv_sqrt));
  return s;
}

void check_attention_inputs(const Matrix& queries, const Matrix& keys_values,
                            const AttentionWeights& w) {
  w.validate();
  require_cols(queries, w.d_model(), "queries");
  require_cols(keys_values, w.d_model(), "keys/values");
  if (keys_values.rows() == 0) {
    throw Error(ErrorCode::invalid_argument, "attention needs at least one key");
  }
}

}  // namespace

std::vector<Matrix> attention_probabilities(const Matrix& queries, const Matrix& keys_values,
                                            const AttentionWeights& w) {
  check_attention_inputs(queries, keys_values, w);
  std::vector<Matrix> out;
  out.reserve(w.heads());
  for (std::size_t h = 0; h < w.heads(); ++h)
    out.push_back(head_forward(queries, keys_values, w, h).p);
  return out;
}

Matrix attend(const Matrix& queries, const Matrix& keys_values, const AttentionWeights& w) {
  check_attention_inputs(queries, keys_values, w);
  const std::size_t dh = w.d_head();
  Matrix concat(queries.rows(), w.heads() * dh);
  for (std::size_t h = 0; h < w.heads(); ++h) {
    const HeadState s = head_forward(queries, keys_values, w, h);
    write_cols(concat, h * dh, matmul(s.p, s.v));
  }
  return matmul(concat, w.w_o);
}

AttendGrads attend_backward(const Matrix& queries, const Matrix& keys_values,
                            const AttentionWeights& w, const Matrix& d_out) {
  check_attention_inputs(queries, keys_values, w);
  if (d_out.rows() != queries.rows() || d_out.cols() != w.d_model()) {
    throw Error(ErrorCode::dimension_mismatch, "attend_backward: upstream gradient is " +
                                                   d_out.shape_string());
  }
  const std::size_t dh = w.d_head();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<HeadState> states;
  states.reserve(w.heads());
  Matrix concat(queries.rows(), w.heads() * dh);
  for (std::size_t h = 0; h < w.heads(); ++h) {
    states.push_back(head_forward(queries, keys_values, w, h));
    write_cols(concat, h * dh, matmul(states.back().p, states.back().v));
  }

  AttendGrads g;
  g.d_queries = zeros_like(queries);
  g.d_keys_values = zeros_like(keys_values);
  g.weights.w_o = matmul_tn(concat, d_out);
  const Matrix d_concat = matmul_nt(d_out, w.w_o);

  for (std::size_t h = 0; h < w.heads(); ++h) {
    const HeadState& s = states[h];
    const Matrix d_head_out = slice_cols(d_concat, h * dh, dh);
    const Matrix d_p = matmul_nt(d_head_out, s.v);
    const Matrix d_v = matmul_tn(s.p, d_head_out);

    // Softmax Jacobian, row by row.
    Matrix d_scores(s.p.rows(), s.p.cols());
    for (std::size_t i = 0; i < s.p.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < s.p.cols(); ++j) dot += d_p(i, j) * s.p(i, j);
      for (std::size_t j = 0; j < s.p.cols(); ++j)
        d_scores(i, j) = s.p(i, j) * (d_p(i, j) - dot) * inv_sqrt;
    }
    const Matrix d_q = matmul(d_scores, s.k);
    const Matrix d_k = matmul_tn(d_scores, s.q);

    g.weights.w_q.push_back(matmul_tn(queries, d_q));
    g.weights.w_k.push_back(matmul_tn(keys_values, d_k));
    g.weights.w_v.push_back(matmul_tn(keys_values, d_v));
    add_in_place(g.d_queries, matmul_nt(d_q, w.w_q[h]));
    add_in_place(g.d_keys_values, matmul_nt(d_k, w.w_k[h]));
    add_in_place(g.d_keys_values, matmul_nt(d_v, w.w_v[h]));
  }
  return g;
}

TokenBundle mha(const TokenBundle& queries, const TokenBundle& keys_values,
                const AttentionWeights& w) {
  const Matrix q = sequence_of(queries);
  const Matrix kv = sequence_of(keys_values);
  return bundle_from_sequence(add(q, attend(q, kv, w)), queries.class_token.has_value());
}

AttendGrads mha_vjp(const Matrix& query_seq, const Matrix& kv_seq, const AttentionWeights& w,
                    const Matrix& d_out) {
  AttendGrads g = attend_backward(query_seq, kv_seq, w, d_out);
  add_in_place(g.d_queries, d_out);
  return g;
}

namespace {

void check_pooling_shapes(std::size_t frame_rows, std::size_t video_rows) {
  if (frame_rows > video_rows) {
    throw Error(ErrorCode::dimension_mismatch,
                "last frame has " + std::to_string(frame_rows) +
                    " tokens but the video only has " + std::to_string(video_rows));
  }
  if (frame_rows == 0 || video_rows % frame_rows != 0) {
    throw Error(ErrorCode::dimension_mismatch,
                "video token count " + std::to_string(video_rows) +
                    " is not a whole number of frames of " + std::to_string(frame_rows) +
                    " tokens");
  }
}

Matrix maybe_norm(const Matrix& x, const std::optional<LayerNormParams>& norm) {
  return norm ? layer_norm(x, norm->gamma, norm->beta, norm->eps) : x;
}

}  // namespace

TokenBundle frame_guided_pooling(const TokenBundle& last_frame, const TokenBundle& video,
                                 const AttentionWeights& w, const PoolingConfig& cfg) {
  check_pooling_shapes(last_frame.tokens.rows(), video.tokens.rows());
  const Matrix q = maybe_norm(last_frame.tokens, cfg.pre_norm);
  const Matrix kv = maybe_norm(video.tokens, cfg.pre_norm);
  TokenBundle out;
  out.tokens = add(last_frame.tokens, attend(q, kv, w));
  out.class_token = video.class_token;
  return out;
}

TokenBundle last_frame_of(const TokenBundle& video, std::size_t frame_tokens) {
  check_pooling_shapes(frame_tokens, video.tokens.rows());
  TokenBundle out;
  out.tokens = slice_rows(video.tokens, video.tokens.rows() - frame_tokens, frame_tokens);
  return out;
}

PoolingGrads frame_guided_pooling_vjp(const Matrix& last_frame, const Matrix& video,
                                      const AttentionWeights& w, const PoolingConfig& cfg,
                                      const Matrix& d_out) {
  check_pooling_shapes(last_frame.rows(), video.rows());
  const Matrix q = maybe_norm(last_frame, cfg.pre_norm);
  const Matrix kv = maybe_norm(video, cfg.pre_norm);
  AttendGrads a = attend_backward(q, kv, w, d_out);

  PoolingGrads g;
  g.weights = std::move(a.weights);
  if (cfg.pre_norm) {
    LayerNormGrads gq = layer_norm_backward(last_frame, *cfg.pre_norm, a.d_queries);
    LayerNormGrads gkv = layer_norm_backward(video, *cfg.pre_norm, a.d_keys_values);
    g.d_last_frame = add(d_out, gq.d_input);
    g.d_video = std::move(gkv.d_input);
    add_vector(gq.d_gamma, gkv.d_gamma);
    add_vector(gq.d_beta, gkv.d_beta);
    gq.d_input = Matrix();
    g.norm = std::move(gq);
  } else {
    g.d_last_frame = add(d_out, a.d_queries);
    g.d_video = std::move(a.d_keys_values);
  }
  return g;
}

std::pair<Matrix, Matrix> dual_attention_sequences(const Matrix& image_seq,
                                                   const Matrix& video_seq,
                                                   const DualAttentionWeights& w) {
  const Matrix zi = layer_norm(image_seq, w.image_norm.gamma, w.image_norm.beta, w.image_norm.eps);
  const Matrix zv = layer_norm(video_seq, w.video_norm.gamma, w.video_norm.beta, w.video_norm.eps);
  const Matrix yi = add(image_seq, attend(zi, zv, w.image_to_video));
  const Matrix yv = add(video_seq, attend(zv, zi, w.video_to_image));
  return {add(yi, mlp_forward(yi, w.image_mlp)), add(yv, mlp_forward(yv, w.video_mlp))};
}

std::pair<TokenBundle, TokenBundle> dual_attention(const TokenBundle& image,
                                                   const TokenBundle& video,
                                                   const DualAttentionWeights& w) {
  if (!image.class_token || !video.class_token) {
    throw Error(ErrorCode::invalid_argument,
                std::string("dual attention requires a class token on the ") +
                    (image.class_token ? "video" : "image") + " side");
  }
  if (image.tokens.rows() != video.tokens.rows()) {
    throw Error(ErrorCode::dimension_mismatch,
                "image has " + std::to_string(image.tokens.rows()) + " tokens, video has " +
                    std::to_string(video.tokens.rows()));
  }
  auto [oi, ov] = dual_attention_sequences(sequence_of(image), sequence_of(video), w);
  return {bundle_from_sequence(oi, true), bundle_from_sequence(ov, true)};
}

DualAttentionGrads dual_attention_vjp(const Matrix& image_seq, const Matrix& video_seq,
                                      const DualAttentionWeights& w,
                                      const Matrix& d_image_out, const Matrix& d_video_out) {
  const Matrix zi = layer_norm(image_seq, w.image_norm.gamma, w.image_norm.beta, w.image_norm.eps);
  const Matrix zv = layer_norm(video_seq, w.video_norm.gamma, w.video_norm.beta, w.video_norm.eps);
  const Matrix yi = add(image_seq, attend(zi, zv, w.image_to_video));
  const Matrix yv = add(video_seq, attend(zv, zi, w.video_to_image));

  DualAttentionGrads g;
  g.image_mlp = mlp_backward(yi, w.image_mlp, d_image_out);
  g.video_mlp = mlp_backward(yv, w.video_mlp, d_video_out);
  const Matrix d_yi = add(d_image_out, g.image_mlp.d_input);
  const Matrix d_yv = add(d_video_out, g.video_mlp.d_input);

  AttendGrads ai = attend_backward(zi, zv, w.image_to_video, d_yi);
  AttendGrads av = attend_backward(zv, zi, w.video_to_image, d_yv);
  const Matrix d_zi = add(ai.d_queries, av.d_keys_values);
  const Matrix d_zv = add(ai.d_keys_values, av.d_queries);
  g.image_to_video = std::move(ai.weights);
  g.video_to_image = std::move(av.weights);

  g.image_norm = layer_norm_backward(image_seq, w.image_norm, d_zi);
  g.video_norm = layer_norm_backward(video_seq, w.video_norm, d_zv);
  g.d_image_seq = add(d_yi, g.image_norm.d_input);
  g.d_video_seq = add(d_yv, g.video_norm.d_input);
  return g;
}

Vector fuse_class_tokens(const Vector& image_class, const Vector& video_class) {
  if (image_class.size() != video_class.size()) {
    throw Error(ErrorCode::dimension_mismatch,
                "class tokens have lengths " + std::to_string(image_class.size()) + " and " +
                    std::to_string(video_class.size()));
  }
  Vector out(image_class.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = image_class[i] + video_class[i];
  return out;
}

void FeaturePyramid::validate() const {
  if (levels.empty()) throw Error(ErrorCode::invalid_argument, "feature pyramid has no levels");
  for (std::size_t i = 1; i < levels.size(); ++i) {
    const Grid& prev = levels[i - 1];
    const Grid& cur = levels[i];
    if (cur.channels() != prev.channels()) {
      throw Error(ErrorCode::dimension_mismatch, "pyramid levels disagree on channel count");
    }
    const bool smaller = cur.height() <= prev.height() && cur.width() <= prev.width() &&
                         (cur.height() < prev.height() || cur.width() < prev.width());
    if (!smaller) {
      throw Error(ErrorCode::invalid_argument,
                  "pyramid level " + std::to_string(i) + " (" + cur.shape_string() +
                      ") is not smaller than level " + std::to_string(i - 1) + " (" +
                      prev.shape_string() + ")");
    }
  }
}

Grid tokens_to_grid(const Matrix& tokens, std::size_t height, std::size_t width) {
  if (height * width != tokens.rows()) {
    throw Error(ErrorCode::dimension_mismatch,
                std::to_string(tokens.rows()) + " tokens do not fill a " +
                    std::to_string(height) + "x" + std::to_string(width) + " grid");
  }
  return Grid(height, width, tokens.cols(), tokens.values());
}

FeaturePyramid build_pyramid(const TokenBundle& tokens, std::size_t grid_h, std::size_t grid_w,
                             const std::vector<Scale>& scales,
                             const std::vector<Vector>& kernels) {
  if (scales.empty()) throw Error(ErrorCode::invalid_argument, "no pyramid scales given");
  if (kernels.size() != scales.size()) {
    throw Error(ErrorCode::dimension_mismatch,
                std::to_string(kernels.size()) + " kernels for " +
                    std::to_string(scales.size()) + " scales");
  }
  const Grid base = tokens_to_grid(tokens.tokens, grid_h, grid_w);
  FeaturePyramid out;
  out.kernels = kernels;
  for (std::size_t i = 0; i < scales.size(); ++i) {
    const Grid resized = bilinear_resize(base, scales[i].height, scales[i].width);
    out.levels.push_back(conv3x3(resized, kernels[i], base.channels()));
  }
  out.validate();
  return out;
}

FeaturePyramid fuse_pyramids(const FeaturePyramid& p2d, const FeaturePyramid& p3d,
                             const std::vector<Vector>& kernels) {
  if (p2d.levels.size() != p3d.levels.size() || kernels.size() != p2d.levels.size()) {
    throw Error(ErrorCode::dimension_mismatch,
                "pyramids have " + std::to_string(p2d.levels.size()) + " and " +
                    std::to_string(p3d.levels.size()) + " levels with " +
                    std::to_string(kernels.size()) + " kernels");
  }
  FeaturePyramid out;
  out.kernels = kernels;
  for (std::size_t i = 0; i < p2d.levels.size(); ++i) {
    const Grid& a = p2d.levels[i];
    const Grid& b = p3d.levels[i];
    if (a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels()) {
      throw Error(ErrorCode::dimension_mismatch, "level " + std::to_string(i) + " shapes " +
                                                     a.shape_string() + " and " +
                                                     b.shape_string() + " differ");
    }
    Grid sum = a;
    auto dst = sum.data();
    auto src = b.data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    out.levels.push_back(conv3x3(sum, kernels[i], a.channels()));
  }
  return out;
}

}  // namespace stakit
