#pragma once

// Cross-attention building blocks for the image/video encoder: multi-head
// attention with an output projection, frame-guided temporal pooling, dual
// image-video attention, class-token fusion and feature-pyramid fusion.
//
// Token matrices hold one token per row. A bundle's "sequence" is its spatial
// tokens with the class token (if any) appended as the final row, plus the
// positional embedding when one is supplied.
//
// Every forward op has a matching vector-Jacobian product (`*_vjp`) that
// returns gradients for all inputs and weights given the upstream gradient of
// the op's output.

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stakit/tensor.hpp"

namespace stakit {

struct AttentionWeights {
  std::vector<Matrix> w_q;  // per head, d_model x d_head
  std::vector<Matrix> w_k;
  std::vector<Matrix> w_v;
  Matrix w_o;  // (heads * d_head) x d_model

  std::size_t heads() const noexcept { return w_q.size(); }
  std::size_t d_model() const noexcept { return w_o.cols(); }
  std::size_t d_head() const noexcept { return w_q.empty() ? 0 : w_q.front().cols(); }

  // Throws dimension_mismatch when the per-head shapes disagree.
  void validate() const;

  // Single head whose projections are all the identity.
  static AttentionWeights identity(std::size_t d_model);
  static AttentionWeights zeros(std::size_t d_model, std::size_t heads, std::size_t d_head);
};

struct AttentionGrads {
  std::vector<Matrix> w_q;
  std::vector<Matrix> w_k;
  std::vector<Matrix> w_v;
  Matrix w_o;
};

struct LayerNormParams {
  Vector gamma;
  Vector beta;
  double eps = 1e-5;

  static LayerNormParams unit(std::size_t d_model, double eps = 1e-5);
};

struct LayerNormGrads {
  Matrix d_input;
  Vector d_gamma;
  Vector d_beta;
};

// Two affine layers with a tanh-approximated GELU in between.
struct MlpWeights {
  Matrix w1;  // d_model x hidden
  Vector b1;
  Matrix w2;  // hidden x d_model
  Vector b2;

  static MlpWeights zeros(std::size_t d_model, std::size_t hidden);
};

struct MlpGrads {
  Matrix d_input;
  Matrix d_w1;
  Vector d_b1;
  Matrix d_w2;
  Vector d_b2;
};

struct TokenBundle {
  Matrix tokens;
  std::optional<Vector> class_token;
  std::optional<Matrix> positional;  // rows = tokens + (class token ? 1 : 0)

  std::size_t sequence_length() const noexcept {
    return tokens.rows() + (class_token ? 1 : 0);
  }
};

// [tokens; class_token] + positional. Validates the positional shape.
Matrix sequence_of(const TokenBundle& bundle);
// Inverse of sequence_of without the positional part: the last row becomes
// the class token when has_class_token is set.
TokenBundle bundle_from_sequence(const Matrix& sequence, bool has_class_token);

double gelu(double x) noexcept;
double gelu_derivative(double x) noexcept;

Matrix mlp_forward(const Matrix& x, const MlpWeights& w);
MlpGrads mlp_backward(const Matrix& x, const MlpWeights& w, const Matrix& d_out);

LayerNormGrads layer_norm_backward(const Matrix& x, const LayerNormParams& p,
                                   const Matrix& d_out);

// Per-head softmax(Q K^T / sqrt(d_head)); each row sums to one.
std::vector<Matrix> attention_probabilities(const Matrix& queries,
                                            const Matrix& keys_values,
                                            const AttentionWeights& w);

// concat_h(softmax(Q_h K_h^T / sqrt(d_head)) V_h) W_O, without the residual.
Matrix attend(const Matrix& queries, const Matrix& keys_values, const AttentionWeights& w);

struct AttendGrads {
  Matrix d_queries;
  Matrix d_keys_values;
  AttentionGrads weights;
};
AttendGrads attend_backward(const Matrix& queries, const Matrix& keys_values,
                            const AttentionWeights& w, const Matrix& d_out);

// Residual multi-head cross-attention: sequence(queries) + attend(...).
TokenBundle mha(const TokenBundle& queries, const TokenBundle& keys_values,
                const AttentionWeights& w);
// Gradients with respect to the query and key/value sequences.
AttendGrads mha_vjp(const Matrix& query_seq, const Matrix& kv_seq, const AttentionWeights& w,
                    const Matrix& d_out);

struct PoolingConfig {
  // Layer norm applied to queries and keys/values before projection. Off by
  // default: the temporal pooling attends over raw backbone tokens.
  std::optional<LayerNormParams> pre_norm;
};

// Pools t*N video tokens into the N-token layout of the last frame:
// last + attend(last, video). The video bundle's class token passes through.
TokenBundle frame_guided_pooling(const TokenBundle& last_frame, const TokenBundle& video,
                                 const AttentionWeights& w, const PoolingConfig& cfg = {});

// The last `frame_tokens` rows of a video token matrix.
TokenBundle last_frame_of(const TokenBundle& video, std::size_t frame_tokens);

struct PoolingGrads {
  Matrix d_last_frame;
  Matrix d_video;
  AttentionGrads weights;
  std::optional<LayerNormGrads> norm;  // d_input unused; gamma/beta grads
};
PoolingGrads frame_guided_pooling_vjp(const Matrix& last_frame, const Matrix& video,
                                      const AttentionWeights& w, const PoolingConfig& cfg,
                                      const Matrix& d_out);

struct DualAttentionWeights {
  AttentionWeights image_to_video;  // image queries, video keys/values
  AttentionWeights video_to_image;
  MlpWeights image_mlp;
  MlpWeights video_mlp;
  LayerNormParams image_norm;
  LayerNormParams video_norm;
};

// Returns (refined image tokens + C_I, refined video tokens + C_V). Each branch:
//   x = [tokens; class] + pos
//   y = x + attend(LN(x), LN(other))
//   out = y + MLP(y)
std::pair<TokenBundle, TokenBundle> dual_attention(const TokenBundle& image,
                                                   const TokenBundle& video,
                                                   const DualAttentionWeights& w);

struct DualAttentionGrads {
  Matrix d_image_seq;  // w.r.t. [tokens; class] (and the positional embedding)
  Matrix d_video_seq;
  AttentionGrads image_to_video;
  AttentionGrads video_to_image;
  MlpGrads image_mlp;
  MlpGrads video_mlp;
  LayerNormGrads image_norm;
  LayerNormGrads video_norm;
};
// image_seq/video_seq are the position-embedded sequences; the gradient of
// the positional embedding equals the sequence gradient.
DualAttentionGrads dual_attention_vjp(const Matrix& image_seq, const Matrix& video_seq,
                                      const DualAttentionWeights& w,
                                      const Matrix& d_image_out, const Matrix& d_video_out);
std::pair<Matrix, Matrix> dual_attention_sequences(const Matrix& image_seq,
                                                   const Matrix& video_seq,
                                                   const DualAttentionWeights& w);

Vector fuse_class_tokens(const Vector& image_class, const Vector& video_class);

struct FeaturePyramid {
  std::vector<Grid> levels;  // largest first
  std::vector<Vector> kernels;  // per-level 3x3 smoothing kernels applied

  void validate() const;
};

struct Scale {
  std::size_t height;
  std::size_t width;
};

// Row-major token grid: token (y * width + x) lands at cell (y, x).
Grid tokens_to_grid(const Matrix& tokens, std::size_t height, std::size_t width);

FeaturePyramid build_pyramid(const TokenBundle& tokens, std::size_t grid_h,
                             std::size_t grid_w, const std::vector<Scale>& scales,
                             const std::vector<Vector>& kernels);

// Level-wise sum followed by a 3x3 convolution per level.
FeaturePyramid fuse_pyramids(const FeaturePyramid& p2d, const FeaturePyramid& p3d,
                             const std::vector<Vector>& kernels);

}  // namespace stakit
