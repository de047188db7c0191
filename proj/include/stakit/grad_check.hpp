#pragma once

// Finite-difference verification of the attention ops' analytic gradients.
//
// A problem is a flat set of named tensors (inputs and weights). Names follow
// the weight-file convention: "w_q.h0", "w_k.h1", "w_o", "image.mlp.0",
// "image.mlp.0.b", "image.norm.gamma", ... Vectors are stored as 1 x n.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "stakit/attention.hpp"

namespace stakit {

enum class AttentionOp { mha, frame_guided_pooling, dual_attention };

const char* attention_op_name(AttentionOp op) noexcept;
// Throws invalid_argument for anything other than the three op ids.
AttentionOp parse_attention_op(std::string_view id);

struct NamedTensor {
  std::string name;
  Matrix value;
};
using TensorSet = std::vector<NamedTensor>;

const Matrix& find_tensor(const TensorSet& set, std::string_view name);
bool has_tensor(const TensorSet& set, std::string_view name);

void append_attention_weights(TensorSet& out, const AttentionWeights& w,
                              const std::string& prefix = "");
AttentionWeights attention_weights_from(const TensorSet& set, const std::string& prefix = "");

void append_mlp_weights(TensorSet& out, const MlpWeights& w, const std::string& prefix);
MlpWeights mlp_weights_from(const TensorSet& set, const std::string& prefix);

void append_layer_norm(TensorSet& out, const LayerNormParams& p, const std::string& prefix);
LayerNormParams layer_norm_from(const TensorSet& set, const std::string& prefix,
                                double eps = 1e-5);

DualAttentionWeights dual_weights_from(const TensorSet& set);
void append_dual_weights(TensorSet& out, const DualAttentionWeights& w);

struct ProblemShape {
  std::size_t d_model = 8;
  std::size_t heads = 2;
  std::size_t tokens = 4;     // query tokens (spatial tokens for dual attention)
  std::size_t kv_tokens = 4;  // mha only
  std::size_t frames = 2;     // frame-guided pooling only
  std::size_t mlp_hidden = 0;  // 0 selects 4 * d_model
  bool pooling_pre_norm = false;
};

struct GradCheckProblem {
  AttentionOp op = AttentionOp::mha;
  TensorSet inputs;
  TensorSet weights;
  bool pooling_pre_norm = false;
};

GradCheckProblem random_problem(AttentionOp op, std::uint64_t seed, const ProblemShape& shape = {});

// Forward outputs of the op (one matrix per output stream).
std::vector<Matrix> problem_outputs(const GradCheckProblem& p);
// Sum of squared outputs over two.
double problem_loss(const GradCheckProblem& p);
// Gradient of problem_loss for every tensor, inputs first, in problem order.
TensorSet analytic_gradients(const GradCheckProblem& p);

struct GradCheckReport {
  AttentionOp op = AttentionOp::mha;
  double epsilon = 0.0;
  double max_rel_error = 0.0;
  std::size_t params_checked = 0;
  std::string worst_tensor;
  std::map<std::string, double> per_tensor;
};

// Central differences (L(x+eps) - L(x-eps)) / 2 eps against the analytic
// gradient; relative error uses max(|a|, |b|, 1e-8) as the denominator.
GradCheckReport grad_check(const GradCheckProblem& p, double epsilon);

}  // namespace stakit
