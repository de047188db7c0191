#include "stakit/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "stakit/error.hpp"

namespace stakit {

const char* attention_op_name(AttentionOp op) noexcept {
  switch (op) {
    case AttentionOp::mha: return "mha";
    case AttentionOp::frame_guided_pooling: return "frame_guided_pooling";
    case AttentionOp::dual_attention: return "dual_attention";
  }
  return "unknown";
}

AttentionOp parse_attention_op(std::string_view id) {
  if (id == "mha") return AttentionOp::mha;
  if (id == "frame_guided_pooling") return AttentionOp::frame_guided_pooling;
  if (id == "dual_attention") return AttentionOp::dual_attention;
  throw Error(ErrorCode::invalid_argument,
              "unknown op_id '" + std::string(id) +
                  "' (expected mha, frame_guided_pooling or dual_attention)");
}

const Matrix& find_tensor(const TensorSet& set, std::string_view name) {
  for (const auto& t : set)
    if (t.name == name) return t.value;
  throw Error(ErrorCode::not_found, "tensor '" + std::string(name) + "' is missing");
}

bool has_tensor(const TensorSet& set, std::string_view name) {
  return std::any_of(set.begin(), set.end(), [&](const NamedTensor& t) { return t.name == name; });
}

namespace {

Matrix as_row(const Vector& v) { return Matrix(1, v.size(), v); }

Vector as_vector(const Matrix& m) { return m.values(); }

std::string head_name(const std::string& prefix, const char* proj, std::size_t h) {
  return prefix + proj + ".h" + std::to_string(h);
}

}  // namespace

void append_attention_weights(TensorSet& out, const AttentionWeights& w,
                              const std::string& prefix) {
  for (std::size_t h = 0; h < w.heads(); ++h) {
    out.push_back({head_name(prefix, "w_q", h), w.w_q[h]});
    out.push_back({head_name(prefix, "w_k", h), w.w_k[h]});
    out.push_back({head_name(prefix, "w_v", h), w.w_v[h]});
  }
  out.push_back({prefix + "w_o", w.w_o});
}

AttentionWeights attention_weights_from(const TensorSet& set, const std::string& prefix) {
  AttentionWeights w;
  for (std::size_t h = 0; has_tensor(set, head_name(prefix, "w_q", h)); ++h) {
    w.w_q.push_back(find_tensor(set, head_name(prefix, "w_q", h)));
    w.w_k.push_back(find_tensor(set, head_name(prefix, "w_k", h)));
    w.w_v.push_back(find_tensor(set, head_name(prefix, "w_v", h)));
  }
  w.w_o = find_tensor(set, prefix + "w_o");
  w.validate();
  return w;
}

void append_mlp_weights(TensorSet& out, const MlpWeights& w, const std::string& prefix) {
  out.push_back({prefix + "mlp.0", w.w1});
  out.push_back({prefix + "mlp.0.b", as_row(w.b1)});
  out.push_back({prefix + "mlp.1", w.w2});
  out.push_back({prefix + "mlp.1.b", as_row(w.b2)});
}

MlpWeights mlp_weights_from(const TensorSet& set, const std::string& prefix) {
  return {find_tensor(set, prefix + "mlp.0"), as_vector(find_tensor(set, prefix + "mlp.0.b")),
          find_tensor(set, prefix + "mlp.1"), as_vector(find_tensor(set, prefix + "mlp.1.b"))};
}

void append_layer_norm(TensorSet& out, const LayerNormParams& p, const std::string& prefix) {
  out.push_back({prefix + "norm.gamma", as_row(p.gamma)});
  out.push_back({prefix + "norm.beta", as_row(p.beta)});
}

LayerNormParams layer_norm_from(const TensorSet& set, const std::string& prefix, double eps) {
  return {as_vector(find_tensor(set, prefix + "norm.gamma")),
          as_vector(find_tensor(set, prefix + "norm.beta")), eps};
}

DualAttentionWeights dual_weights_from(const TensorSet& set) {
  return {attention_weights_from(set, "i2v."), attention_weights_from(set, "v2i."),
          mlp_weights_from(set, "image."),     mlp_weights_from(set, "video."),
          layer_norm_from(set, "image."),      layer_norm_from(set, "video.")};
}

void append_dual_weights(TensorSet& out, const DualAttentionWeights& w) {
  append_attention_weights(out, w.image_to_video, "i2v.");
  append_attention_weights(out, w.video_to_image, "v2i.");
  append_mlp_weights(out, w.image_mlp, "image.");
  append_mlp_weights(out, w.video_mlp, "video.");
  append_layer_norm(out, w.image_norm, "image.");
  append_layer_norm(out, w.video_norm, "video.");
}

namespace {

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  Matrix normal(std::size_t rows, std::size_t cols, double stddev, double mean = 0.0) {
    std::normal_distribution<double> dist(mean, stddev);
    std::vector<double> data(rows * cols);
    for (double& v : data) v = dist(rng_);
    return Matrix(rows, cols, std::move(data));
  }

 private:
  std::mt19937_64 rng_;
};

AttentionWeights random_attention(Sampler& s, std::size_t d_model, std::size_t heads) {
  if (heads == 0 || d_model % heads != 0) {
    throw Error(ErrorCode::invalid_argument, "d_model " + std::to_string(d_model) +
                                                 " is not divisible by " +
                                                 std::to_string(heads) + " heads");
  }
  const std::size_t dh = d_model / heads;
  const double std_in = 1.0 / std::sqrt(static_cast<double>(d_model));
  AttentionWeights w;
  for (std::size_t h = 0; h < heads; ++h) {
    w.w_q.push_back(s.normal(d_model, dh, std_in));
    w.w_k.push_back(s.normal(d_model, dh, std_in));
    w.w_v.push_back(s.normal(d_model, dh, std_in));
  }
  w.w_o = s.normal(heads * dh, d_model, 1.0 / std::sqrt(static_cast<double>(heads * dh)));
  return w;
}

MlpWeights random_mlp(Sampler& s, std::size_t d_model, std::size_t hidden) {
  return {s.normal(d_model, hidden, 1.0 / std::sqrt(static_cast<double>(d_model))),
          s.normal(1, hidden, 0.1).values(),
          s.normal(hidden, d_model, 1.0 / std::sqrt(static_cast<double>(hidden))),
          s.normal(1, d_model, 0.1).values()};
}

LayerNormParams random_norm(Sampler& s, std::size_t d_model) {
  return {s.normal(1, d_model, 0.1, 1.0).values(), s.normal(1, d_model, 0.1).values(), 1e-5};
}

Matrix image_sequence(const TensorSet& in, const std::string& side) {
  return add(vstack(find_tensor(in, side + ".tokens"), find_tensor(in, side + ".class")),
             find_tensor(in, side + ".pos"));
}

PoolingConfig pooling_config(const GradCheckProblem& p) {
  PoolingConfig cfg;
  if (p.pooling_pre_norm) cfg.pre_norm = layer_norm_from(p.weights, "");
  return cfg;
}

double half_sum_squares(const std::vector<Matrix>& outputs) {
  double total = 0.0;
  for (const Matrix& m : outputs)
    for (double v : m.data()) total += 0.5 * v * v;
  return total;
}

// Straight-line extended-precision forward used only for the finite
// differences. It shares no code with the double-precision path.
namespace reference {

using Real = long double;

struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Real> v;

  Real& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  Real at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

Mat zeros(std::size_t rows, std::size_t cols) { return {rows, cols, std::vector<Real>(rows * cols, 0.0L)}; }

Mat widen(const Matrix& m) {
  Mat out = zeros(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) out.v[i] = m.data()[i];
  return out;
}

Mat product(const Mat& a, const Mat& b) {
  Mat out = zeros(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      Real acc = 0.0L;
      for (std::size_t k = 0; k < a.cols; ++k) acc += a.at(i, k) * b.at(k, j);
      out.at(i, j) = acc;
    }
  return out;
}

Mat sum(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
  return a;
}

Mat stack(const Mat& a, const Mat& b) {
  Mat out = a;
  out.rows += b.rows;
  out.v.insert(out.v.end(), b.v.begin(), b.v.end());
  return out;
}

Mat normalize(const Mat& x, const Mat& gamma, const Mat& beta, Real eps) {
  Mat out = zeros(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    Real mean = 0.0L;
    for (std::size_t j = 0; j < x.cols; ++j) mean += x.at(i, j);
    mean /= static_cast<Real>(x.cols);
    Real var = 0.0L;
    for (std::size_t j = 0; j < x.cols; ++j) var += (x.at(i, j) - mean) * (x.at(i, j) - mean);
    var /= static_cast<Real>(x.cols);
    const Real sd = std::sqrt(var + eps);
    for (std::size_t j = 0; j < x.cols; ++j)
      out.at(i, j) = gamma.v[j] * (x.at(i, j) - mean) / sd + beta.v[j];
  }
  return out;
}

Mat attention(const Mat& q_in, const Mat& kv_in, const TensorSet& w, const std::string& prefix) {
  const Mat wo = widen(find_tensor(w, prefix + "w_o"));
  Mat concat = zeros(q_in.rows, wo.rows);
  std::size_t offset = 0;
  for (std::size_t h = 0; has_tensor(w, head_name(prefix, "w_q", h)); ++h) {
    const Mat q = product(q_in, widen(find_tensor(w, head_name(prefix, "w_q", h))));
    const Mat k = product(kv_in, widen(find_tensor(w, head_name(prefix, "w_k", h))));
    const Mat v = product(kv_in, widen(find_tensor(w, head_name(prefix, "w_v", h))));
    const Real scale = 1.0L / std::sqrt(static_cast<Real>(q.cols));
    for (std::size_t i = 0; i < q.rows; ++i) {
      std::vector<Real> weight(k.rows);
      Real peak = -std::numeric_limits<Real>::infinity();
      for (std::size_t j = 0; j < k.rows; ++j) {
        Real dot = 0.0L;
        for (std::size_t c = 0; c < q.cols; ++c) dot += q.at(i, c) * k.at(j, c);
        weight[j] = dot * scale;
        peak = std::max(peak, weight[j]);
      }
      Real total = 0.0L;
      for (Real& x : weight) total += (x = std::exp(x - peak));
      for (std::size_t c = 0; c < v.cols; ++c) {
        Real acc = 0.0L;
        for (std::size_t j = 0; j < k.rows; ++j) acc += weight[j] / total * v.at(j, c);
        concat.at(i, offset + c) = acc;
      }
    }
    offset += v.cols;
  }
  return product(concat, wo);
}

Mat mlp(const Mat& x, const TensorSet& w, const std::string& prefix) {
  auto affine = [&](const Mat& in, const std::string& name) {
    Mat out = product(in, widen(find_tensor(w, prefix + name)));
    const Mat b = widen(find_tensor(w, prefix + name + ".b"));
    for (std::size_t i = 0; i < out.rows; ++i)
      for (std::size_t j = 0; j < out.cols; ++j) out.at(i, j) += b.v[j];
    return out;
  };
  Mat hidden = affine(x, "mlp.0");
  const Real c = std::sqrt(2.0L / 3.14159265358979323846264338327950288L);
  for (Real& h : hidden.v) h = 0.5L * h * (1.0L + std::tanh(c * (h + 0.044715L * h * h * h)));
  return affine(hidden, "mlp.1");
}

std::vector<Mat> outputs(const GradCheckProblem& p) {
  switch (p.op) {
    case AttentionOp::mha: {
      const Mat q = widen(find_tensor(p.inputs, "queries"));
      return {sum(q, attention(q, widen(find_tensor(p.inputs, "keys_values")), p.weights, ""))};
    }
    case AttentionOp::frame_guided_pooling: {
      const Mat last = widen(find_tensor(p.inputs, "last_frame"));
      Mat q = last;
      Mat kv = widen(find_tensor(p.inputs, "video"));
      if (p.pooling_pre_norm) {
        const Mat g = widen(find_tensor(p.weights, "norm.gamma"));
        const Mat b = widen(find_tensor(p.weights, "norm.beta"));
        q = normalize(q, g, b, 1e-5L);
        kv = normalize(kv, g, b, 1e-5L);
      }
      return {sum(last, attention(q, kv, p.weights, ""))};
    }
    case AttentionOp::dual_attention: {
      auto seq = [&](const std::string& side) {
        return sum(stack(widen(find_tensor(p.inputs, side + ".tokens")),
                         widen(find_tensor(p.inputs, side + ".class"))),
                   widen(find_tensor(p.inputs, side + ".pos")));
      };
      auto norm = [&](const Mat& x, const std::string& side) {
        return normalize(x, widen(find_tensor(p.weights, side + ".norm.gamma")),
                         widen(find_tensor(p.weights, side + ".norm.beta")), 1e-5L);
      };
      const Mat xi = seq("image");
      const Mat xv = seq("video");
      const Mat zi = norm(xi, "image");
      const Mat zv = norm(xv, "video");
      const Mat yi = sum(xi, attention(zi, zv, p.weights, "i2v."));
      const Mat yv = sum(xv, attention(zv, zi, p.weights, "v2i."));
      return {sum(yi, mlp(yi, p.weights, "image.")), sum(yv, mlp(yv, p.weights, "video."))};
    }
  }
  return {};
}

// L(up) - L(down) accumulated as (u - d)(u + d) / 2 per entry so two nearly
// equal loss totals never cancel.
Real loss_difference(const std::vector<Mat>& up, const std::vector<Mat>& down) {
  Real total = 0.0L;
  for (std::size_t k = 0; k < up.size(); ++k)
    for (std::size_t i = 0; i < up[k].v.size(); ++i)
      total += 0.5L * (up[k].v[i] - down[k].v[i]) * (up[k].v[i] + down[k].v[i]);
  return total;
}

}  // namespace reference

}  // namespace

GradCheckProblem random_problem(AttentionOp op, std::uint64_t seed, const ProblemShape& shape) {
  Sampler s(seed);
  GradCheckProblem p;
  p.op = op;
  const std::size_t d = shape.d_model;
  const std::size_t hidden = shape.mlp_hidden == 0 ? 4 * d : shape.mlp_hidden;
  switch (op) {
    case AttentionOp::mha:
      p.inputs.push_back({"queries", s.normal(shape.tokens, d, 1.0)});
      p.inputs.push_back({"keys_values", s.normal(shape.kv_tokens, d, 1.0)});
      append_attention_weights(p.weights, random_attention(s, d, shape.heads));
      break;
    case AttentionOp::frame_guided_pooling:
      p.inputs.push_back({"last_frame", s.normal(shape.tokens, d, 1.0)});
      p.inputs.push_back({"video", s.normal(shape.tokens * shape.frames, d, 1.0)});
      append_attention_weights(p.weights, random_attention(s, d, shape.heads));
      p.pooling_pre_norm = shape.pooling_pre_norm;
      if (shape.pooling_pre_norm) append_layer_norm(p.weights, random_norm(s, d), "");
      break;
    case AttentionOp::dual_attention:
      for (const std::string side : {"image", "video"}) {
        p.inputs.push_back({side + ".tokens", s.normal(shape.tokens, d, 1.0)});
        p.inputs.push_back({side + ".class", s.normal(1, d, 1.0)});
        p.inputs.push_back({side + ".pos", s.normal(shape.tokens + 1, d, 0.5)});
      }
      append_dual_weights(p.weights,
                          {random_attention(s, d, shape.heads), random_attention(s, d, shape.heads),
                           random_mlp(s, d, hidden), random_mlp(s, d, hidden),
                           random_norm(s, d), random_norm(s, d)});
      break;
  }
  return p;
}

std::vector<Matrix> problem_outputs(const GradCheckProblem& p) {
  switch (p.op) {
    case AttentionOp::mha: {
      const Matrix& q = find_tensor(p.inputs, "queries");
      const Matrix& kv = find_tensor(p.inputs, "keys_values");
      return {add(q, attend(q, kv, attention_weights_from(p.weights)))};
    }
    case AttentionOp::frame_guided_pooling: {
      TokenBundle last{find_tensor(p.inputs, "last_frame"), {}, {}};
      TokenBundle video{find_tensor(p.inputs, "video"), {}, {}};
      return {frame_guided_pooling(last, video, attention_weights_from(p.weights),
                                   pooling_config(p))
                  .tokens};
    }
    case AttentionOp::dual_attention: {
      auto [oi, ov] = dual_attention_sequences(image_sequence(p.inputs, "image"),
                                               image_sequence(p.inputs, "video"),
                                               dual_weights_from(p.weights));
      return {oi, ov};
    }
  }
  throw Error(ErrorCode::invalid_argument, "unknown attention op");
}

double problem_loss(const GradCheckProblem& p) { return half_sum_squares(problem_outputs(p)); }

TensorSet analytic_gradients(const GradCheckProblem& p) {
  const std::vector<Matrix> outputs = problem_outputs(p);
  TensorSet g;
  switch (p.op) {
    case AttentionOp::mha: {
      const Matrix& q = find_tensor(p.inputs, "queries");
      const Matrix& kv = find_tensor(p.inputs, "keys_values");
      AttendGrads a = mha_vjp(q, kv, attention_weights_from(p.weights), outputs[0]);
      g.push_back({"queries", std::move(a.d_queries)});
      g.push_back({"keys_values", std::move(a.d_keys_values)});
      AttentionWeights as_weights{a.weights.w_q, a.weights.w_k, a.weights.w_v, a.weights.w_o};
      append_attention_weights(g, as_weights);
      break;
    }
    case AttentionOp::frame_guided_pooling: {
      const PoolingConfig cfg = pooling_config(p);
      PoolingGrads pg = frame_guided_pooling_vjp(find_tensor(p.inputs, "last_frame"),
                                                 find_tensor(p.inputs, "video"),
                                                 attention_weights_from(p.weights), cfg, outputs[0]);
      g.push_back({"last_frame", std::move(pg.d_last_frame)});
      g.push_back({"video", std::move(pg.d_video)});
      AttentionWeights as_weights{pg.weights.w_q, pg.weights.w_k, pg.weights.w_v, pg.weights.w_o};
      append_attention_weights(g, as_weights);
      if (pg.norm) append_layer_norm(g, {pg.norm->d_gamma, pg.norm->d_beta, 0.0}, "");
      break;
    }
    case AttentionOp::dual_attention: {
      DualAttentionGrads dg = dual_attention_vjp(image_sequence(p.inputs, "image"),
                                                 image_sequence(p.inputs, "video"),
                                                 dual_weights_from(p.weights), outputs[0],
                                                 outputs[1]);
      for (const auto& [side, seq] :
           {std::pair<std::string, const Matrix*>{"image", &dg.d_image_seq},
            std::pair<std::string, const Matrix*>{"video", &dg.d_video_seq}}) {
        const std::size_t n = seq->rows() - 1;
        g.push_back({side + ".tokens", slice_rows(*seq, 0, n)});
        g.push_back({side + ".class", slice_rows(*seq, n, 1)});
        g.push_back({side + ".pos", *seq});
      }
      auto to_weights = [](const AttentionGrads& a) {
        return AttentionWeights{a.w_q, a.w_k, a.w_v, a.w_o};
      };
      append_dual_weights(
          g, {to_weights(dg.image_to_video), to_weights(dg.video_to_image),
              {dg.image_mlp.d_w1, dg.image_mlp.d_b1, dg.image_mlp.d_w2, dg.image_mlp.d_b2},
              {dg.video_mlp.d_w1, dg.video_mlp.d_b1, dg.video_mlp.d_w2, dg.video_mlp.d_b2},
              {dg.image_norm.d_gamma, dg.image_norm.d_beta, 0.0},
              {dg.video_norm.d_gamma, dg.video_norm.d_beta, 0.0}});
      break;
    }
  }
  return g;
}

GradCheckReport grad_check(const GradCheckProblem& p, double epsilon) {
  if (!(epsilon > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "grad_check: epsilon must be positive");
  }
  const TensorSet analytic = analytic_gradients(p);
  GradCheckProblem work = p;

  GradCheckReport report;
  report.op = p.op;
  report.epsilon = epsilon;
  for (TensorSet* set : {&work.inputs, &work.weights}) {
    for (NamedTensor& t : *set) {
      const Matrix& expected = find_tensor(analytic, t.name);
      double worst = 0.0;
      auto values = t.value.data();
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double original = values[i];
        values[i] = original + epsilon;
        const auto up = reference::outputs(work);
        values[i] = original - epsilon;
        const auto down = reference::outputs(work);
        values[i] = original;

        // The perturbation actually applied, after rounding to double.
        const long double step = static_cast<long double>(original + epsilon) -
                                 static_cast<long double>(original - epsilon);
        const double numeric =
            static_cast<double>(reference::loss_difference(up, down) / step);
        const double a = expected.data()[i];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(a - numeric) / denom);
        ++report.params_checked;
      }
      report.per_tensor[t.name] = worst;
      if (worst > report.max_rel_error || report.worst_tensor.empty()) {
        report.max_rel_error = std::max(report.max_rel_error, worst);
        if (worst >= report.max_rel_error) report.worst_tensor = t.name;
      }
    }
  }
  return report;
}

}  // namespace stakit
