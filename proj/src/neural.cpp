// SPDX-License-Identifier: Apache-2.0
#include "pgn/neural.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <set>

#include "pgn/error.hpp"

namespace pgn {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

Matrix uniform_matrix(int rows, int cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

double init_bound(int d) { return 1.0 / std::sqrt(static_cast<double>(d)); }

}  // namespace

EncoderParams EncoderParams::init(int vocab, int d, int max_positions, Rng& rng) {
  if (d <= 0 || vocab <= 0 || max_positions <= 0) throw InvalidInput("encoder dimensions must be positive");
  const double b = init_bound(d);
  EncoderParams p;
  p.tok_emb = uniform_matrix(vocab, d, b, rng);
  p.pos_emb = uniform_matrix(max_positions, d, b, rng);
  p.wq = uniform_matrix(d, d, b, rng);
  p.wk = uniform_matrix(d, d, b, rng);
  p.wv = uniform_matrix(d, d, b, rng);
  p.wo = uniform_matrix(d, d, b, rng);
  p.w1 = uniform_matrix(d, 4 * d, b, rng);
  p.b1 = uniform_matrix(1, 4 * d, b, rng);
  p.w2 = uniform_matrix(4 * d, d, b, rng);
  p.b2 = uniform_matrix(1, d, b, rng);
  p.ln1_gain = Matrix::Ones(1, d);
  p.ln1_bias = Matrix::Zero(1, d);
  p.ln2_gain = Matrix::Ones(1, d);
  p.ln2_bias = Matrix::Zero(1, d);
  return p;
}

StudentModel StudentModel::init(int pinyin_vocab, int hanzi_vocab, int d, int max_positions, Rng& rng) {
  StudentModel m;
  m.encoder = EncoderParams::init(pinyin_vocab, d, max_positions, rng);
  const double b = init_bound(d);
  m.char_w = uniform_matrix(d, hanzi_vocab, b, rng);
  m.char_b = uniform_matrix(1, hanzi_vocab, b, rng);
  m.feat_w = uniform_matrix(d, d, b, rng);
  m.feat_b = uniform_matrix(1, d, b, rng);
  m.gender_w = uniform_matrix(d, 2, b, rng);
  m.gender_b = uniform_matrix(1, 2, b, rng);
  return m;
}

TeacherModel TeacherModel::init(int hanzi_vocab, int d, int max_positions, Rng& rng) {
  TeacherModel m;
  m.encoder = EncoderParams::init(hanzi_vocab, d, max_positions, rng);
  const double b = init_bound(d);
  m.gender_w = uniform_matrix(d, 2, b, rng);
  m.gender_b = uniform_matrix(1, 2, b, rng);
  return m;
}

// ---------------------------------------------------------------------------
// Encoder
//
// A batch of sequences is packed row-wise: every non-PAD token of every
// sequence becomes one row, so the projections run as single matrix
// products and only attention is evaluated per sequence.

namespace {

struct LayerNormTrace {
  Matrix xhat;
  Eigen::VectorXd inv_std;
};

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, LayerNormTrace& t) {
  const Eigen::Index n = x.rows();
  const double d = static_cast<double>(x.cols());
  t.xhat.resize(n, x.cols());
  t.inv_std.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.row(i).sum() / d;
    t.xhat.row(i) = (x.row(i).array() - mu).matrix();
    const double var = t.xhat.row(i).squaredNorm() / d;
    t.inv_std(i) = 1.0 / std::sqrt(var + kLayerNormEps);
    t.xhat.row(i) *= t.inv_std(i);
  }
  Matrix y = (t.xhat.array().rowwise() * gain.row(0).array()).matrix();
  y.rowwise() += bias.row(0);
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const Matrix& gain, const LayerNormTrace& t, Matrix& dgain,
                           Matrix& dbias) {
  dgain.row(0) += (dy.array() * t.xhat.array()).colwise().sum().matrix();
  dbias.row(0) += dy.colwise().sum();
  Matrix dx = (dy.array().rowwise() * gain.row(0).array()).matrix();
  const double d = static_cast<double>(dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double mean_dxhat = dx.row(i).sum() / d;
    const double mean_dxhat_xhat = dx.row(i).dot(t.xhat.row(i)) / d;
    dx.row(i) = t.inv_std(i) * (dx.row(i).array() - mean_dxhat - t.xhat.row(i).array() * mean_dxhat_xhat).matrix();
  }
  return dx;
}

double gelu(double u) { return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + 0.044715 * u * u * u))); }

double gelu_grad(double u) {
  const double t = std::tanh(kGeluC * (u + 0.044715 * u * u * u));
  return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * u * u);
}

void softmax_rows(Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp().matrix();
    m.row(i) /= m.row(i).sum();
  }
}

// Activations kept for the backward pass.
struct EncoderTrace {
  std::vector<Eigen::Index> starts;  // first packed row of each sequence, plus the end
  std::vector<int> positions;        // original position of each packed row
  std::vector<int> ids;
  Matrix x, q, k, v, ctx, y1, u, g, h;
  std::vector<Matrix> attn;          // per sequence
  LayerNormTrace ln1, ln2;

  std::size_t sequences() const { return starts.size() - 1; }
  Eigen::Index begin(std::size_t s) const { return starts[s]; }
  Eigen::Index length(std::size_t s) const { return starts[s + 1] - starts[s]; }
};

template <typename Sequences>
EncoderTrace encode_traced(const EncoderParams& p, const Sequences& batch) {
  EncoderTrace t;
  t.starts.push_back(0);
  for (const auto& seq : batch) {
    const std::span<const int> tokens(seq);
    if (tokens.empty()) throw InvalidInput("encoder input is empty");
    if (static_cast<int>(tokens.size()) > p.max_positions()) {
      throw InvalidInput("sequence of " + std::to_string(tokens.size()) + " tokens exceeds " +
                         std::to_string(p.max_positions()) + " positions");
    }
    const std::size_t first = t.ids.size();
    for (std::size_t j = 0; j < tokens.size(); ++j) {
      const int id = tokens[j];
      if (id < 0 || id >= p.vocab_size()) throw InvalidInput("token id " + std::to_string(id) + " out of range");
      if (id == Vocab::kPad) continue;
      t.positions.push_back(static_cast<int>(j));
      t.ids.push_back(id);
    }
    if (t.ids.size() == first || t.positions[first] != 0) {
      throw InvalidInput("encoder input must start with a non-PAD token");
    }
    t.starts.push_back(static_cast<Eigen::Index>(t.ids.size()));
  }
  const auto n = static_cast<Eigen::Index>(t.ids.size());
  const int d = p.dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  t.x.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) t.x.row(i) = p.tok_emb.row(t.ids[i]) + p.pos_emb.row(t.positions[i]);

  t.q.noalias() = t.x * p.wq;
  t.k.noalias() = t.x * p.wk;
  t.v.noalias() = t.x * p.wv;
  t.ctx.resize(n, d);
  t.attn.resize(t.sequences());
  for (std::size_t s = 0; s < t.sequences(); ++s) {
    const Eigen::Index b = t.begin(s), len = t.length(s);
    Matrix& a = t.attn[s];
    a.noalias() = t.q.middleRows(b, len) * t.k.middleRows(b, len).transpose();
    a *= scale;
    softmax_rows(a);
    t.ctx.middleRows(b, len).noalias() = a * t.v.middleRows(b, len);
  }
  Matrix s1 = t.x;
  s1.noalias() += t.ctx * p.wo;
  t.y1 = layer_norm(s1, p.ln1_gain, p.ln1_bias, t.ln1);

  t.u.noalias() = t.y1 * p.w1;
  t.u.rowwise() += p.b1.row(0);
  t.g = t.u.unaryExpr(&gelu);
  Matrix s2 = t.y1;
  s2.noalias() += t.g * p.w2;
  s2.rowwise() += p.b2.row(0);
  t.h = layer_norm(s2, p.ln2_gain, p.ln2_bias, t.ln2);
  return t;
}

void encode_backward(const EncoderParams& p, const EncoderTrace& t, const Matrix& dh, EncoderParams& grad) {
  const Matrix ds2 = layer_norm_backward(dh, p.ln2_gain, t.ln2, grad.ln2_gain, grad.ln2_bias);
  // s2 = y1 + gelu(y1 w1 + b1) w2 + b2
  grad.w2.noalias() += t.g.transpose() * ds2;
  grad.b2.row(0) += ds2.colwise().sum();
  Matrix du;
  du.noalias() = ds2 * p.w2.transpose();
  du.array() *= t.u.unaryExpr(&gelu_grad).array();
  grad.w1.noalias() += t.y1.transpose() * du;
  grad.b1.row(0) += du.colwise().sum();
  Matrix dy1 = ds2;
  dy1.noalias() += du * p.w1.transpose();

  const Matrix ds1 = layer_norm_backward(dy1, p.ln1_gain, t.ln1, grad.ln1_gain, grad.ln1_bias);
  // s1 = x + softmax(q k^T / sqrt(d)) v wo, attention within each sequence
  grad.wo.noalias() += t.ctx.transpose() * ds1;
  Matrix dctx;
  dctx.noalias() = ds1 * p.wo.transpose();
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.dim()));
  Matrix dq(t.q.rows(), t.q.cols()), dk(t.k.rows(), t.k.cols()), dv(t.v.rows(), t.v.cols());
  for (std::size_t s = 0; s < t.sequences(); ++s) {
    const Eigen::Index b = t.begin(s), len = t.length(s);
    const Matrix& a = t.attn[s];
    const Matrix dattn = dctx.middleRows(b, len) * t.v.middleRows(b, len).transpose();
    dv.middleRows(b, len).noalias() = a.transpose() * dctx.middleRows(b, len);
    Matrix dscores(len, len);
    for (Eigen::Index i = 0; i < len; ++i) {
      const double inner = dattn.row(i).dot(a.row(i));
      dscores.row(i) = (a.row(i).array() * (dattn.row(i).array() - inner)).matrix() * scale;
    }
    dq.middleRows(b, len).noalias() = dscores * t.k.middleRows(b, len);
    dk.middleRows(b, len).noalias() = dscores.transpose() * t.q.middleRows(b, len);
  }
  grad.wq.noalias() += t.x.transpose() * dq;
  grad.wk.noalias() += t.x.transpose() * dk;
  grad.wv.noalias() += t.x.transpose() * dv;
  Matrix dx = ds1;
  dx.noalias() += dq * p.wq.transpose();
  dx.noalias() += dk * p.wk.transpose();
  dx.noalias() += dv * p.wv.transpose();
  for (std::size_t i = 0; i < t.ids.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    grad.tok_emb.row(t.ids[i]) += dx.row(row);
    grad.pos_emb.row(t.positions[i]) += dx.row(row);
  }
}

}  // namespace

Matrix encode(const EncoderParams& params, std::span<const int> tokens) {
  const std::vector<std::span<const int>> batch{tokens};
  const EncoderTrace t = encode_traced(params, batch);
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(tokens.size()), params.dim());
  for (std::size_t i = 0; i < t.positions.size(); ++i) out.row(t.positions[i]) = t.h.row(static_cast<Eigen::Index>(i));
  return out;
}

RowVector softmax(const RowVector& z) {
  const double mx = z.maxCoeff();
  RowVector e = (z.array() - mx).exp().matrix();
  return e / e.sum();
}

namespace {

template <typename Row>
RowVector log_softmax(const Row& z) {
  const double mx = z.maxCoeff();
  const double lse = mx + std::log((z.array() - mx).exp().sum());
  return (z.array() - lse).matrix();
}

}  // namespace

double kl_divergence(const RowVector& p, const RowVector& q) {
  const double kl = (p.array() * (p.array().log() - q.array().log())).sum();
  return std::max(0.0, kl);
}

// ---------------------------------------------------------------------------
// Heads

namespace {

struct StudentTrace {
  EncoderTrace enc;
  Matrix h0, h_pinyin, z_pinyin;  // one row per sequence
  std::vector<Eigen::Index> syllable_rows;  // packed rows after each aggregate row
  Matrix syllable_features;
  Matrix char_logits;             // one row per entry of syllable_rows
  std::vector<Eigen::Index> logit_starts;  // first char_logits row of each sequence, plus the end
};

struct TeacherTrace {
  EncoderTrace enc;
  Matrix h_hanzi, z_hanzi;
};

Matrix gather_rows(const Matrix& m, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

template <typename Sequences>
StudentTrace student_traced(const StudentModel& m, const Sequences& batch) {
  StudentTrace t;
  t.enc = encode_traced(m.encoder, batch);
  std::vector<Eigen::Index> heads;
  t.logit_starts.push_back(0);
  for (std::size_t s = 0; s < t.enc.sequences(); ++s) {
    heads.push_back(t.enc.begin(s));
    for (Eigen::Index r = t.enc.begin(s) + 1; r < t.enc.begin(s) + t.enc.length(s); ++r) t.syllable_rows.push_back(r);
    t.logit_starts.push_back(static_cast<Eigen::Index>(t.syllable_rows.size()));
  }
  t.h0 = gather_rows(t.enc.h, heads);
  t.h_pinyin.noalias() = t.h0 * m.feat_w;
  t.h_pinyin.rowwise() += m.feat_b.row(0);
  t.z_pinyin.noalias() = t.h_pinyin * m.gender_w;
  t.z_pinyin.rowwise() += m.gender_b.row(0);
  t.syllable_features = gather_rows(t.enc.h, t.syllable_rows);
  t.char_logits.noalias() = t.syllable_features * m.char_w;
  t.char_logits.rowwise() += m.char_b.row(0);
  return t;
}

template <typename Sequences>
TeacherTrace teacher_traced(const TeacherModel& m, const Sequences& batch) {
  TeacherTrace t;
  t.enc = encode_traced(m.encoder, batch);
  std::vector<Eigen::Index> heads;
  for (std::size_t s = 0; s < t.enc.sequences(); ++s) heads.push_back(t.enc.begin(s));
  t.h_hanzi = gather_rows(t.enc.h, heads);
  t.z_hanzi.noalias() = t.h_hanzi * m.gender_w;
  t.z_hanzi.rowwise() += m.gender_b.row(0);
  return t;
}

}  // namespace

StudentOutputs forward_student(const StudentModel& m, std::span<const int> tokens) {
  const std::vector<std::span<const int>> batch{tokens};
  StudentTrace t = student_traced(m, batch);
  return {t.h_pinyin.row(0), t.z_pinyin.row(0), std::move(t.char_logits)};
}

TeacherOutputs forward_teacher(const TeacherModel& m, std::span<const int> tokens) {
  const std::vector<std::span<const int>> batch{tokens};
  TeacherTrace t = teacher_traced(m, batch);
  return {t.h_hanzi.row(0), t.z_hanzi.row(0)};
}

// ---------------------------------------------------------------------------
// Losses

namespace {

bool needs_teacher(const LossSwitches& s) { return s.name || s.feature || s.response; }

void validate_batch(std::span<const Example> batch, const LossConfig& cfg, std::span<const TeacherOutputs> frozen) {
  if (batch.empty()) throw InvalidInput("loss over an empty batch");
  if (!frozen.empty() && frozen.size() != batch.size()) throw InvalidInput("frozen targets do not match the batch");
  const auto& s = cfg.switches;
  if (s.pre || needs_teacher(s)) {
    for (const auto& ex : batch) {
      if (!ex.has_hanzi) throw InvalidInput("training record without hanzi while a hanzi-dependent loss is enabled");
    }
  }
}

struct PinyinView {
  std::span<const Example> batch;
  struct Iter {
    const Example* p;
    const std::vector<int>& operator*() const { return p->pinyin_tokens; }
    Iter& operator++() { ++p; return *this; }
    bool operator!=(const Iter& o) const { return p != o.p; }
  };
  Iter begin() const { return {batch.data()}; }
  Iter end() const { return {batch.data() + batch.size()}; }
};

struct HanziView {
  std::span<const Example> batch;
  struct Iter {
    const Example* p;
    const std::vector<int>& operator*() const { return p->hanzi_tokens; }
    Iter& operator++() { ++p; return *this; }
    bool operator!=(const Iter& o) const { return p != o.p; }
  };
  Iter begin() const { return {batch.data()}; }
  Iter end() const { return {batch.data() + batch.size()}; }
};

// Batch losses (sums over examples); gradients of the mean are accumulated
// when gs/gt are given.
LossBreakdown batch_loss(const StudentModel& student, const TeacherModel& teacher, std::span<const Example> batch,
                         const LossConfig& cfg, std::span<const TeacherOutputs> frozen, StudentModel* gs,
                         TeacherModel* gt) {
  const auto& sw = cfg.switches;
  const bool grads = gs != nullptr;
  const double scale = 1.0 / static_cast<double>(batch.size());
  const auto n = static_cast<Eigen::Index>(batch.size());
  LossBreakdown sums;

  const StudentTrace st = student_traced(student, PinyinView{batch});
  Matrix dz_s = Matrix::Zero(n, 2);
  Matrix dh_p = Matrix::Zero(n, st.h_pinyin.cols());
  Matrix dlogits;
  if (grads && sw.pre) dlogits = Matrix::Zero(st.char_logits.rows(), st.char_logits.cols());

  std::optional<TeacherTrace> tt;
  Matrix dz_t, dh_t;
  if (needs_teacher(sw)) {
    tt = teacher_traced(teacher, HanziView{batch});
    dz_t = Matrix::Zero(n, 2);
    dh_t = Matrix::Zero(n, tt->h_hanzi.cols());
  }
  const bool flow_to_teacher = !cfg.stop_teacher_gradient && frozen.empty();

  for (Eigen::Index i = 0; i < n; ++i) {
    const Example& ex = batch[static_cast<std::size_t>(i)];
    const RowVector logp_s = log_softmax(st.z_pinyin.row(i));
    const RowVector p_s = logp_s.array().exp().matrix();
    sums.l_pinyin += -logp_s(ex.label);
    if (grads) {
      dz_s.row(i) += p_s * scale;
      dz_s(i, ex.label) -= scale;
    }

    if (sw.pre && !ex.char_targets.empty()) {
      const Eigen::Index first = st.logit_starts[static_cast<std::size_t>(i)];
      const Eigen::Index k = std::min<Eigen::Index>(st.logit_starts[static_cast<std::size_t>(i) + 1] - first,
                                                    static_cast<Eigen::Index>(ex.char_targets.size()));
      for (Eigen::Index j = 0; j < k; ++j) {
        const int target = ex.char_targets[static_cast<std::size_t>(j)];
        const RowVector lp = log_softmax(st.char_logits.row(first + j));
        sums.l_pre += -lp(target);
        if (grads) {
          dlogits.row(first + j) = lp.array().exp().matrix() * scale;
          dlogits(first + j, target) -= scale;
        }
      }
    }

    if (!tt) continue;
    const std::size_t idx = static_cast<std::size_t>(i);
    const RowVector h_target = frozen.empty() ? RowVector(tt->h_hanzi.row(i)) : frozen[idx].h_hanzi;
    const RowVector z_target = frozen.empty() ? RowVector(tt->z_hanzi.row(i)) : frozen[idx].z_hanzi;

    if (sw.name) {
      const RowVector logp_t = log_softmax(tt->z_hanzi.row(i));
      sums.l_name += -logp_t(ex.label);
      if (grads) {
        dz_t.row(i) += logp_t.array().exp().matrix() * scale;
        dz_t(i, ex.label) -= scale;
      }
    }
    if (sw.feature) {
      const RowVector diff = st.h_pinyin.row(i) - h_target;
      const double dist = diff.norm();
      sums.l_feature += dist;
      if (grads && dist > 0.0) {
        dh_p.row(i) += diff * (scale / dist);
        if (flow_to_teacher) dh_t.row(i) -= diff * (scale / dist);
      }
    }
    if (sw.response) {
      const RowVector logq = log_softmax(z_target);
      const double kl = (p_s.array() * (logp_s.array() - logq.array())).sum();
      sums.l_response += std::max(0.0, kl);
      if (grads) {
        dz_s.row(i) += (p_s.array() * (logp_s.array() - logq.array() - kl)).matrix() * scale;
        if (flow_to_teacher) dz_t.row(i) += (logq.array().exp().matrix() - p_s) * scale;
      }
    }
  }

  if (!grads) return sums;

  // Student heads back into the packed encoder output.
  gs->gender_w.noalias() += st.h_pinyin.transpose() * dz_s;
  gs->gender_b.row(0) += dz_s.colwise().sum();
  dh_p.noalias() += dz_s * student.gender_w.transpose();
  gs->feat_w.noalias() += st.h0.transpose() * dh_p;
  gs->feat_b.row(0) += dh_p.colwise().sum();
  const Matrix dh0 = dh_p * student.feat_w.transpose();
  Matrix dh = Matrix::Zero(st.enc.h.rows(), st.enc.h.cols());
  for (std::size_t s = 0; s < st.enc.sequences(); ++s) dh.row(st.enc.begin(s)) = dh0.row(static_cast<Eigen::Index>(s));
  if (dlogits.size() > 0) {
    gs->char_w.noalias() += st.syllable_features.transpose() * dlogits;
    gs->char_b.row(0) += dlogits.colwise().sum();
    const Matrix dfeat = dlogits * student.char_w.transpose();
    for (std::size_t r = 0; r < st.syllable_rows.size(); ++r) dh.row(st.syllable_rows[r]) += dfeat.row(static_cast<Eigen::Index>(r));
  }
  encode_backward(student.encoder, st.enc, dh, gs->encoder);

  if (tt) {
    gt->gender_w.noalias() += tt->h_hanzi.transpose() * dz_t;
    gt->gender_b.row(0) += dz_t.colwise().sum();
    dh_t.noalias() += dz_t * teacher.gender_w.transpose();
    Matrix dht = Matrix::Zero(tt->enc.h.rows(), tt->enc.h.cols());
    for (std::size_t s = 0; s < tt->enc.sequences(); ++s) dht.row(tt->enc.begin(s)) = dh_t.row(static_cast<Eigen::Index>(s));
    encode_backward(teacher.encoder, tt->enc, dht, gt->encoder);
  }
  return sums;
}

LossBreakdown finish(LossBreakdown sums, std::size_t n, const LossSwitches& sw) {
  const double inv = 1.0 / static_cast<double>(n);
  LossBreakdown out;
  out.l_pre = sw.pre ? sums.l_pre * inv : 0.0;
  out.l_name = sw.name ? sums.l_name * inv : 0.0;
  out.l_feature = sw.feature ? sums.l_feature * inv : 0.0;
  out.l_response = sw.response ? sums.l_response * inv : 0.0;
  out.l_pinyin = sums.l_pinyin * inv;
  out.total = out.l_pre + out.l_name + out.l_feature + out.l_response + out.l_pinyin;
  return out;
}

}  // namespace

LossBreakdown compute_losses(const StudentModel& student, const TeacherModel& teacher, std::span<const Example> batch,
                             const LossConfig& cfg, std::span<const TeacherOutputs> frozen_targets) {
  validate_batch(batch, cfg, frozen_targets);
  return finish(batch_loss(student, teacher, batch, cfg, frozen_targets, nullptr, nullptr), batch.size(), cfg.switches);
}

LossBreakdown compute_losses_and_gradients(const StudentModel& student, const TeacherModel& teacher,
                                           std::span<const Example> batch, const LossConfig& cfg,
                                           StudentModel& student_grad, TeacherModel& teacher_grad) {
  validate_batch(batch, cfg, {});
  return finish(batch_loss(student, teacher, batch, cfg, {}, &student_grad, &teacher_grad), batch.size(),
                cfg.switches);
}

// ---------------------------------------------------------------------------
// Data preparation and inference

ModelBundle init_bundle(const std::vector<NameRecord>& train, const SyllableLexicon& lex, const TrainConfig& cfg) {
  if (cfg.d <= 0 || cfg.batch_size <= 0 || cfg.max_len <= 0) throw InvalidInput("d, batch size and max_len must be positive");
  if (cfg.tokenizer == TokenMode::HanziChar) throw InvalidInput("the student tokenizer must be syllable or letter");
  ModelBundle b;
  b.tokenizer = cfg.tokenizer;
  b.max_len = cfg.positions() - 1;
  b.pinyin_vocab = build_vocab(train, cfg.tokenizer, lex, cfg.min_count);
  const bool any_hanzi = std::any_of(train.begin(), train.end(), [](const auto& r) { return r.hanzi.has_value(); });
  b.hanzi_vocab = any_hanzi ? build_vocab(train, TokenMode::HanziChar, lex, cfg.min_count) : Vocab();
  Rng rng(cfg.seed);
  b.student = StudentModel::init(b.pinyin_vocab.size(), b.hanzi_vocab.size(), cfg.d, cfg.positions(), rng);
  b.teacher = TeacherModel::init(b.hanzi_vocab.size(), cfg.d, static_cast<int>(kMaxHanziLength) + 1, rng);
  return b;
}

namespace {

std::vector<int> to_ids(const Vocab& vocab, const std::vector<std::string>& tokens, std::size_t max_len) {
  std::vector<int> ids{Vocab::kAgg};
  for (std::size_t i = 0; i < tokens.size() && i < max_len; ++i) ids.push_back(vocab.id(tokens[i]));
  return ids;
}

}  // namespace

std::vector<Example> make_examples(const std::vector<NameRecord>& records, const ModelBundle& bundle,
                                   const SyllableLexicon& lex) {
  const auto max_len = static_cast<std::size_t>(bundle.max_len);
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    Example ex;
    ex.label = label_of(r.gender);
    std::vector<std::string> tokens;
    bool aligned = false;
    if (bundle.tokenizer == TokenMode::Syllable) {
      tokens = record_syllables(r, lex);
      aligned = !tokens.empty() && r.hanzi && tokens.size() == r.hanzi->size();
      if (tokens.empty()) tokens = letter_tokens(r.pinyin);
    } else {
      tokens = letter_tokens(r.pinyin);
    }
    ex.pinyin_tokens = to_ids(bundle.pinyin_vocab, tokens, max_len);
    if (r.hanzi) {
      ex.has_hanzi = true;
      ex.hanzi_tokens = to_ids(bundle.hanzi_vocab, *r.hanzi, kMaxHanziLength);
      if (aligned) {
        for (std::size_t i = 0; i < r.hanzi->size() && i < max_len; ++i) {
          ex.char_targets.push_back(bundle.hanzi_vocab.id((*r.hanzi)[i]));
        }
      }
    } else {
      ex.hanzi_tokens = {Vocab::kAgg};
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<int> inference_tokens(const ModelBundle& bundle, std::string_view pinyin, const SyllableLexicon& lex) {
  if (!is_lower_letters(pinyin)) throw InvalidInput("pinyin must be non-empty lowercase letters: '" + std::string(pinyin) + "'");
  std::vector<std::string> tokens;
  if (bundle.tokenizer == TokenMode::Syllable) {
    if (auto seg = canonical_segment(pinyin, lex)) tokens = std::move(seg->parts);
  }
  if (tokens.empty()) tokens = letter_tokens(pinyin);
  return to_ids(bundle.pinyin_vocab, tokens, static_cast<std::size_t>(bundle.max_len));
}

namespace {

GenderGuess guess_from_logits(const RowVector& z) {
  const RowVector p = softmax(z);
  return {p(1) > p(0) ? Gender::Female : Gender::Male, p(1)};
}

}  // namespace

GenderGuess predict_gender(const ModelBundle& bundle, std::string_view pinyin, const SyllableLexicon& lex) {
  if (pinyin.empty()) throw InvalidInput("empty pinyin name");
  return guess_from_logits(forward_student(bundle.student, inference_tokens(bundle, pinyin, lex)).z_pinyin);
}

GenderGuess predict_gender_from_hanzi(const ModelBundle& bundle, const std::vector<std::string>& hanzi) {
  if (hanzi.empty()) throw InvalidInput("empty hanzi name");
  return guess_from_logits(forward_teacher(bundle.teacher, to_ids(bundle.hanzi_vocab, hanzi, kMaxHanziLength)).z_hanzi);
}

std::vector<GenderGuess> predict_genders(const ModelBundle& bundle, const std::vector<std::string>& names,
                                         const SyllableLexicon& lex) {
  constexpr std::size_t kChunk = 512;
  std::vector<GenderGuess> out;
  out.reserve(names.size());
  std::vector<std::vector<int>> tokens;
  for (std::size_t start = 0; start < names.size(); start += kChunk) {
    tokens.clear();
    for (std::size_t i = start; i < std::min(names.size(), start + kChunk); ++i) {
      if (names[i].empty()) throw InvalidInput("empty pinyin name");
      tokens.push_back(inference_tokens(bundle, names[i], lex));
    }
    const StudentTrace t = student_traced(bundle.student, tokens);
    for (Eigen::Index i = 0; i < t.z_pinyin.rows(); ++i) out.push_back(guess_from_logits(t.z_pinyin.row(i)));
  }
  return out;
}

double accuracy(const ModelBundle& bundle, const std::vector<NameRecord>& records, const SyllableLexicon& lex) {
  if (records.empty()) return 0.0;
  std::vector<std::string> names;
  names.reserve(records.size());
  for (const auto& r : records) names.push_back(r.pinyin);
  const auto guesses = predict_genders(bundle, names, lex);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < records.size(); ++i) correct += guesses[i].label == records[i].gender;
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

// ---------------------------------------------------------------------------
// Training

namespace {

template <typename Model>
class Adam {
 public:
  Adam(const Model& shape, const TrainConfig& cfg) : m_(zeros_like(shape)), v_(zeros_like(shape)), cfg_(cfg) {}

  void step(Model& params, Model& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
    std::vector<Matrix*> p, g, m, v;
    Model::visit(params, [&](const std::string&, Matrix& x) { p.push_back(&x); });
    Model::visit(grads, [&](const std::string&, Matrix& x) { g.push_back(&x); });
    Model::visit(m_, [&](const std::string&, Matrix& x) { m.push_back(&x); });
    Model::visit(v_, [&](const std::string&, Matrix& x) { v.push_back(&x); });
    for (std::size_t i = 0; i < p.size(); ++i) {
      auto ga = g[i]->array();
      m[i]->array() = cfg_.beta1 * m[i]->array() + (1.0 - cfg_.beta1) * ga;
      v[i]->array() = cfg_.beta2 * v[i]->array() + (1.0 - cfg_.beta2) * ga.square();
      p[i]->array() -= cfg_.learning_rate * (m[i]->array() / c1) / ((v[i]->array() / c2).sqrt() + cfg_.adam_epsilon);
    }
  }

 private:
  Model m_, v_;
  TrainConfig cfg_;
  int t_ = 0;
};

template <typename Model>
void set_zero(Model& m) {
  Model::visit(m, [](const std::string&, Matrix& x) { x.setZero(); });
}

bool finite(const LossBreakdown& l) {
  return std::isfinite(l.l_pre) && std::isfinite(l.l_name) && std::isfinite(l.l_feature) &&
         std::isfinite(l.l_response) && std::isfinite(l.l_pinyin) && std::isfinite(l.total);
}

}  // namespace

TrainResult train(ModelBundle bundle, const std::vector<NameRecord>& train_records,
                  const std::vector<NameRecord>& validation_records, const SyllableLexicon& lex,
                  const TrainConfig& cfg, const std::function<void(const EpochTrace&)>& on_epoch) {
  if (train_records.empty()) throw InvalidInput("no training records");
  if (cfg.batch_size <= 0) throw InvalidInput("batch size must be positive");
  const std::vector<Example> examples = make_examples(train_records, bundle, lex);
  const auto& selection = validation_records.empty() ? train_records : validation_records;
  const LossConfig loss_cfg = cfg.loss_config();

  Adam<StudentModel> student_opt(bundle.student, cfg);
  Adam<TeacherModel> teacher_opt(bundle.teacher, cfg);
  StudentModel gs = zeros_like(bundle.student);
  TeacherModel gt = zeros_like(bundle.teacher);
  Rng rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);

  TrainResult result;
  result.best = bundle;
  result.best_val_acc = -1.0;
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Example> batch;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    LossBreakdown epoch_sum;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(examples[order[i]]);
      set_zero(gs);
      set_zero(gt);
      const LossBreakdown l = compute_losses_and_gradients(bundle.student, bundle.teacher, batch, loss_cfg, gs, gt);
      if (!finite(l)) {
        throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                               std::to_string(start) + " (total=" + std::to_string(l.total) + ")");
      }
      const auto w = static_cast<double>(end - start);
      epoch_sum.l_pre += l.l_pre * w;
      epoch_sum.l_name += l.l_name * w;
      epoch_sum.l_feature += l.l_feature * w;
      epoch_sum.l_response += l.l_response * w;
      epoch_sum.l_pinyin += l.l_pinyin * w;
      student_opt.step(bundle.student, gs);
      teacher_opt.step(bundle.teacher, gt);
    }
    EpochTrace tr;
    tr.epoch = epoch;
    const double inv = 1.0 / static_cast<double>(examples.size());
    tr.loss.l_pre = epoch_sum.l_pre * inv;
    tr.loss.l_name = epoch_sum.l_name * inv;
    tr.loss.l_feature = epoch_sum.l_feature * inv;
    tr.loss.l_response = epoch_sum.l_response * inv;
    tr.loss.l_pinyin = epoch_sum.l_pinyin * inv;
    tr.loss.total = tr.loss.l_pre + tr.loss.l_name + tr.loss.l_feature + tr.loss.l_response + tr.loss.l_pinyin;
    tr.val_acc = accuracy(bundle, selection, lex);
    if (tr.val_acc > result.best_val_acc) {
      result.best_val_acc = tr.val_acc;
      result.best_epoch = epoch;
      result.best = bundle;
    }
    result.trace.push_back(tr);
    if (on_epoch) on_epoch(tr);
  }
  if (cfg.epochs <= 0) result.best_val_acc = accuracy(bundle, selection, lex);
  return result;
}

void write_trace_csv(std::ostream& out, const std::vector<EpochTrace>& trace) {
  out << "epoch,l_pre,l_name,l_feature,l_response,l_pinyin,total,val_acc\n";
  out << std::setprecision(10);
  for (const auto& t : trace) {
    out << t.epoch << ',' << t.loss.l_pre << ',' << t.loss.l_name << ',' << t.loss.l_feature << ','
        << t.loss.l_response << ',' << t.loss.l_pinyin << ',' << t.loss.total << ',' << t.val_acc << '\n';
  }
}

// ---------------------------------------------------------------------------
// Gradient verification

GradientCheckResult gradient_check(const StudentModel& student, const TeacherModel& teacher,
                                   std::span<const Example> batch, const LossConfig& cfg, double eps,
                                   std::size_t min_coordinates, std::uint64_t seed) {
  StudentModel s = student;
  TeacherModel t = teacher;
  StudentModel gs = zeros_like(s);
  TeacherModel gt = zeros_like(t);
  compute_losses_and_gradients(s, t, batch, cfg, gs, gt);

  std::vector<TeacherOutputs> frozen;
  if (cfg.stop_teacher_gradient) {
    for (const auto& ex : batch) {
      frozen.push_back(ex.has_hanzi ? forward_teacher(t, ex.hanzi_tokens)
                                    : TeacherOutputs{RowVector::Zero(t.encoder.dim()), RowVector::Zero(2)});
    }
  }

  struct Tensor {
    std::string name;
    Matrix* param;
    const Matrix* grad;
  };
  std::vector<Tensor> tensors;
  {
    std::vector<const Matrix*> grads;
    StudentModel::visit(gs, [&](const std::string&, Matrix& g) { grads.push_back(&g); });
    TeacherModel::visit(gt, [&](const std::string&, Matrix& g) { grads.push_back(&g); });
    std::size_t i = 0;
    StudentModel::visit(s, [&](const std::string& n, Matrix& p) { tensors.push_back({n, &p, grads[i++]}); });
    TeacherModel::visit(t, [&](const std::string& n, Matrix& p) { tensors.push_back({n, &p, grads[i++]}); });
  }

  // Every tensor contributes some coordinates; the rest are uniform overall.
  Rng rng(seed);
  std::set<std::pair<std::size_t, Eigen::Index>> coords;
  std::vector<Eigen::Index> offsets{0};
  for (const auto& tn : tensors) offsets.push_back(offsets.back() + tn.param->size());
  const auto total = static_cast<std::uint64_t>(offsets.back());
  for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
    const auto size = static_cast<std::uint64_t>(tensors[ti].param->size());
    for (std::size_t k = 0; k < std::min<std::uint64_t>(size, 16); ++k) {
      coords.insert({ti, static_cast<Eigen::Index>(rng.below(size))});
    }
  }
  const std::size_t want = std::min<std::uint64_t>(min_coordinates, total);
  while (coords.size() < want) {
    const auto flat = static_cast<Eigen::Index>(rng.below(total));
    const auto ti = static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin() - 1);
    coords.insert({ti, flat - offsets[ti]});
  }

  GradientCheckResult result;
  for (const auto& [ti, idx] : coords) {
    double& x = tensors[ti].param->data()[idx];
    const double orig = x;
    x = orig + eps;
    const double plus = compute_losses(s, t, batch, cfg, frozen).total;
    x = orig - eps;
    const double minus = compute_losses(s, t, batch, cfg, frozen).total;
    x = orig;
    const double numeric = (plus - minus) / (2.0 * eps);
    const double analytic = tensors[ti].grad->data()[idx];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic - numeric) / denom;
    if (rel > result.max_relative_error || result.worst_parameter.empty()) {
      if (rel >= result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = tensors[ti].name + "[" + std::to_string(idx) + "]";
      }
    }
    ++result.coordinates;
  }
  return result;
}

}  // namespace pgn
