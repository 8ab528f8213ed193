// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pgn/corpus.hpp"
#include "pgn/lexicon.hpp"
#include "pgn/rng.hpp"

namespace pgn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

/// One transformer block: token + position embeddings, single-head masked
/// self-attention and a GELU feed-forward layer, each followed by a residual
/// connection and layer normalization. Vectors are stored as 1xN matrices.
struct EncoderParams {
  Matrix tok_emb;   // V x d
  Matrix pos_emb;   // max_positions x d
  Matrix wq, wk, wv, wo;  // d x d
  Matrix w1, b1;    // d x 4d, 1 x 4d
  Matrix w2, b2;    // 4d x d, 1 x d
  Matrix ln1_gain, ln1_bias, ln2_gain, ln2_bias;  // 1 x d

  static EncoderParams init(int vocab, int d, int max_positions, Rng& rng);
  int dim() const { return static_cast<int>(wq.rows()); }
  int max_positions() const { return static_cast<int>(pos_emb.rows()); }
  int vocab_size() const { return static_cast<int>(tok_emb.rows()); }

  template <typename Self, typename F>
  static void visit(Self& self, std::string_view prefix, F&& f) {
    const std::string p(prefix);
    f(p + "tok_emb", self.tok_emb);
    f(p + "pos_emb", self.pos_emb);
    f(p + "wq", self.wq);
    f(p + "wk", self.wk);
    f(p + "wv", self.wv);
    f(p + "wo", self.wo);
    f(p + "w1", self.w1);
    f(p + "b1", self.b1);
    f(p + "w2", self.w2);
    f(p + "b2", self.b2);
    f(p + "ln1_gain", self.ln1_gain);
    f(p + "ln1_bias", self.ln1_bias);
    f(p + "ln2_gain", self.ln2_gain);
    f(p + "ln2_bias", self.ln2_bias);
  }
};

/// Pinyin-side model: shared encoder, character prediction head, feature
/// projection and gender head on top of the projected feature.
struct StudentModel {
  EncoderParams encoder;
  Matrix char_w, char_b;      // d x |V_hanzi|, 1 x |V_hanzi|
  Matrix feat_w, feat_b;      // d x d, 1 x d
  Matrix gender_w, gender_b;  // d x 2, 1 x 2

  static StudentModel init(int pinyin_vocab, int hanzi_vocab, int d, int max_positions, Rng& rng);

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    EncoderParams::visit(self.encoder, "student.encoder.", f);
    f("student.char_w", self.char_w);
    f("student.char_b", self.char_b);
    f("student.feat_w", self.feat_w);
    f("student.feat_b", self.feat_b);
    f("student.gender_w", self.gender_w);
    f("student.gender_b", self.gender_b);
  }
};

/// Hanzi-side model: its own encoder and a gender head on the aggregate feature.
struct TeacherModel {
  EncoderParams encoder;
  Matrix gender_w, gender_b;  // d x 2, 1 x 2

  static TeacherModel init(int hanzi_vocab, int d, int max_positions, Rng& rng);

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    EncoderParams::visit(self.encoder, "teacher.encoder.", f);
    f("teacher.gender_w", self.gender_w);
    f("teacher.gender_b", self.gender_b);
  }
};

/// Same shapes as `m`, all zeros.
template <typename Model>
Model zeros_like(const Model& m) {
  Model z = m;
  Model::visit(z, [](const std::string&, Matrix& t) { t.setZero(); });
  return z;
}

/// Sequence positions available to the encoder: the aggregate slot plus
/// max_len tokens.
struct ModelDims {
  int d = 64;
  int max_len = 3;
};

/// Runs the encoder over `tokens` (aggregate token first, PAD entries are
/// masked out of attention). Returns one row per position; PAD rows are zero.
/// Throws InvalidInput on out-of-range ids or an over-long sequence.
Matrix encode(const EncoderParams& params, std::span<const int> tokens);

RowVector softmax(const RowVector& z);
/// KL(p || q) for strictly positive distributions.
double kl_divergence(const RowVector& p, const RowVector& q);

struct StudentOutputs {
  RowVector h_pinyin;   // 1 x d
  RowVector z_pinyin;   // 1 x 2
  Matrix char_logits;   // k x |V_hanzi|, one row per syllable position
};

struct TeacherOutputs {
  RowVector h_hanzi;  // 1 x d
  RowVector z_hanzi;  // 1 x 2
};

StudentOutputs forward_student(const StudentModel& m, std::span<const int> tokens);
TeacherOutputs forward_teacher(const TeacherModel& m, std::span<const int> tokens);

/// A record turned into vocabulary ids.
struct Example {
  std::vector<int> pinyin_tokens;  // aggregate token first
  std::vector<int> hanzi_tokens;   // aggregate token first; just {AGG} without hanzi
  std::vector<int> char_targets;   // one hanzi id per pinyin position, empty if unaligned
  int label = 0;                   // 1 = female
  bool has_hanzi = false;
};

struct LossSwitches {
  bool pre = true;
  bool name = true;
  bool feature = true;
  bool response = true;

  static LossSwitches full() { return {}; }
  /// Response-based distillation removed.
  static LossSwitches without_logits() { return {true, true, true, false}; }
  /// Both distillation terms removed.
  static LossSwitches without_logits_and_feature() { return {true, true, false, false}; }
  /// Teacher and character prediction removed: pinyin gender loss only.
  static LossSwitches without_distill_and_namepre() { return {false, false, false, false}; }
};

struct LossConfig {
  LossSwitches switches;
  /// Teacher outputs enter the distillation terms as constants.
  bool stop_teacher_gradient = true;
};

struct LossBreakdown {
  double l_pre = 0.0;
  double l_name = 0.0;
  double l_feature = 0.0;
  double l_response = 0.0;
  double l_pinyin = 0.0;
  double total = 0.0;
};

/// Mean-over-batch losses. When `frozen_targets` is non-empty it supplies
/// the teacher outputs used by the feature and response terms (one per
/// example); otherwise the teacher's current outputs are used.
/// Throws InvalidInput if a term needing hanzi is enabled and an example
/// has none, or the batch is empty.
LossBreakdown compute_losses(const StudentModel& student, const TeacherModel& teacher, std::span<const Example> batch,
                             const LossConfig& cfg, std::span<const TeacherOutputs> frozen_targets = {});

/// As compute_losses, and adds d(total)/d(params) into the gradient models.
LossBreakdown compute_losses_and_gradients(const StudentModel& student, const TeacherModel& teacher,
                                           std::span<const Example> batch, const LossConfig& cfg,
                                           StudentModel& student_grad, TeacherModel& teacher_grad);

struct TrainConfig {
  int d = 64;
  int max_len = 3;         // syllable positions
  int letter_max_len = 24; // positions in letter mode
  int batch_size = 128;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int epochs = 30;
  std::uint64_t seed = 1;
  LossSwitches switches;
  bool stop_teacher_gradient = true;
  TokenMode tokenizer = TokenMode::Syllable;
  std::size_t min_count = 1;

  int positions() const { return (tokenizer == TokenMode::Letter ? letter_max_len : max_len) + 1; }
  LossConfig loss_config() const { return {switches, stop_teacher_gradient}; }
};

/// Everything needed for inference and for resuming: vocabularies, model
/// dimensions and both parameter sets.
struct ModelBundle {
  TokenMode tokenizer = TokenMode::Syllable;
  int max_len = 3;
  Vocab pinyin_vocab;
  Vocab hanzi_vocab;
  StudentModel student;
  TeacherModel teacher;

  int dim() const { return student.encoder.dim(); }
};

/// Builds vocabularies from the training records and draws initial parameters.
ModelBundle init_bundle(const std::vector<NameRecord>& train, const SyllableLexicon& lex, const TrainConfig& cfg);

/// Converts records to ids. Pinyin positions follow the hanzi-aligned
/// syllables (letters in letter mode or when unsegmentable), truncated to
/// the bundle's max_len.
std::vector<Example> make_examples(const std::vector<NameRecord>& records, const ModelBundle& bundle,
                                   const SyllableLexicon& lex);

/// Inference-time pinyin ids: canonical split without a count hint, letters
/// when no split exists.
std::vector<int> inference_tokens(const ModelBundle& bundle, std::string_view pinyin, const SyllableLexicon& lex);

struct GenderGuess {
  Gender label = Gender::Male;
  double probability_female = 0.5;
};

/// Student-only prediction; never abstains. Throws InvalidInput on empty or
/// non-letter input.
GenderGuess predict_gender(const ModelBundle& bundle, std::string_view pinyin, const SyllableLexicon& lex);

/// Batched predict_gender. Results agree with the one-at-a-time path up to
/// floating-point rounding.
std::vector<GenderGuess> predict_genders(const ModelBundle& bundle, const std::vector<std::string>& names,
                                         const SyllableLexicon& lex);

/// Teacher prediction from hanzi characters (used by the conversion baseline).
GenderGuess predict_gender_from_hanzi(const ModelBundle& bundle, const std::vector<std::string>& hanzi);

double accuracy(const ModelBundle& bundle, const std::vector<NameRecord>& records, const SyllableLexicon& lex);

struct EpochTrace {
  int epoch = 0;
  LossBreakdown loss;  // mean over the epoch's examples
  double val_acc = 0.0;
};

struct TrainResult {
  ModelBundle best;  // parameters at the best validation accuracy
  std::vector<EpochTrace> trace;
  int best_epoch = 0;
  double best_val_acc = 0.0;
};

/// Adam over the total loss, both models updated each step, examples
/// reshuffled each epoch from the seed. Throws TrainingDiverged on a
/// non-finite loss.
TrainResult train(ModelBundle bundle, const std::vector<NameRecord>& train_records,
                  const std::vector<NameRecord>& validation_records, const SyllableLexicon& lex,
                  const TrainConfig& cfg, const std::function<void(const EpochTrace&)>& on_epoch = {});

void write_trace_csv(std::ostream& out, const std::vector<EpochTrace>& trace);

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst_parameter;
};

/// Compares analytic gradients of the total loss with central differences
/// on a seeded sample of at least `min_coordinates` coordinates (every
/// tensor is sampled). With stop_teacher_gradient the reference objective
/// holds teacher targets fixed at their unperturbed values.
GradientCheckResult gradient_check(const StudentModel& student, const TeacherModel& teacher,
                                   std::span<const Example> batch, const LossConfig& cfg, double eps = 1e-4,
                                   std::size_t min_coordinates = 1000, std::uint64_t seed = 0);

}  // namespace pgn
