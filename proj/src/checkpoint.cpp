// SPDX-License-Identifier: Apache-2.0
#include "pgn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pgn/error.hpp"

namespace pgn {

namespace {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void u32(std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out_.write(b, 4);
  }

  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    out_.write(b, 8);
  }

  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

  void tensor(const Matrix& m) {
    u32(static_cast<std::uint32_t>(m.rows()));
    u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
    }
  }

  void vocab(const Vocab& v) {
    const auto data = v.data_tokens();
    u32(static_cast<std::uint32_t>(data.size()));
    for (const auto& t : data) str(t);
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw CheckpointError("checkpoint is truncated");
  }

  std::uint32_t u32() {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }

  double f64() {
    unsigned char b[8];
    bytes(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(v);
  }

  std::string str() {
    const std::uint32_t n = u32();
    if (n > (1u << 20)) throw CheckpointError("implausible string length in checkpoint");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

  Matrix tensor(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    const auto r = static_cast<Eigen::Index>(u32());
    const auto c = static_cast<Eigen::Index>(u32());
    if (r != rows || c != cols) {
      throw CheckpointError("tensor " + name + " has shape " + std::to_string(r) + "x" + std::to_string(c) +
                            ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = f64();
    }
    return m;
  }

  Vocab vocab() {
    const std::uint32_t n = u32();
    if (n > (1u << 24)) throw CheckpointError("implausible vocabulary size in checkpoint");
    std::vector<std::string> tokens;
    tokens.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) tokens.push_back(str());
    try {
      return Vocab(tokens);
    } catch (const InvalidInput& e) {
      throw CheckpointError(std::string("bad vocabulary in checkpoint: ") + e.what());
    }
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& in_;
};

}  // namespace

void save_checkpoint(std::ostream& out, const ModelBundle& bundle) {
  Writer w(out);
  out.write(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(bundle.dim()));
  w.u32(static_cast<std::uint32_t>(bundle.max_len));
  w.u32(static_cast<std::uint32_t>(bundle.tokenizer));
  w.vocab(bundle.pinyin_vocab);
  w.vocab(bundle.hanzi_vocab);
  StudentModel::visit(bundle.student, [&](const std::string&, const Matrix& m) { w.tensor(m); });
  TeacherModel::visit(bundle.teacher, [&](const std::string&, const Matrix& m) { w.tensor(m); });
  if (!out) throw IoError("failed writing checkpoint");
}

void save_checkpoint(const std::string& path, const ModelBundle& bundle) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  save_checkpoint(out, bundle);
}

ModelBundle load_checkpoint(std::istream& in, std::optional<int> expected_dim) {
  Reader r(in);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw CheckpointError("not a checkpoint (bad magic bytes)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto d = static_cast<int>(r.u32());
  const auto max_len = static_cast<int>(r.u32());
  const std::uint32_t tok = r.u32();
  if (d <= 0 || d > 4096 || max_len <= 0 || max_len > 4096) throw CheckpointError("implausible model dimensions");
  if (expected_dim && *expected_dim != d) {
    throw CheckpointError("dimension mismatch: checkpoint has d=" + std::to_string(d) + ", expected d=" +
                          std::to_string(*expected_dim));
  }
  if (tok > 1) throw CheckpointError("unknown tokenizer code " + std::to_string(tok));

  ModelBundle b;
  b.tokenizer = static_cast<TokenMode>(tok);
  b.max_len = max_len;
  b.pinyin_vocab = r.vocab();
  b.hanzi_vocab = r.vocab();

  // Shapes follow from the scalars and vocabularies; drawing a throwaway
  // init gives correctly shaped targets to read into.
  Rng rng(0);
  b.student = StudentModel::init(b.pinyin_vocab.size(), b.hanzi_vocab.size(), d, max_len + 1, rng);
  b.teacher = TeacherModel::init(b.hanzi_vocab.size(), d, static_cast<int>(kMaxHanziLength) + 1, rng);
  StudentModel::visit(b.student, [&](const std::string& n, Matrix& m) { m = r.tensor(n, m.rows(), m.cols()); });
  TeacherModel::visit(b.teacher, [&](const std::string& n, Matrix& m) { m = r.tensor(n, m.rows(), m.cols()); });
  if (!r.at_end()) throw CheckpointError("trailing bytes after checkpoint payload");
  return b;
}

ModelBundle load_checkpoint(const std::string& path, std::optional<int> expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  return load_checkpoint(in, expected_dim);
}

}  // namespace pgn
