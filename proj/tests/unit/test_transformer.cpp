#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>

#include "doctest.h"
#include "json.hpp"
#include "unit/fixtures.hpp"
#include "sentmask/error.hpp"
#include "sentmask/transformer.hpp"

using namespace sentmask;
using fixtures::grid_doc;

namespace {

EncoderConfig tiny_transformer() {
  EncoderConfig c;
  c.backend = "transformer";
  c.hidden = 8;
  c.heads = 2;
  c.layers = 1;
  c.ff_dim = 12;
  return c;
}

Matrix random_matrix(ad::Index r, ad::Index c, Rng& rng) {
  Matrix m(r, c);
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  return m;
}

using Scalar = std::function<Var(Tape&, std::vector<Var>&)>;

double gradient_error(std::vector<Parameter>& inputs, const Scalar& f) {
  for (auto& p : inputs) p.zero_grad();
  {
    Tape tape;
    std::vector<Var> vars;
    for (auto& p : inputs) vars.push_back(tape.param(p));
    tape.backward(f(tape, vars));
  }
  auto eval = [&] {
    Tape tape(false);
    std::vector<Var> vars;
    for (auto& p : inputs) vars.push_back(tape.param(p));
    return f(tape, vars).value()(0, 0);
  };
  double worst = 0.0;
  const double h = 1e-6;
  for (auto& p : inputs) {
    for (ad::Index i = 0; i < p.value.size(); ++i) {
      const double saved = p.value.data()[i];
      p.value.data()[i] = saved + h;
      const double up = eval();
      p.value.data()[i] = saved - h;
      const double down = eval();
      p.value.data()[i] = saved;
      const double fd = (up - down) / (2 * h);
      const double an = p.grad.data()[i];
      worst = std::max(worst, std::abs(fd - an) / std::max(1.0, std::abs(fd) + std::abs(an)));
    }
  }
  return worst;
}

Var weighted(Tape& tape, Var v) {
  Matrix w(v.rows(), v.cols());
  for (ad::Index i = 0; i < w.size(); ++i) w.data()[i] = 0.3 + 0.17 * static_cast<double>(i % 7);
  return ad::sum(ad::mul(v, tape.constant(w)));
}

void put_le32(std::string& out, float v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

// Minimal safetensors writer: F32 tensors, 8-byte little-endian header length.
void write_safetensors(const std::string& path, const std::vector<std::pair<std::string, Matrix>>& tensors,
                       bool as_vector_for_rows = true) {
  nlohmann::json header = nlohmann::json::object();
  std::string blob;
  for (const auto& [name, m] : tensors) {
    const auto begin = blob.size();
    for (ad::Index i = 0; i < m.rows(); ++i) {
      for (ad::Index j = 0; j < m.cols(); ++j) put_le32(blob, static_cast<float>(m(i, j)));
    }
    nlohmann::json shape = m.rows() == 1 && as_vector_for_rows ? nlohmann::json::array({m.cols()})
                                                               : nlohmann::json::array({m.rows(), m.cols()});
    header[name] = {{"dtype", "F32"}, {"shape", shape}, {"data_offsets", {begin, blob.size()}}};
  }
  header["__metadata__"] = {{"format", "pt"}};
  const std::string h = header.dump();
  std::string out;
  std::uint64_t len = h.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  out += h;
  out += blob;
  fixtures::write_text(path, out);
}

Parameter* find(std::vector<Parameter*> ps, const std::string& name) {
  for (auto* p : ps) {
    if (p->name == name) return p;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("transformer sentence vectors: width and invalid rows") {
  Rng rng(2);
  TransformerEncoder enc(tiny_transformer(), 30, rng);
  CHECK(enc.dim() == 8);
  const auto doc = grid_doc("d", 4, 5, {3, 0, 5, 1}, 30);
  const auto e = encode_sentences(doc, enc);
  REQUIRE(e.vectors.rows() == 4);
  REQUIRE(e.vectors.cols() == 8);
  CHECK(e.vectors.row(1).isZero());
  CHECK_FALSE(e.vectors.row(0).isZero());
  CHECK(e.vectors.allFinite());
  // Sentences are encoded independently of their neighbours.
  const auto alone = grid_doc("d", 4, 5, {3, 0, 0, 0}, 30);
  const auto e2 = encode_sentences(alone, enc);
  CHECK((e2.vectors.row(0) - e.vectors.row(0)).cwiseAbs().maxCoeff() < 1e-12);

  EncoderConfig bad = tiny_transformer();
  bad.heads = 3;
  Rng r2(2);
  CHECK_THROWS_AS(TransformerEncoder(bad, 30, r2), Error);
}

TEST_CASE("layer_norm and gelu gradients") {
  Rng rng(6);
  std::vector<Parameter> in{Parameter("x", random_matrix(3, 5, rng)), Parameter("g", random_matrix(1, 5, rng)),
                            Parameter("b", random_matrix(1, 5, rng))};
  CHECK(gradient_error(in, [](Tape& t, std::vector<Var>& v) {
          return weighted(t, ad::layer_norm(v[0], v[1], v[2], 1e-5));
        }) < 1e-7);
  std::vector<Parameter> x{Parameter("x", random_matrix(2, 6, rng) * 3.0)};
  CHECK(gradient_error(x, [](Tape& t, std::vector<Var>& v) { return weighted(t, ad::gelu(v[0])); }) < 1e-7);

  // Unit gain, zero shift: every row has mean 0 and variance 1.
  Tape tape(false);
  const Matrix m = random_matrix(3, 5, rng);
  const Matrix out = ad::layer_norm(tape.constant(m), tape.constant(Matrix::Ones(1, 5)),
                                    tape.constant(Matrix::Zero(1, 5)), 0.0)
                         .value();
  for (ad::Index i = 0; i < 3; ++i) {
    CHECK(std::abs(out.row(i).mean()) < 1e-12);
    CHECK(out.row(i).squaredNorm() / 5 == doctest::Approx(1.0));
  }
  const Matrix g = ad::gelu(tape.constant(Matrix::Constant(1, 1, 1.0))).value();
  const double c = std::sqrt(2.0 / M_PI);
  CHECK(g(0, 0) == doctest::Approx(0.5 * (1 + std::tanh(c * (1 + 0.044715)))));
}

TEST_CASE("block attention matches a direct computation and its gradient") {
  Rng rng(8);
  const int block = 3, heads = 2, D = 4;
  const std::vector<std::uint8_t> valid{1, 1, 0, 1, 0, 1};
  const Matrix q = random_matrix(6, D, rng), k = random_matrix(6, D, rng), v = random_matrix(6, D, rng);
  Tape tape(false);
  const Matrix got = ad::block_attention(tape.constant(q), tape.constant(k), tape.constant(v), block, heads, valid).value();
  const int hd = D / heads;
  for (int b = 0; b < 2; ++b) {
    for (int h = 0; h < heads; ++h) {
      for (int i = 0; i < block; ++i) {
        const int row = b * block + i;
        std::vector<double> w(block, 0.0);
        double mx = -1e300, z = 0;
        for (int j = 0; j < block; ++j) {
          if (!valid[b * block + j]) continue;
          double s = 0;
          for (int c = 0; c < hd; ++c) s += q(row, h * hd + c) * k(b * block + j, h * hd + c);
          w[j] = s / std::sqrt(static_cast<double>(hd));
          mx = std::max(mx, w[j]);
        }
        for (int j = 0; j < block; ++j) {
          w[j] = valid[b * block + j] ? std::exp(w[j] - mx) : 0.0;
          z += w[j];
        }
        for (int c = 0; c < hd; ++c) {
          double o = 0;
          for (int j = 0; j < block; ++j) o += w[j] / z * v(b * block + j, h * hd + c);
          CHECK(got(row, h * hd + c) == doctest::Approx(o).epsilon(1e-12));
        }
      }
    }
  }
  std::vector<Parameter> in{Parameter("q", q), Parameter("k", k), Parameter("v", v)};
  CHECK(gradient_error(in, [&](Tape& t, std::vector<Var>& vs) {
          return weighted(t, ad::block_attention(vs[0], vs[1], vs[2], block, heads, valid));
        }) < 1e-7);
}

TEST_CASE("encoder gradient flows to every parameter") {
  Rng rng(4);
  TransformerEncoder enc(tiny_transformer(), 20, rng);
  const auto doc = grid_doc("d", 3, 4, {2, 4, 1}, 20);
  for (auto* p : enc.parameters()) p->zero_grad();
  Tape tape;
  const auto batch = DocBatch::of(doc);
  tape.backward(weighted(tape, enc.encode(tape, batch)));
  for (auto* p : enc.parameters()) {
    if (p->name == "encoder.tokens" || p->name == "encoder.positions") continue;  // only used rows move
    INFO(p->name);
    CHECK(p->grad.cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("safetensors weights load under BERT names") {
  Rng rng(5);
  const auto cfg = tiny_transformer();
  TransformerEncoder enc(cfg, 30, rng);
  const auto params = enc.parameters();

  Rng src(11);
  const Matrix words = random_matrix(40, 8, src);  // larger vocab: prefix rows are used
  const Matrix pos = random_matrix(512, 8, src);
  const Matrix seg = random_matrix(2, 8, src);
  const Matrix q_torch = random_matrix(8, 8, src);  // out x in
  const Matrix q_bias = random_matrix(1, 8, src);
  const Matrix ff_in_torch = random_matrix(12, 8, src);
  const Matrix ln = random_matrix(1, 8, src);

  fixtures::TempDir dir;
  write_safetensors(dir.file("m.safetensors"),
                    {{"bert.embeddings.word_embeddings.weight", words},
                     {"bert.embeddings.position_embeddings.weight", pos},
                     {"bert.embeddings.token_type_embeddings.weight", seg},
                     {"bert.embeddings.LayerNorm.weight", ln},
                     {"bert.encoder.layer.0.attention.self.query.weight", q_torch},
                     {"bert.encoder.layer.0.attention.self.query.bias", q_bias},
                     {"bert.encoder.layer.0.intermediate.dense.weight", ff_in_torch},
                     {"cls.predictions.bias", Matrix::Zero(1, 3)}});
  CHECK(enc.load_safetensors(dir.file("m.safetensors")) == 7);

  auto near = [](const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a - b).cwiseAbs().maxCoeff() < 1e-6;
  };
  CHECK(near(find(params, "encoder.tokens")->value, words.topRows(30)));
  CHECK(near(find(params, "encoder.positions")->value, pos.rowwise() + seg.row(0)));
  CHECK(near(find(params, "encoder.emb_norm.gain")->value, ln));
  CHECK(near(find(params, "encoder.layer0.query.weight")->value, q_torch.transpose()));
  CHECK(near(find(params, "encoder.layer0.query.bias")->value, q_bias));
  CHECK(near(find(params, "encoder.layer0.ff_in.weight")->value, ff_in_torch.transpose()));

  write_safetensors(dir.file("bad.safetensors"), {{"embeddings.LayerNorm.weight", Matrix::Zero(1, 5)}});
  CHECK_THROWS_AS(enc.load_safetensors(dir.file("bad.safetensors")), Error);
  fixtures::write_text(dir.file("junk.safetensors"), "\xff\xff");
  CHECK_THROWS_AS(enc.load_safetensors(dir.file("junk.safetensors")), Error);
  CHECK_THROWS_AS(enc.load_safetensors(dir.file("none.safetensors")), Error);
}
