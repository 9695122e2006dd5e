#include "sentmask/transformer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>

#include "json.hpp"
#include "sentmask/error.hpp"

namespace sentmask {

namespace ad {

Var layer_norm(Var x, Var gain, Var shift, double eps) {
  const Matrix& in = x.value();
  const auto D = in.cols();
  if (gain.rows() != 1 || gain.cols() != D || shift.rows() != 1 || shift.cols() != D) {
    throw Error(ErrorCode::kInvalidArgument, "layer_norm: gain/shift must be 1 x D");
  }
  Matrix xhat(in.rows(), D);
  Eigen::VectorXd inv_std(in.rows());
  for (Index i = 0; i < in.rows(); ++i) {
    const double mu = in.row(i).mean();
    const double var = (in.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (in.row(i).array() - mu) * inv_std(i);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() +
               shift.value().row(0).array();
  const bool grad = x.tape->needs_grad(x) || x.tape->needs_grad(gain) || x.tape->needs_grad(shift);
  return x.tape->push(std::move(out), grad,
                      [x, gain, shift, xhat, inv_std](Tape& t, const Matrix& g, const Matrix&) {
                        t.accumulate_with(gain.id, [&](Matrix& d) {
                          d += g.cwiseProduct(xhat).colwise().sum();
                        });
                        t.accumulate_with(shift.id, [&](Matrix& d) { d += g.colwise().sum(); });
                        t.accumulate_with(x.id, [&](Matrix& d) {
                          const Matrix dxhat = g.array().rowwise() * t.value(gain).row(0).array();
                          for (Index i = 0; i < dxhat.rows(); ++i) {
                            const double m1 = dxhat.row(i).mean();
                            const double m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
                            d.row(i).array() +=
                                inv_std(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
                          }
                        });
                      });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(Var x) {
  Matrix out = x.value().unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  });
  return x.tape->push(std::move(out), x.tape->needs_grad(x),
                      [x](Tape& t, const Matrix& g, const Matrix&) {
                        const Matrix& in = t.value(x);
                        t.accumulate_with(x.id, [&](Matrix& d) {
                          d += g.binaryExpr(in, [](double gi, double v) {
                            const double th = std::tanh(kGeluC * (v + kGeluA * v * v * v));
                            const double dth = (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
                            return gi * (0.5 * (1.0 + th) + 0.5 * v * dth);
                          });
                        });
                      });
}

Var block_attention(Var q, Var k, Var v, int block, int heads, const std::vector<std::uint8_t>& key_valid) {
  const Index N = q.rows();
  const Index D = q.cols();
  if (block < 1 || N % block != 0 || D % heads != 0 || k.rows() != N || v.rows() != N ||
      k.cols() != D || v.cols() != D || static_cast<Index>(key_valid.size()) != N) {
    throw Error(ErrorCode::kInvalidArgument, "block_attention: inconsistent shapes");
  }
  const Index dh = D / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Index blocks = N / block;
  std::vector<Matrix> probs(static_cast<std::size_t>(blocks * heads));
  Matrix out(N, D);
  for (Index b = 0; b < blocks; ++b) {
    for (Index h = 0; h < heads; ++h) {
      const auto qb = q.value().block(b * block, h * dh, block, dh);
      const auto kb = k.value().block(b * block, h * dh, block, dh);
      const auto vb = v.value().block(b * block, h * dh, block, dh);
      Matrix s = (qb * kb.transpose()) * scale;
      for (Index c = 0; c < block; ++c) {
        if (!key_valid[b * block + c]) s.col(c).setConstant(-std::numeric_limits<double>::infinity());
      }
      Matrix p = softmax_rows(s);
      out.block(b * block, h * dh, block, dh) = p * vb;
      probs[b * heads + h] = std::move(p);
    }
  }
  const bool grad = q.tape->needs_grad(q) || q.tape->needs_grad(k) || q.tape->needs_grad(v);
  return q.tape->push(std::move(out), grad,
                      [q, k, v, block, heads, dh, scale, blocks, probs = std::move(probs)](
                          Tape& t, const Matrix& g, const Matrix&) {
                        const Matrix& Q = t.value(q);
                        const Matrix& K = t.value(k);
                        const Matrix& V = t.value(v);
                        Matrix dq = Matrix::Zero(Q.rows(), Q.cols());
                        Matrix dk = Matrix::Zero(K.rows(), K.cols());
                        Matrix dv = Matrix::Zero(V.rows(), V.cols());
                        for (Index b = 0; b < blocks; ++b) {
                          for (Index h = 0; h < heads; ++h) {
                            const Matrix& p = probs[b * heads + h];
                            const auto gb = g.block(b * block, h * dh, block, dh);
                            dv.block(b * block, h * dh, block, dh) = p.transpose() * gb;
                            const Matrix dp = gb * V.block(b * block, h * dh, block, dh).transpose();
                            const Eigen::VectorXd rowdot = dp.cwiseProduct(p).rowwise().sum();
                            const Matrix ds = p.cwiseProduct(dp.colwise() - rowdot) * scale;
                            dq.block(b * block, h * dh, block, dh) = ds * K.block(b * block, h * dh, block, dh);
                            dk.block(b * block, h * dh, block, dh) =
                                ds.transpose() * Q.block(b * block, h * dh, block, dh);
                          }
                        }
                        t.accumulate(q.id, dq);
                        t.accumulate(k.id, dk);
                        t.accumulate(v.id, dv);
                      });
}

}  // namespace ad

namespace {

constexpr int kMaxPositions = 512;

Matrix normal_like(int rows, int cols, Rng& rng, double stddev) {
  // Irwin-Hall approximation keeps the draw portable.
  Matrix m(rows, cols);
  for (ad::Index i = 0; i < m.rows(); ++i) {
    for (ad::Index j = 0; j < m.cols(); ++j) {
      double s = 0;
      for (int r = 0; r < 12; ++r) s += rng.uniform();
      m(i, j) = (s - 6.0) * stddev;
    }
  }
  return m;
}

}  // namespace

TransformerEncoder::TransformerEncoder(const EncoderConfig& config, int vocab_size, Rng& rng)
    : model_dim_(config.hidden), heads_(config.heads), max_positions_(kMaxPositions) {
  if (model_dim_ % heads_ != 0) {
    throw Error(ErrorCode::kConfig, "transformer width must be divisible by the head count");
  }
  const int D = model_dim_;
  tokens_ = Parameter("encoder.tokens", normal_like(vocab_size, D, rng, 0.02));
  tokens_.value.row(kPadId).setZero();
  positions_ = Parameter("encoder.positions", normal_like(max_positions_, D, rng, 0.02));
  cls_ = Parameter("encoder.cls", normal_like(1, D, rng, 0.02));
  emb_gain_ = Parameter("encoder.emb_norm.gain", Matrix::Ones(1, D));
  emb_shift_ = Parameter("encoder.emb_norm.shift", Matrix::Zero(1, D));
  for (int l = 0; l < config.layers; ++l) {
    const std::string p = "encoder.layer" + std::to_string(l);
    layers_.push_back(Layer{Linear(p + ".query", D, D, rng),
                            Linear(p + ".key", D, D, rng),
                            Linear(p + ".value", D, D, rng),
                            Linear(p + ".attn_out", D, D, rng),
                            Parameter(p + ".attn_norm.gain", Matrix::Ones(1, D)),
                            Parameter(p + ".attn_norm.shift", Matrix::Zero(1, D)),
                            Linear(p + ".ff_in", D, config.ff_dim, rng),
                            Linear(p + ".ff_out", config.ff_dim, D, rng),
                            Parameter(p + ".ff_norm.gain", Matrix::Ones(1, D)),
                            Parameter(p + ".ff_norm.shift", Matrix::Zero(1, D))});
  }
}

std::vector<Parameter*> TransformerEncoder::parameters() {
  std::vector<Parameter*> ps{&tokens_, &positions_, &cls_, &emb_gain_, &emb_shift_};
  for (auto& l : layers_) {
    for (auto* lin : {&l.query, &l.key, &l.value, &l.attn_out}) {
      for (auto* p : lin->parameters()) ps.push_back(p);
    }
    ps.push_back(&l.attn_gain);
    ps.push_back(&l.attn_shift);
    for (auto* lin : {&l.ff_in, &l.ff_out}) {
      for (auto* p : lin->parameters()) ps.push_back(p);
    }
    ps.push_back(&l.ff_gain);
    ps.push_back(&l.ff_shift);
  }
  return ps;
}

Var TransformerEncoder::encode(Tape& tape, const DocBatch& batch) {
  const int S = batch.num_sentences;
  const int K = batch.num_tokens;
  const auto total = static_cast<ad::Index>(batch.size()) * S;
  check_token_range(batch, static_cast<int>(tokens_.value.rows()));

  std::vector<int> active;
  int longest = 0;
  for (int b = 0; b < batch.size(); ++b) {
    const auto& doc = *batch.docs[b];
    for (int j = 0; j < S; ++j) {
      if (!doc.is_valid(j)) continue;
      active.push_back(b * S + j);
      for (int k = 0; k < K; ++k) {
        if (doc.token_valid[static_cast<std::size_t>(j) * K + k]) longest = std::max(longest, k + 1);
      }
    }
  }
  if (active.empty()) return tape.constant(Matrix::Zero(total, dim()));
  const int block = longest + 1;
  if (block > max_positions_) {
    throw Error(ErrorCode::kInvalidArgument, "transformer: sentence longer than the position table");
  }

  const auto n = static_cast<int>(active.size());
  const int rows = n * block;
  std::vector<int> token_ids, token_rows, cls_rows, position_ids(rows);
  std::vector<std::uint8_t> key_valid(rows, 0);
  for (int r = 0; r < n; ++r) {
    const int b = active[r] / S;
    const int j = active[r] % S;
    cls_rows.push_back(r * block);
    key_valid[r * block] = 1;
    for (int p = 0; p < block; ++p) position_ids[r * block + p] = p;
    for (int k = 0; k < longest; ++k) {
      const auto cell = static_cast<std::size_t>(j) * K + k;
      token_ids.push_back(batch.docs[b]->tokens[cell]);
      token_rows.push_back(r * block + 1 + k);
      key_valid[r * block + 1 + k] = batch.docs[b]->token_valid[cell];
    }
  }
  const std::vector<int> zeros(cls_rows.size(), 0);
  Var x = ad::add(ad::scatter_rows(ad::gather_rows(tape.param(tokens_), token_ids), token_rows, rows),
                  ad::scatter_rows(ad::gather_rows(tape.param(cls_), zeros), cls_rows, rows));
  x = ad::add(x, ad::gather_rows(tape.param(positions_), position_ids));
  x = ad::layer_norm(x, tape.param(emb_gain_), tape.param(emb_shift_));
  for (auto& l : layers_) {
    Var attn = ad::block_attention(l.query.forward(tape, x), l.key.forward(tape, x),
                                   l.value.forward(tape, x), block, heads_, key_valid);
    x = ad::layer_norm(ad::add(x, l.attn_out.forward(tape, attn)), tape.param(l.attn_gain),
                       tape.param(l.attn_shift));
    Var ff = l.ff_out.forward(tape, ad::gelu(l.ff_in.forward(tape, x)));
    x = ad::layer_norm(ad::add(x, ff), tape.param(l.ff_gain), tape.param(l.ff_shift));
  }
  return ad::scatter_rows(ad::gather_rows(x, cls_rows), active, total);
}

namespace {

struct TensorView {
  std::string dtype;
  std::vector<std::int64_t> shape;
  std::size_t begin = 0, end = 0;
};

double read_scalar(const std::string& dtype, const char* p) {
  if (dtype == "F64") {
    double v;
    std::memcpy(&v, p, 8);
    return v;
  }
  float v;
  std::memcpy(&v, p, 4);
  return v;
}

}  // namespace

int TransformerEncoder::load_safetensors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
  unsigned char lenbuf[8];
  if (!in.read(reinterpret_cast<char*>(lenbuf), 8)) throw Error(ErrorCode::kParse, path + ": truncated");
  std::uint64_t header_len = 0;
  for (int i = 0; i < 8; ++i) header_len |= static_cast<std::uint64_t>(lenbuf[i]) << (8 * i);
  std::string header(header_len, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(header_len))) {
    throw Error(ErrorCode::kParse, path + ": truncated header");
  }
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::map<std::string, TensorView> tensors;
  try {
    const auto parsed = nlohmann::json::parse(header);
    for (const auto& [name, meta] : parsed.items()) {
      if (name == "__metadata__") continue;
      TensorView tv;
      tv.dtype = meta.at("dtype").get<std::string>();
      tv.shape = meta.at("shape").get<std::vector<std::int64_t>>();
      const auto offsets = meta.at("data_offsets").get<std::vector<std::size_t>>();
      tv.begin = offsets.at(0);
      tv.end = offsets.at(1);
      std::string key = name.rfind("bert.", 0) == 0 ? name.substr(5) : name;
      tensors.emplace(std::move(key), tv);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, path + ": bad safetensors header (" + e.what() + ")");
  }

  int loaded = 0;
  // Torch Linear weights are stored out x in; ours are in x out.
  auto assign = [&](const std::string& name, Matrix& dst, bool transpose, bool add = false) {
    auto it = tensors.find(name);
    if (it == tensors.end()) return;
    const auto& tv = it->second;
    if (tv.dtype != "F32" && tv.dtype != "F64") {
      throw Error(ErrorCode::kCheckpoint, name + ": unsupported dtype " + tv.dtype);
    }
    const std::size_t width = tv.dtype == "F64" ? 8 : 4;
    const std::int64_t r = tv.shape.empty() ? 1 : tv.shape[0];
    const std::int64_t c = tv.shape.size() > 1 ? tv.shape[1] : 1;
    const auto want_r = transpose ? dst.cols() : dst.rows();
    const auto want_c = transpose ? dst.rows() : dst.cols();
    const bool vector_into_row = tv.shape.size() == 1 && dst.rows() == 1 && r == dst.cols();
    const bool rows_prefix = !transpose && c == dst.cols() && r >= dst.rows();
    if (!vector_into_row && !(r == want_r && c == want_c) && !rows_prefix) {
      throw Error(ErrorCode::kCheckpoint, name + ": shape does not match the configured model");
    }
    if (tv.end - tv.begin != static_cast<std::size_t>(r * c) * width || tv.end > data.size()) {
      throw Error(ErrorCode::kCheckpoint, name + ": bad data offsets");
    }
    const char* base = data.data() + tv.begin;
    for (std::int64_t i = 0; i < r; ++i) {
      for (std::int64_t j = 0; j < c; ++j) {
        const double val = read_scalar(tv.dtype, base + (i * c + j) * width);
        double* slot = nullptr;
        if (vector_into_row) {
          slot = &dst(0, i);
        } else if (transpose) {
          slot = &dst(j, i);
        } else if (i < dst.rows()) {
          slot = &dst(i, j);
        }
        if (slot) *slot = add ? *slot + val : val;
      }
    }
    ++loaded;
  };

  assign("embeddings.word_embeddings.weight", tokens_.value, false);
  assign("embeddings.position_embeddings.weight", positions_.value, false);
  // Segment-0 embedding is constant across positions; fold it in.
  if (auto it = tensors.find("embeddings.token_type_embeddings.weight"); it != tensors.end()) {
    Matrix seg(it->second.shape[0], model_dim_);
    assign("embeddings.token_type_embeddings.weight", seg, false);
    positions_.value.rowwise() += seg.row(0);
  }
  assign("embeddings.LayerNorm.weight", emb_gain_.value, false);
  assign("embeddings.LayerNorm.bias", emb_shift_.value, false);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& L = layers_[l];
    const std::string p = "encoder.layer." + std::to_string(l) + ".";
    auto linear = [&](const std::string& name, Linear& lin) {
      auto ps = lin.parameters();
      assign(p + name + ".weight", ps[0]->value, true);
      assign(p + name + ".bias", ps[1]->value, false);
    };
    linear("attention.self.query", L.query);
    linear("attention.self.key", L.key);
    linear("attention.self.value", L.value);
    linear("attention.output.dense", L.attn_out);
    assign(p + "attention.output.LayerNorm.weight", L.attn_gain.value, false);
    assign(p + "attention.output.LayerNorm.bias", L.attn_shift.value, false);
    linear("intermediate.dense", L.ff_in);
    linear("output.dense", L.ff_out);
    assign(p + "output.LayerNorm.weight", L.ff_gain.value, false);
    assign(p + "output.LayerNorm.bias", L.ff_shift.value, false);
  }
  return loaded;
}

}  // namespace sentmask
