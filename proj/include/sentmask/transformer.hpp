#ifndef SENTMASK_TRANSFORMER_HPP
#define SENTMASK_TRANSFORMER_HPP

#include <string>
#include <vector>

#include "sentmask/embedder.hpp"

namespace sentmask {

namespace ad {
// Row-wise layer normalisation with learned gain and shift (both 1 x D).
Var layer_norm(Var x, Var gain, Var shift, double eps = 1e-12);
// tanh-approximated GELU.
Var gelu(Var x);
// Multi-head self-attention inside consecutive blocks of `block` rows.
// key_valid has one entry per row; invalid rows are never attended to.
Var block_attention(Var q, Var k, Var v, int block, int heads, const std::vector<std::uint8_t>& key_valid);
}  // namespace ad

// BERT-style encoder run on each sentence independently: a learned [CLS]
// vector is prepended and its final hidden state becomes the sentence vector.
class TransformerEncoder : public SentenceEncoder {
 public:
  TransformerEncoder(const EncoderConfig& config, int vocab_size, Rng& rng);

  std::string backend() const override { return "transformer"; }
  int dim() const override { return model_dim_; }
  Var encode(Tape& tape, const DocBatch& batch) override;
  std::vector<Parameter*> parameters() override;

  // Copies weights stored under BERT tensor names (optionally prefixed with
  // "bert.") from a safetensors file. Returns the number of tensors loaded.
  int load_safetensors(const std::string& path);

 private:
  struct Layer {
    Linear query, key, value, attn_out;
    Parameter attn_gain, attn_shift;
    Linear ff_in, ff_out;
    Parameter ff_gain, ff_shift;
  };

  int model_dim_;
  int heads_;
  int max_positions_;
  Parameter tokens_;
  Parameter positions_;
  Parameter cls_;
  Parameter emb_gain_, emb_shift_;
  std::vector<Layer> layers_;
};

}  // namespace sentmask

#endif  // SENTMASK_TRANSFORMER_HPP
