#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcgn/autodiff.hpp"
#include "pcgn/data.hpp"

namespace pcgn {

struct ModelDims {
  std::size_t vocab_size = 256;
  std::size_t word_dim = 16;
  std::size_t blog_hidden = 32;  // blog encoder and decoder width
  std::size_t blog_layers = 2;   // blog encoder and decoder depth
  std::size_t desc_hidden = 16;
  std::size_t feature_dim = 1;  // width of the user feature vector F
  std::size_t user_dim = 8;

  /// Small dimensions used for tests and the synthetic corpora.
  static ModelDims desk(std::size_t vocab_size, std::size_t feature_dim);
  /// 2x512 blog/decoder LSTMs, 200-unit description encoder, 300-d words, 100-d user vector.
  static ModelDims full(std::size_t vocab_size, std::size_t feature_dim);

  void validate() const;
  nlohmann::json to_json() const;
  static ModelDims from_json(const nlohmann::json& j);
  bool operator==(const ModelDims&) const = default;
};

/// Which user-conditioning mechanisms are active.
struct Variant {
  bool user_embedding = false;  // v_u fed to the decoder at every step
  bool gated_memory = false;
  bool coattention = false;
  bool external = false;

  static Variant seq2seq() { return {}; }
  static Variant seq2seq_emb() { return {true, false, false, false}; }
  static Variant with_memory() { return {false, true, false, false}; }
  static Variant with_coattention() { return {false, true, true, false}; }
  static Variant pcgn() { return {false, true, true, true}; }

  /// Accepts seq2seq, seq2seq+emb, +mem, +coatt, +external and pcgn (case-insensitive).
  static Variant from_name(const std::string& name);
  std::string name() const;

  bool needs_user_vector() const { return user_embedding || gated_memory || external; }
  bool needs_description() const { return coattention || external; }
  void validate() const;

  nlohmann::json to_json() const;
  static Variant from_json(const nlohmann::json& j);
  bool operator==(const Variant&) const = default;
};

struct ModelConfig {
  ModelDims dims;
  Variant variant;
  double init_range = 0.08;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

/// Gate rows ordered input, forget, cell candidate, output.
struct LstmCell {
  ParamId input_weights = 0;   // [4H x in]
  ParamId hidden_weights = 0;  // [4H x H]
  ParamId bias = 0;            // [4H]
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
};

struct LstmState {
  Var h;
  Var c;
};

/// Stacked bidirectional encoder; layer l+1 reads [fwd; bwd] of layer l.
struct BiLstm {
  std::vector<LstmCell> forward;
  std::vector<LstmCell> backward;
};

struct ParamIds {
  ParamId embedding = 0;
  BiLstm blog_encoder;
  std::vector<LstmCell> decoder;
  std::vector<ParamId> decoder_init_weights;
  std::vector<ParamId> decoder_init_bias;
  ParamId blog_attention = 0;  // W_a^X [H x 2H]
  std::optional<BiLstm> description_encoder;
  std::optional<ParamId> description_attention;  // W_a^D [H x 2H_d]
  std::optional<ParamId> user_weights;           // [d_u x |F|]
  std::optional<ParamId> user_bias;
  std::optional<ParamId> memory_update;  // W_g^u [d_u x H]
  std::optional<ParamId> memory_output;  // W_g^o [d_u x (H + d_w + 2H)]
  std::optional<ParamId> output;         // W_o [V x H]
  std::optional<ParamId> user_projection;  // W_r [H x (d_u + 2H_d)]
  std::optional<ParamId> external_output;  // W_o~ [V x 2H]
};

class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const ModelDims& dims() const { return config_.dims; }
  const Variant& variant() const { return config_.variant; }
  const ParamIds& ids() const { return ids_; }
  const ParameterStore& params() const { return params_; }
  ParameterStore& params() { return params_; }

  std::size_t decoder_input_size() const;

 private:
  ModelConfig config_;
  ParameterStore params_;
  ParamIds ids_;
};

/// Allocates exactly the tensors the variant uses, uniform in [-init_range, init_range]
/// from the seed, with forget-gate biases set to 1.
Model build_model(const ModelConfig& config, std::uint64_t seed);

LstmState lstm_step(Tape& tape, const ParameterStore& params, const LstmCell& cell, Var x, const LstmState& prev);
LstmState zero_lstm_state(Tape& tape, std::size_t hidden);

/// Per position: [forward h; backward h] of the top layer.
std::vector<Var> bilstm_encode(Tape& tape, const ParameterStore& params, const BiLstm& cells,
                               const std::vector<Var>& inputs);

/// v_u = tanh(W F + b).
Var user_embed(Tape& tape, const Model& model, const std::vector<double>& features);

/// Source states stacked as rows plus their bilinear keys (states * W_a^T), computed once per input.
struct AttentionMemory {
  Var states;
  Var keys;
};

struct AttentionResult {
  Var context;
  Var weights;
};

AttentionMemory make_attention_memory(Var states, Var bilinear);
/// e_j = query^T W_a h_j, weights = softmax(e), context = sum_j weights_j h_j.
AttentionResult attention_context(Var query, const AttentionMemory& memory);
AttentionResult attention_context(Var query, const std::vector<Var>& states, Var bilinear);

struct GatedMemoryResult {
  Var memory;         // M_t = g_u * M_{t-1}
  Var output;         // g_o * M_t
  Var update_gate;    // g_u = sigmoid(W_g^u s_t)
  Var output_gate;    // g_o = sigmoid(W_g^o [s_{t-1}; e(y_{t-1}); c^X_t])
};

Var memory_output_gate(Var output_weights, Var prev_state, Var prev_embedding, Var blog_context);
Var memory_update_gate(Var update_weights, Var state);

/// Full gated-memory update for a known decoder state s_t.
GatedMemoryResult gated_memory_step(Var state, Var prev_state, Var prev_embedding, Var blog_context,
                                    Var prev_memory, Var update_weights, Var output_weights);

struct DecoderState {
  std::vector<LstmState> layers;
  std::optional<Var> memory;
  std::size_t step = 0;

  Var top() const { return layers.back().h; }
};

struct Encoding {
  AttentionMemory blog;
  std::optional<AttentionMemory> description;
  std::optional<Var> user_vector;
  DecoderState initial;
};

/// Runs the encoders and builds s_0 (tanh map of the final top-layer blog states) and M_0 = v_u.
Encoding encode_input(Tape& tape, const Model& model, const EncodedExample& input);

struct DecoderStep {
  Var logits;
  DecoderState state;
  Var blog_attention;
  std::optional<Var> description_attention;
  std::optional<Var> update_gate;
  std::optional<Var> memory_output;
};

/// One decoding step. Within a step the personality read (g_o * M_{t-1}) feeds the LSTM and the
/// erase gate is computed from the new state afterwards, giving M_t = g_u(s_t) * M_{t-1}.
DecoderStep decoder_step(Tape& tape, const Model& model, const Encoding& encoding, const DecoderState& state,
                         TokenId previous);

}  // namespace pcgn
