#include "pcgn/model.hpp"

#include <algorithm>
#include <cctype>

#include "pcgn/random.hpp"

namespace pcgn {

using nlohmann::json;

// ---------------------------------------------------------------- configuration

ModelDims ModelDims::desk(std::size_t vocab_size, std::size_t feature_dim) {
  ModelDims d;
  d.vocab_size = vocab_size;
  d.feature_dim = feature_dim;
  return d;
}

ModelDims ModelDims::full(std::size_t vocab_size, std::size_t feature_dim) {
  ModelDims d;
  d.vocab_size = vocab_size;
  d.word_dim = 300;
  d.blog_hidden = 512;
  d.blog_layers = 2;
  d.desc_hidden = 200;
  d.feature_dim = feature_dim;
  d.user_dim = 100;
  return d;
}

void ModelDims::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw DomainError(std::string("model dims: ") + name + " must be positive");
  };
  positive(vocab_size, "vocab_size");
  positive(word_dim, "word_dim");
  positive(blog_hidden, "blog_hidden");
  positive(blog_layers, "blog_layers");
  positive(desc_hidden, "desc_hidden");
  positive(feature_dim, "feature_dim");
  positive(user_dim, "user_dim");
  if (vocab_size <= kReservedTokens) throw DomainError("model dims: vocab_size must exceed the reserved tokens");
}

json ModelDims::to_json() const {
  return json{{"vocab_size", vocab_size}, {"word_dim", word_dim},       {"blog_hidden", blog_hidden},
              {"blog_layers", blog_layers}, {"desc_hidden", desc_hidden}, {"feature_dim", feature_dim},
              {"user_dim", user_dim}};
}

ModelDims ModelDims::from_json(const json& j) {
  ModelDims d;
  d.vocab_size = j.at("vocab_size").get<std::size_t>();
  d.word_dim = j.at("word_dim").get<std::size_t>();
  d.blog_hidden = j.at("blog_hidden").get<std::size_t>();
  d.blog_layers = j.at("blog_layers").get<std::size_t>();
  d.desc_hidden = j.at("desc_hidden").get<std::size_t>();
  d.feature_dim = j.at("feature_dim").get<std::size_t>();
  d.user_dim = j.at("user_dim").get<std::size_t>();
  return d;
}

Variant Variant::from_name(const std::string& raw) {
  std::string name;
  for (char ch : raw) name.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  if (name == "seq2seq") return seq2seq();
  if (name == "seq2seq+emb") return seq2seq_emb();
  if (name == "+mem" || name == "mem" || name == "seq2seq+mem") return with_memory();
  if (name == "+coatt" || name == "coatt" || name == "seq2seq+mem+coatt") return with_coattention();
  if (name == "+external" || name == "external" || name == "pcgn") return pcgn();
  throw DomainError("unknown variant '" + raw + "' (expected seq2seq, seq2seq+emb, +mem, +coatt, +external or pcgn)");
}

std::string Variant::name() const {
  if (*this == seq2seq()) return "Seq2Seq";
  if (*this == seq2seq_emb()) return "Seq2Seq+Emb";
  if (*this == with_memory()) return "+Mem";
  if (*this == with_coattention()) return "+CoAtt";
  if (*this == pcgn()) return "PCGN";
  std::string out = "custom(";
  out += user_embedding ? "emb," : "";
  out += gated_memory ? "mem," : "";
  out += coattention ? "coatt," : "";
  out += external ? "external," : "";
  if (out.back() == ',') out.pop_back();
  return out + ")";
}

void Variant::validate() const {
  if (external && !coattention) throw DomainError("variant: external personality expression requires co-attention");
}

json Variant::to_json() const {
  return json{{"user_embedding", user_embedding},
              {"gated_memory", gated_memory},
              {"coattention", coattention},
              {"external", external}};
}

Variant Variant::from_json(const json& j) {
  Variant v;
  v.user_embedding = j.at("user_embedding").get<bool>();
  v.gated_memory = j.at("gated_memory").get<bool>();
  v.coattention = j.at("coattention").get<bool>();
  v.external = j.at("external").get<bool>();
  v.validate();
  return v;
}

json ModelConfig::to_json() const {
  return json{{"dims", dims.to_json()}, {"variant", variant.to_json()}, {"init_range", init_range}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  c.dims = ModelDims::from_json(j.at("dims"));
  c.variant = Variant::from_json(j.at("variant"));
  c.init_range = j.at("init_range").get<double>();
  return c;
}

// ---------------------------------------------------------------- construction

namespace {

class Initializer {
 public:
  Initializer(ParameterStore& store, double range, std::uint64_t seed) : store_(store), range_(range), rng_(seed) {}

  ParamId add(const std::string& name, Shape shape) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng_.uniform(-range_, range_);
    return store_.add(name, std::move(t));
  }

  LstmCell lstm(const std::string& prefix, std::size_t input, std::size_t hidden) {
    LstmCell cell;
    cell.input_size = input;
    cell.hidden_size = hidden;
    cell.input_weights = add(prefix + ".w_x", {4 * hidden, input});
    cell.hidden_weights = add(prefix + ".w_h", {4 * hidden, hidden});
    cell.bias = add(prefix + ".b", {4 * hidden});
    Tensor& b = store_.value(cell.bias);
    for (std::size_t i = hidden; i < 2 * hidden; ++i) b[i] = 1.0;
    return cell;
  }

  BiLstm bilstm(const std::string& prefix, std::size_t input, std::size_t hidden, std::size_t layers) {
    BiLstm enc;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t in = l == 0 ? input : 2 * hidden;
      enc.forward.push_back(lstm(prefix + ".l" + std::to_string(l) + ".fwd", in, hidden));
      enc.backward.push_back(lstm(prefix + ".l" + std::to_string(l) + ".bwd", in, hidden));
    }
    return enc;
  }

 private:
  ParameterStore& store_;
  double range_;
  Rng rng_;
};

}  // namespace

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  const ModelDims& d = config_.dims;
  const Variant& v = config_.variant;
  d.validate();
  v.validate();
  if (!(config_.init_range >= 0.0)) throw DomainError("model: init_range must be non-negative");

  Initializer init(params_, config_.init_range, seed);
  const std::size_t h = d.blog_hidden;
  ids_.embedding = init.add("embedding", {d.vocab_size, d.word_dim});
  ids_.blog_encoder = init.bilstm("blog_enc", d.word_dim, h, d.blog_layers);
  ids_.blog_attention = init.add("att_blog", {h, 2 * h});
  if (v.needs_description()) {
    ids_.description_encoder = init.bilstm("desc_enc", d.word_dim, d.desc_hidden, 1);
    ids_.description_attention = init.add("att_desc", {h, 2 * d.desc_hidden});
  }
  if (v.needs_user_vector()) {
    ids_.user_weights = init.add("user.w", {d.user_dim, d.feature_dim});
    ids_.user_bias = init.add("user.b", {d.user_dim});
  }
  if (v.gated_memory) {
    ids_.memory_update = init.add("mem.update", {d.user_dim, h});
    ids_.memory_output = init.add("mem.output", {d.user_dim, h + d.word_dim + 2 * h});
  }
  for (std::size_t l = 0; l < d.blog_layers; ++l) {
    ids_.decoder_init_weights.push_back(init.add("dec_init.l" + std::to_string(l) + ".w", {h, 2 * h}));
    ids_.decoder_init_bias.push_back(init.add("dec_init.l" + std::to_string(l) + ".b", {h}));
  }
  for (std::size_t l = 0; l < d.blog_layers; ++l) {
    ids_.decoder.push_back(init.lstm("dec.l" + std::to_string(l), l == 0 ? decoder_input_size() : h, h));
  }
  if (v.external) {
    ids_.user_projection = init.add("ext.w_r", {h, d.user_dim + 2 * d.desc_hidden});
    ids_.external_output = init.add("ext.w_out", {d.vocab_size, 2 * h});
  } else {
    ids_.output = init.add("out.w", {d.vocab_size, h});
  }
}

std::size_t Model::decoder_input_size() const {
  const ModelDims& d = config_.dims;
  const Variant& v = config_.variant;
  std::size_t n = 2 * d.blog_hidden + d.word_dim;
  if (v.coattention) n += 2 * d.desc_hidden;
  if (v.user_embedding) n += d.user_dim;
  if (v.gated_memory) n += d.user_dim;
  return n;
}

Model build_model(const ModelConfig& config, std::uint64_t seed) { return Model(config, seed); }

// ---------------------------------------------------------------- layers

LstmState zero_lstm_state(Tape& tape, std::size_t hidden) {
  return {tape.constant(Tensor::zeros({hidden})), tape.constant(Tensor::zeros({hidden}))};
}

LstmState lstm_step(Tape& tape, const ParameterStore& params, const LstmCell& cell, Var x, const LstmState& prev) {
  const std::size_t h = cell.hidden_size;
  if (x.value().rank() != 1 || x.size() != cell.input_size || prev.h.size() != h || prev.c.size() != h) {
    throw DimensionError("lstm_step: expected input " + std::to_string(cell.input_size) + " and state " +
                         std::to_string(h) + ", got " + shape_string(x.shape()) + " / " +
                         shape_string(prev.h.shape()) + " / " + shape_string(prev.c.shape()));
  }
  Var w_x = tape.param(params, cell.input_weights);
  Var w_h = tape.param(params, cell.hidden_weights);
  Var b = tape.param(params, cell.bias);
  Var gates = add(add(matmul(w_x, x), matmul(w_h, prev.h)), b);
  Var i = sigmoid(slice(gates, 0, h));
  Var f = sigmoid(slice(gates, h, h));
  Var g = tanh(slice(gates, 2 * h, h));
  Var o = sigmoid(slice(gates, 3 * h, h));
  Var c = add(hadamard(f, prev.c), hadamard(i, g));
  return {hadamard(o, tanh(c)), c};
}

std::vector<Var> bilstm_encode(Tape& tape, const ParameterStore& params, const BiLstm& cells,
                               const std::vector<Var>& inputs) {
  if (inputs.empty()) throw DomainError("bilstm_encode: empty sequence");
  std::vector<Var> layer_in = inputs;
  const std::size_t n = inputs.size();
  for (std::size_t l = 0; l < cells.forward.size(); ++l) {
    const LstmCell& fc = cells.forward[l];
    const LstmCell& bc = cells.backward[l];
    std::vector<Var> fwd(n), bwd(n);
    LstmState s = zero_lstm_state(tape, fc.hidden_size);
    for (std::size_t t = 0; t < n; ++t) {
      s = lstm_step(tape, params, fc, layer_in[t], s);
      fwd[t] = s.h;
    }
    s = zero_lstm_state(tape, bc.hidden_size);
    for (std::size_t t = n; t-- > 0;) {
      s = lstm_step(tape, params, bc, layer_in[t], s);
      bwd[t] = s.h;
    }
    for (std::size_t t = 0; t < n; ++t) layer_in[t] = concat({fwd[t], bwd[t]});
  }
  return layer_in;
}

Var user_embed(Tape& tape, const Model& model, const std::vector<double>& features) {
  const ParamIds& ids = model.ids();
  if (!ids.user_weights) throw DomainError("user_embed: variant " + model.variant().name() + " has no user vector");
  if (features.size() != model.dims().feature_dim) {
    throw DimensionError("user_embed: feature width " + std::to_string(features.size()) + " but model expects " +
                         std::to_string(model.dims().feature_dim));
  }
  Var f = tape.constant(Tensor::vector(features));
  Var w = tape.param(model.params(), *ids.user_weights);
  Var b = tape.param(model.params(), *ids.user_bias);
  return tanh(add(matmul(w, f), b));
}

AttentionMemory make_attention_memory(Var states, Var bilinear) {
  return {states, matmul(states, transpose(bilinear))};
}

AttentionResult attention_context(Var query, const AttentionMemory& memory) {
  Var scores = matmul(memory.keys, query);
  Var weights = softmax(scores);
  Var context = matmul(transpose(memory.states), weights);
  return {context, weights};
}

AttentionResult attention_context(Var query, const std::vector<Var>& states, Var bilinear) {
  if (states.empty()) throw DomainError("attention_context: no source states");
  return attention_context(query, make_attention_memory(stack_rows(states), bilinear));
}

Var memory_output_gate(Var output_weights, Var prev_state, Var prev_embedding, Var blog_context) {
  return sigmoid(matmul(output_weights, concat({prev_state, prev_embedding, blog_context})));
}

Var memory_update_gate(Var update_weights, Var state) { return sigmoid(matmul(update_weights, state)); }

GatedMemoryResult gated_memory_step(Var state, Var prev_state, Var prev_embedding, Var blog_context,
                                    Var prev_memory, Var update_weights, Var output_weights) {
  GatedMemoryResult r;
  r.update_gate = memory_update_gate(update_weights, state);
  r.memory = hadamard(r.update_gate, prev_memory);
  r.output_gate = memory_output_gate(output_weights, prev_state, prev_embedding, blog_context);
  r.output = hadamard(r.output_gate, r.memory);
  return r;
}

// ---------------------------------------------------------------- encoder / decoder

namespace {

std::vector<Var> embed_all(Tape& tape, const Model& model, const std::vector<TokenId>& ids) {
  Var table = tape.param(model.params(), model.ids().embedding);
  std::vector<Var> out;
  out.reserve(ids.size());
  for (TokenId id : ids) out.push_back(embedding_lookup(table, id));
  return out;
}

}  // namespace

Encoding encode_input(Tape& tape, const Model& model, const EncodedExample& input) {
  const ParamIds& ids = model.ids();
  const ParameterStore& params = model.params();
  const Variant& v = model.variant();
  const std::size_t h = model.dims().blog_hidden;
  if (input.blog.empty()) throw DomainError("encode_input: empty blog");

  Encoding enc;
  std::vector<Var> blog_states = bilstm_encode(tape, params, ids.blog_encoder, embed_all(tape, model, input.blog));
  enc.blog = make_attention_memory(stack_rows(blog_states), tape.param(params, ids.blog_attention));

  if (v.needs_description()) {
    if (input.description.empty()) throw DomainError("encode_input: empty description (expected the UNK fallback)");
    std::vector<Var> desc_states =
        bilstm_encode(tape, params, *ids.description_encoder, embed_all(tape, model, input.description));
    enc.description = make_attention_memory(stack_rows(desc_states), tape.param(params, *ids.description_attention));
  }
  if (v.needs_user_vector()) enc.user_vector = user_embed(tape, model, input.features);

  Var final_states = concat({slice(blog_states.back(), 0, h), slice(blog_states.front(), h, h)});
  for (std::size_t l = 0; l < ids.decoder.size(); ++l) {
    Var w = tape.param(params, ids.decoder_init_weights[l]);
    Var b = tape.param(params, ids.decoder_init_bias[l]);
    enc.initial.layers.push_back({tanh(add(matmul(w, final_states), b)), tape.constant(Tensor::zeros({h}))});
  }
  if (v.gated_memory) enc.initial.memory = enc.user_vector;
  return enc;
}

DecoderStep decoder_step(Tape& tape, const Model& model, const Encoding& enc, const DecoderState& state,
                         TokenId previous) {
  const ParamIds& ids = model.ids();
  const ParameterStore& params = model.params();
  const Variant& v = model.variant();
  if (state.layers.size() != ids.decoder.size() || state.memory.has_value() != v.gated_memory ||
      enc.description.has_value() != v.needs_description() || enc.user_vector.has_value() != v.needs_user_vector()) {
    throw DomainError("decoder_step: state does not match variant " + v.name());
  }
  if (previous >= model.dims().vocab_size) {
    throw IndexError("decoder_step: token id " + std::to_string(previous) + " >= vocab size " +
                     std::to_string(model.dims().vocab_size));
  }

  DecoderStep out;
  Var prev_embedding = embedding_lookup(tape.param(params, ids.embedding), previous);
  Var query = state.top();

  AttentionResult blog = attention_context(query, enc.blog);
  out.blog_attention = blog.weights;
  std::optional<AttentionResult> desc;
  if (enc.description) {
    desc = attention_context(query, *enc.description);
    out.description_attention = desc->weights;
  }

  std::vector<Var> inputs{blog.context};
  if (v.coattention) inputs.push_back(desc->context);
  inputs.push_back(prev_embedding);
  if (v.user_embedding) inputs.push_back(*enc.user_vector);
  if (v.gated_memory) {
    Var gate = memory_output_gate(tape.param(params, *ids.memory_output), query, prev_embedding, blog.context);
    out.memory_output = hadamard(gate, *state.memory);
    inputs.push_back(*out.memory_output);
  }

  Var x = concat(inputs);
  out.state.step = state.step + 1;
  for (std::size_t l = 0; l < ids.decoder.size(); ++l) {
    LstmState s = lstm_step(tape, params, ids.decoder[l], x, state.layers[l]);
    out.state.layers.push_back(s);
    x = s.h;
  }
  Var top = out.state.top();

  if (v.gated_memory) {
    out.update_gate = memory_update_gate(tape.param(params, *ids.memory_update), top);
    out.state.memory = hadamard(*out.update_gate, *state.memory);
  }

  if (v.external) {
    Var user_repr = matmul(tape.param(params, *ids.user_projection), concat({*enc.user_vector, desc->context}));
    out.logits = matmul(tape.param(params, *ids.external_output), concat({top, user_repr}));
  } else {
    out.logits = matmul(tape.param(params, *ids.output), top);
  }
  return out;
}

}  // namespace pcgn
