#include "pcgn/decoding.hpp"

namespace pcgn {

std::vector<TokenId> Hypothesis::content() const {
  std::vector<TokenId> out = tokens;
  if (finished && !out.empty() && out.back() == kEosId) out.pop_back();
  return out;
}

void DecodeConfig::validate() const {
  if (beam_size < 1) throw DomainError("decode: beam size must be >= 1");
  if (max_length < 1) throw DomainError("decode: max length must be >= 1");
  if (!(length_penalty >= 0.0)) throw DomainError("decode: length penalty must be >= 0");
}

double hypothesis_score(const Hypothesis& h, double length_penalty) {
  if (length_penalty == 0.0 || h.tokens.empty()) return h.log_prob;
  return h.log_prob / std::pow(static_cast<double>(h.tokens.size()), length_penalty);
}

std::vector<double> decoding_log_probs(const Tensor& logits) {
  Tensor masked = logits;
  for (TokenId id : {kPadId, kUnkId, kBosId}) {
    if (id < masked.size()) masked[id] = -std::numeric_limits<double>::infinity();
  }
  const Tensor lp = kernels::log_softmax(masked);
  return lp.values();
}

ModelScorer::ModelScorer(const Model& model, const EncodedExample& input)
    : model_(model), tape_(std::make_unique<Tape>()) {
  encoding_ = encode_input(*tape_, model_, input);
}

Tensor ModelScorer::logits(const State& state, TokenId previous) {
  return decoder_step(*tape_, model_, encoding_, state, previous).logits.value();
}

std::pair<std::vector<double>, ModelScorer::State> ModelScorer::initial() { return extend(encoding_.initial, kBosId); }

std::pair<std::vector<double>, ModelScorer::State> ModelScorer::extend(const State& state, TokenId token) {
  DecoderStep step = decoder_step(*tape_, model_, encoding_, state, token);
  return {decoding_log_probs(step.logits.value()), std::move(step.state)};
}

std::vector<Hypothesis> beam_search(const Model& model, const EncodedExample& input, const DecodeConfig& config) {
  ModelScorer scorer(model, input);
  return beam_search(scorer, config);
}

Hypothesis greedy_decode(const Model& model, const EncodedExample& input, std::size_t max_length) {
  ModelScorer scorer(model, input);
  return greedy_decode(scorer, max_length);
}

}  // namespace pcgn
