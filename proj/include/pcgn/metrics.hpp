#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcgn/data.hpp"
#include "pcgn/decoding.hpp"
#include "pcgn/model.hpp"

namespace pcgn {

/// One hypothesis against its single reference. Tokens may be ids or strings.
struct EvalPair {
  std::vector<std::string> hypothesis;
  std::vector<std::string> reference;
};

struct CorpusScores {
  double ppl = 0.0;
  double bleu2 = 0.0;
  double meteor = 0.0;
  std::size_t pairs = 0;

  nlohmann::json to_json() const;
};

/// exp(total loss / total target tokens) under teacher forcing.
double perplexity(const Model& model, std::span<const EncodedExample> data);

/// Corpus BLEU over unigrams and bigrams: clipped precisions pooled across pairs, geometric
/// mean with equal weights, brevity penalty on summed lengths, no smoothing.
double bleu2(std::span<const EvalPair> pairs);

struct MeteorStats {
  std::size_t matches = 0;
  std::size_t chunks = 0;
  double score = 0.0;
};

/// Exact-match METEOR for a single pair: F = 10PR/(R+9P), penalty = 0.5 (chunks/m)^3.
MeteorStats meteor_pair(const std::vector<std::string>& hypothesis, const std::vector<std::string>& reference);

/// Mean of meteor_pair over the corpus.
double meteor_lite(std::span<const EvalPair> pairs);

struct Evaluation {
  CorpusScores scores;
  std::vector<EvalPair> pairs;
  std::vector<double> hypothesis_log_probs;
};

/// Decodes every example (beam rank-1), scores the outputs against the gold comments and
/// computes teacher-forced perplexity.
Evaluation evaluate(const Model& model, const Vocab& vocab, std::span<const EncodedExample> data,
                    const DecodeConfig& decode);

}  // namespace pcgn
