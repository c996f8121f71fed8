#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "pcgn/data.hpp"
#include "pcgn/model.hpp"

namespace pcgn {

struct Hypothesis {
  std::vector<TokenId> tokens;  // no BOS; ends with EOS when finished
  double log_prob = 0.0;
  bool finished = false;

  /// Tokens with the terminating EOS removed.
  std::vector<TokenId> content() const;
  bool operator==(const Hypothesis&) const = default;
};

struct DecodeConfig {
  std::size_t beam_size = 10;
  std::size_t max_length = 20;  // counts EOS
  double length_penalty = 0.0;  // score = log_prob / len^penalty; 0 disables
  bool prune = true;

  void validate() const;
};

/// Ranking score of a hypothesis under the configured length normalization.
double hypothesis_score(const Hypothesis& h, double length_penalty);

/// A scorer yields next-token log-probabilities (-inf for tokens that may not be emitted)
/// and an opaque state. `initial()` scores the first position after BOS.
template <class S>
concept StepScorer = requires(S& s, const typename S::State& state, TokenId token) {
  { s.initial() } -> std::same_as<std::pair<std::vector<double>, typename S::State>>;
  { s.extend(state, token) } -> std::same_as<std::pair<std::vector<double>, typename S::State>>;
  { s.eos() } -> std::convertible_to<TokenId>;
};

namespace detail {

/// Higher score first; equal scores fall back to lexicographic token order.
inline bool ranks_before(double score_a, const std::vector<TokenId>& a, double score_b, const std::vector<TokenId>& b) {
  if (score_a != score_b) return score_a > score_b;
  return a < b;
}

}  // namespace detail

/// Argmax at every step (ties to the lowest id) until EOS or `max_length` tokens.
template <StepScorer S>
Hypothesis greedy_decode(S& scorer, std::size_t max_length) {
  Hypothesis h;
  auto [log_probs, state] = scorer.initial();
  for (std::size_t t = 0; t < max_length; ++t) {
    std::size_t best = 0;
    for (std::size_t v = 1; v < log_probs.size(); ++v)
      if (log_probs[v] > log_probs[best]) best = v;
    const TokenId token = static_cast<TokenId>(best);
    h.tokens.push_back(token);
    h.log_prob += log_probs[best];
    if (token == static_cast<TokenId>(scorer.eos())) {
      h.finished = true;
      break;
    }
    if (t + 1 < max_length) std::tie(log_probs, state) = scorer.extend(state, token);
  }
  return h;
}

/// Beam search with a shrinking beam: each step keeps the best (B - finished) expansions,
/// finished ones move to the pool, so the pool never exceeds B. When fewer than B finish,
/// the pool is padded with the best unfinished prefixes of length `max_length`.
template <StepScorer S>
std::vector<Hypothesis> beam_search(S& scorer, const DecodeConfig& config) {
  config.validate();
  using State = typename S::State;
  struct Live {
    Hypothesis hyp;
    std::vector<double> log_probs;
    State state;
  };
  struct Candidate {
    std::size_t parent;
    TokenId token;
    double score;
    std::vector<TokenId> tokens;
  };

  const TokenId eos = static_cast<TokenId>(scorer.eos());
  std::vector<Hypothesis> pool;
  std::vector<Live> live;
  {
    auto [lp, st] = scorer.initial();
    live.push_back(Live{Hypothesis{}, std::move(lp), std::move(st)});
  }

  for (std::size_t t = 0; t < config.max_length; ++t) {
    const std::size_t width = config.beam_size - pool.size();
    if (live.empty() || (config.prune && width == 0)) break;
    std::vector<Candidate> candidates;
    for (std::size_t p = 0; p < live.size(); ++p) {
      const std::vector<double>& lp = live[p].log_probs;
      for (std::size_t v = 0; v < lp.size(); ++v) {
        if (lp[v] == -std::numeric_limits<double>::infinity()) continue;
        std::vector<TokenId> tokens = live[p].hyp.tokens;
        tokens.push_back(static_cast<TokenId>(v));
        candidates.push_back(Candidate{p, static_cast<TokenId>(v), live[p].hyp.log_prob + lp[v], std::move(tokens)});
      }
    }
    const std::size_t keep = std::min(width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      [](const Candidate& a, const Candidate& b) {
                        return detail::ranks_before(a.score, a.tokens, b.score, b.tokens);
                      });
    candidates.resize(keep);

    std::vector<Live> next;
    for (Candidate& c : candidates) {
      Hypothesis h{std::move(c.tokens), c.score, c.token == eos};
      if (h.finished) {
        pool.push_back(std::move(h));
      } else if (t + 1 < config.max_length) {
        auto [lp, st] = scorer.extend(live[c.parent].state, c.token);
        next.push_back(Live{std::move(h), std::move(lp), std::move(st)});
      } else {
        next.push_back(Live{std::move(h), {}, live[c.parent].state});
      }
    }
    live = std::move(next);
  }

  auto by_score = [&](const Hypothesis& a, const Hypothesis& b) {
    return detail::ranks_before(hypothesis_score(a, config.length_penalty), a.tokens,
                                hypothesis_score(b, config.length_penalty), b.tokens);
  };
  if (pool.size() < config.beam_size) {
    std::vector<Hypothesis> unfinished;
    for (Live& l : live)
      if (l.hyp.tokens.size() == config.max_length) unfinished.push_back(std::move(l.hyp));
    std::sort(unfinished.begin(), unfinished.end(), by_score);
    for (Hypothesis& h : unfinished) {
      if (pool.size() >= config.beam_size) break;
      pool.push_back(std::move(h));
    }
  }
  std::sort(pool.begin(), pool.end(), by_score);
  return pool;
}

/// Sum of the scorer's log-probabilities along `tokens`.
template <StepScorer S>
double rescore(S& scorer, const std::vector<TokenId>& tokens) {
  double total = 0.0;
  auto [lp, state] = scorer.initial();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    total += lp.at(tokens[i]);
    if (i + 1 < tokens.size()) std::tie(lp, state) = scorer.extend(state, tokens[i]);
  }
  return total;
}

/// Log-softmax with PAD, UNK and BOS masked to -inf; these are never generated.
std::vector<double> decoding_log_probs(const Tensor& logits);

/// Adapts a model and one input (blog, features, description) to the StepScorer interface.
/// Decoder states live on a private tape that grows with every extension.
class ModelScorer {
 public:
  using State = DecoderState;

  ModelScorer(const Model& model, const EncodedExample& input);

  std::pair<std::vector<double>, State> initial();
  std::pair<std::vector<double>, State> extend(const State& state, TokenId token);
  TokenId eos() const { return kEosId; }

  /// Raw logits at the step that follows `previous`.
  Tensor logits(const State& state, TokenId previous);

 private:
  const Model& model_;
  std::unique_ptr<Tape> tape_;
  Encoding encoding_;
};

std::vector<Hypothesis> beam_search(const Model& model, const EncodedExample& input, const DecodeConfig& config);
Hypothesis greedy_decode(const Model& model, const EncodedExample& input, std::size_t max_length);

}  // namespace pcgn
