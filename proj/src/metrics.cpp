#include "pcgn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "pcgn/training.hpp"

namespace pcgn {

nlohmann::json CorpusScores::to_json() const {
  return nlohmann::json{{"ppl", ppl}, {"bleu2", bleu2}, {"meteor", meteor}, {"pairs", pairs}};
}

double perplexity(const Model& model, std::span<const EncodedExample> data) {
  if (data.empty()) throw DataError("perplexity: empty dataset");
  const LossTotals totals = total_loss(model, data);
  return std::exp(totals.loss / static_cast<double>(totals.tokens));
}

// ---------------------------------------------------------------- BLEU-2

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(const std::vector<std::string>& tokens, std::size_t n) {
  std::map<Ngram, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) ++counts[Ngram(tokens.begin() + i, tokens.begin() + i + n)];
  return counts;
}

std::size_t clipped_matches(const std::vector<std::string>& hyp, const std::vector<std::string>& ref, std::size_t n) {
  const auto h = ngram_counts(hyp, n);
  const auto r = ngram_counts(ref, n);
  std::size_t matches = 0;
  for (const auto& [gram, count] : h) {
    auto it = r.find(gram);
    if (it != r.end()) matches += std::min(count, it->second);
  }
  return matches;
}

}  // namespace

double bleu2(std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw DomainError("bleu2: no pairs");
  std::size_t match1 = 0, match2 = 0, total1 = 0, total2 = 0, hyp_len = 0, ref_len = 0;
  for (const EvalPair& p : pairs) {
    if (p.reference.empty()) throw DomainError("bleu2: empty reference");
    match1 += clipped_matches(p.hypothesis, p.reference, 1);
    match2 += clipped_matches(p.hypothesis, p.reference, 2);
    total1 += p.hypothesis.size();
    total2 += p.hypothesis.size() >= 2 ? p.hypothesis.size() - 1 : 0;
    hyp_len += p.hypothesis.size();
    ref_len += p.reference.size();
  }
  if (match1 == 0 || match2 == 0) return 0.0;
  const double p1 = static_cast<double>(match1) / static_cast<double>(total1);
  const double p2 = static_cast<double>(match2) / static_cast<double>(total2);
  const double bp = std::min(1.0, std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len)));
  return bp * std::exp(0.5 * std::log(p1) + 0.5 * std::log(p2));
}

// ---------------------------------------------------------------- METEOR

MeteorStats meteor_pair(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
  MeteorStats stats;
  if (hyp.empty() || ref.empty()) return stats;
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<bool> used(ref.size(), false);
  std::vector<std::size_t> align(hyp.size(), kNone);
  // Left to right over the hypothesis: continue the current chunk when the next reference
  // position matches, otherwise take the leftmost unused match.
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    std::size_t choice = kNone;
    if (i > 0 && align[i - 1] != kNone) {
      const std::size_t next = align[i - 1] + 1;
      if (next < ref.size() && !used[next] && ref[next] == hyp[i]) choice = next;
    }
    if (choice == kNone) {
      for (std::size_t j = 0; j < ref.size(); ++j) {
        if (!used[j] && ref[j] == hyp[i]) {
          choice = j;
          break;
        }
      }
    }
    if (choice != kNone) {
      used[choice] = true;
      align[i] = choice;
      ++stats.matches;
    }
  }
  if (stats.matches == 0) return stats;

  std::size_t prev = kNone;
  bool prev_aligned = false;
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    if (align[i] == kNone) {
      prev_aligned = false;
      continue;
    }
    if (!prev_aligned || align[i] != prev + 1) ++stats.chunks;
    prev = align[i];
    prev_aligned = true;
  }

  const double m = static_cast<double>(stats.matches);
  const double precision = m / static_cast<double>(hyp.size());
  const double recall = m / static_cast<double>(ref.size());
  const double fmean = 10.0 * precision * recall / (recall + 9.0 * precision);
  const double penalty = 0.5 * std::pow(static_cast<double>(stats.chunks) / m, 3.0);
  stats.score = fmean * (1.0 - penalty);
  return stats;
}

double meteor_lite(std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw DomainError("meteor_lite: no pairs");
  double total = 0.0;
  for (const EvalPair& p : pairs) total += meteor_pair(p.hypothesis, p.reference).score;
  return total / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------- corpus evaluation

Evaluation evaluate(const Model& model, const Vocab& vocab, std::span<const EncodedExample> data,
                    const DecodeConfig& decode) {
  if (data.empty()) throw DataError("evaluate: empty dataset");
  Evaluation ev;
  for (const EncodedExample& ex : data) {
    std::vector<Hypothesis> beams = beam_search(model, ex, decode);
    const Hypothesis& best = beams.front();
    std::vector<TokenId> gold(ex.comment.begin() + 1, ex.comment.end() - 1);
    const std::vector<TokenId> hyp_ids = best.content();
    ev.pairs.push_back(EvalPair{vocab.decode(hyp_ids), vocab.decode(gold)});
    ev.hypothesis_log_probs.push_back(best.log_prob);
  }
  ev.scores.ppl = perplexity(model, data);
  ev.scores.bleu2 = bleu2(ev.pairs);
  ev.scores.meteor = meteor_lite(ev.pairs);
  ev.scores.pairs = ev.pairs.size();
  return ev;
}

}  // namespace pcgn
