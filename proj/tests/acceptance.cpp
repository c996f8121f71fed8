#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "pcgn/checkpoint.hpp"
#include "pcgn/cli.hpp"
#include "pcgn/decoding.hpp"
#include "pcgn/gradcheck.hpp"
#include "pcgn/metrics.hpp"
#include "pcgn/training.hpp"

namespace pcgn {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

Tensor random_tensor(Rng& rng, Shape shape, double range = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-range, range);
  return t;
}

EncodedExample random_input(Rng& rng, std::size_t vocab, std::size_t features, std::size_t comment_len) {
  auto token = [&] { return static_cast<TokenId>(kReservedTokens + rng.index(vocab - kReservedTokens)); };
  EncodedExample ex;
  for (std::size_t i = 0, n = 2 + rng.index(4); i < n; ++i) ex.blog.push_back(token());
  for (std::size_t i = 0, n = 1 + rng.index(3); i < n; ++i) ex.description.push_back(token());
  ex.comment.push_back(kBosId);
  for (std::size_t i = 0; i < comment_len; ++i) ex.comment.push_back(token());
  ex.comment.push_back(kEosId);
  ex.features.assign(features, 0.0);
  ex.features[rng.index(features - 1)] = 1.0;
  ex.features.back() = rng.uniform();
  return ex;
}

// ---------------------------------------------------------------- AC1

struct GradTally {
  double worst = 0.0;
  std::string where;
  std::size_t checks = 0;

  void add(const std::string& name, std::uint64_t seed, double err) {
    ++checks;
    if (err > worst || std::isnan(err)) {
      worst = err;
      where = name + " seed " + std::to_string(seed);
    }
  }
};

LstmCell add_cell(ParameterStore& store, Rng& rng, const std::string& prefix, std::size_t in, std::size_t h) {
  LstmCell cell;
  cell.input_size = in;
  cell.hidden_size = h;
  cell.input_weights = store.add(prefix + ".w_x", random_tensor(rng, {4 * h, in}));
  cell.hidden_weights = store.add(prefix + ".w_h", random_tensor(rng, {4 * h, h}));
  cell.bias = store.add(prefix + ".b", random_tensor(rng, {4 * h}));
  return cell;
}

ModelDims gradcheck_dims() {
  ModelDims d;
  d.vocab_size = 32;
  d.word_dim = 8;
  d.blog_hidden = 16;
  d.blog_layers = 2;
  d.desc_hidden = 8;
  d.feature_dim = 6;
  d.user_dim = 8;
  return d;
}

Outcome ac1_gradients() {
  const auto start = Clock::now();
  constexpr std::uint64_t kSeeds = 20;
  GradTally tally;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    Rng rng(seed);
    {
      ParameterStore s;
      const LstmCell cell = add_cell(s, rng, "lstm", 5, 6);
      const Tensor x0 = random_tensor(rng, {5}), x1 = random_tensor(rng, {5}), w = random_tensor(rng, {6});
      const auto f = [&](Tape& t, const ParameterStore& p) {
        LstmState st = zero_lstm_state(t, 6);
        st = lstm_step(t, p, cell, t.constant(x0), st);
        st = lstm_step(t, p, cell, t.constant(x1), st);
        return dot(add(st.h, st.c), t.constant(w));
      };
      tally.add("lstm", seed, check_gradients(s, f, 1e-3, {}, 0, seed, Stencil::FivePoint).max_relative_error);
    }
    {
      ParameterStore s;
      BiLstm enc;
      for (std::size_t l = 0; l < 2; ++l) {
        enc.forward.push_back(add_cell(s, rng, "fwd" + std::to_string(l), l == 0 ? 4 : 10, 5));
        enc.backward.push_back(add_cell(s, rng, "bwd" + std::to_string(l), l == 0 ? 4 : 10, 5));
      }
      std::vector<Tensor> xs;
      for (int i = 0; i < 3; ++i) xs.push_back(random_tensor(rng, {4}));
      const Tensor w = random_tensor(rng, {10});
      const auto f = [&](Tape& t, const ParameterStore& p) {
        std::vector<Var> in;
        for (const Tensor& x : xs) in.push_back(t.constant(x));
        const auto out = bilstm_encode(t, p, enc, in);
        Var total = dot(out[0], t.constant(w));
        for (std::size_t i = 1; i < out.size(); ++i) total = add(total, dot(out[i], t.constant(w)));
        return total;
      };
      tally.add("bilstm", seed, check_gradients(s, f, 1e-3, {}, 0, seed, Stencil::FivePoint).max_relative_error);
    }
    {
      ParameterStore s;
      const ParamId q = s.add("query", random_tensor(rng, {4}));
      const ParamId states = s.add("states", random_tensor(rng, {5, 6}));
      const ParamId bilinear = s.add("w_a", random_tensor(rng, {4, 6}));
      const Tensor wc = random_tensor(rng, {6}), wa = random_tensor(rng, {5});
      const auto f = [&](Tape& t, const ParameterStore& p) {
        const AttentionResult r =
            attention_context(t.param(p, q), make_attention_memory(t.param(p, states), t.param(p, bilinear)));
        return add(dot(r.context, t.constant(wc)), dot(r.weights, t.constant(wa)));
      };
      tally.add("attention", seed, check_gradients(s, f, 1e-3, {}, 0, seed, Stencil::FivePoint).max_relative_error);
    }
    {
      ParameterStore s;
      const ParamId state = s.add("s_t", random_tensor(rng, {4}));
      const ParamId prev = s.add("s_prev", random_tensor(rng, {4}));
      const ParamId emb = s.add("e_prev", random_tensor(rng, {3}));
      const ParamId ctx = s.add("c_x", random_tensor(rng, {8}));
      const ParamId mem = s.add("m_prev", random_tensor(rng, {5}));
      const ParamId wu = s.add("w_u", random_tensor(rng, {5, 4}));
      const ParamId wo = s.add("w_o", random_tensor(rng, {5, 15}));
      const Tensor a = random_tensor(rng, {5}), b = random_tensor(rng, {5});
      const auto f = [&](Tape& t, const ParameterStore& p) {
        const GatedMemoryResult r = gated_memory_step(t.param(p, state), t.param(p, prev), t.param(p, emb),
                                                      t.param(p, ctx), t.param(p, mem), t.param(p, wu), t.param(p, wo));
        return add(dot(r.memory, t.constant(a)), dot(r.output, t.constant(b)));
      };
      tally.add("gated_memory", seed, check_gradients(s, f, 1e-3, {}, 0, seed, Stencil::FivePoint).max_relative_error);
    }
    {
      Model m(ModelConfig{gradcheck_dims(), Variant::pcgn(), 0.5}, seed);
      const EncodedExample ex = random_input(rng, 32, 6, 0);
      const Tensor w = random_tensor(rng, {8});
      const auto f = [&](Tape& t, const ParameterStore&) { return dot(user_embed(t, m, ex.features), t.constant(w)); };
      tally.add("user_embed", seed,
                check_gradients(m.params(), f, 1e-3, {*m.ids().user_weights, *m.ids().user_bias}, 0, seed, Stencil::FivePoint).max_relative_error);
    }
    {
      const Variant v = seed % 2 ? Variant::pcgn() : Variant::seq2seq_emb();
      Model m(ModelConfig{gradcheck_dims(), v, 0.5}, seed);
      const EncodedExample ex = random_input(rng, 32, 6, 0);
      const TokenId target = static_cast<TokenId>(rng.index(32));
      const auto f = [&](Tape& t, const ParameterStore&) {
        const Encoding enc = encode_input(t, m, ex);
        const DecoderStep step = decoder_step(t, m, enc, enc.initial, kBosId);
        return pick(log_softmax(step.logits), target);
      };
      const GradCheckReport r = check_gradients(m.params(), f, 1e-3, {}, 3, seed, Stencil::FivePoint);
      tally.add("decoder_step " + v.name(), seed, r.max_relative_error);
    }
    {
      Model m(ModelConfig{gradcheck_dims(), Variant::pcgn(), 0.5}, seed);
      const EncodedExample ex = random_input(rng, 32, 6, 3);
      const auto f = [&](Tape& t, const ParameterStore&) { return sequence_loss(t, m, ex); };
      const GradCheckReport r = check_gradients(m.params(), f, 1e-3, {}, 4, seed, Stencil::FivePoint);
      tally.add("full PCGN loss (" + r.worst_parameter + ")", seed, r.max_relative_error);
    }
  }
  const double secs = seconds_since(start);
  Outcome o;
  o.pass = tally.worst < 1e-4 && secs < 120.0;
  o.detail = std::to_string(tally.checks) + " checks over " + std::to_string(kSeeds) + " seeds, max rel err " +
             fmt("%.2e", tally.worst) + " (" + tally.where + "), limit 1e-4; " + fmt("%.1f", secs) + " s of 120 s";
  return o;
}

// ---------------------------------------------------------------- shared synthetic setup

struct Synthetic {
  std::vector<RawRecord> records;
  Vocab vocab;
  FeatureSchema schema;
  std::vector<EncodedExample> data;
};

Synthetic synthetic_setup() {
  Synthetic s;
  s.records = synthetic_corpus(32, 4, 1);
  const RunConfig desk = RunConfig::from_preset("desk");
  s.vocab = build_vocab(s.records, desk.dims.vocab_size);
  s.schema = fit_schema(s.records);
  s.data = encode_examples(s.records, s.vocab, s.schema, 20);
  return s;
}

ModelConfig desk_model(const Synthetic& s, Variant v) {
  const RunConfig desk = RunConfig::from_preset("desk");
  ModelDims d = desk.dims;
  d.vocab_size = s.vocab.size();
  d.feature_dim = s.schema.width();
  return ModelConfig{d, v, desk.init_range};
}

struct TrainOutcome {
  std::size_t epochs = 0;
  double ppl = 0.0;
  double seconds = 0.0;
};

TrainOutcome train_desk(Model& model, const Synthetic& s, std::size_t max_epochs, double stop_below) {
  const auto start = Clock::now();
  OptimizerConfig oc = RunConfig::from_preset("desk").optimizer;
  oc.seed = 1;
  Trainer trainer(model, oc);
  TrainOutcome out;
  for (std::size_t e = 0; e < max_epochs; ++e) {
    trainer.train_epoch(s.data);
    out.epochs = e + 1;
    out.ppl = perplexity(model, s.data);
    if (out.ppl < stop_below) break;
  }
  out.seconds = seconds_since(start);
  return out;
}

// ---------------------------------------------------------------- AC2

Outcome ac2_overfit(Model& pcgn, const Synthetic& s) {
  const TrainOutcome t = train_desk(pcgn, s, 500, 1.3);
  Outcome o;
  o.pass = t.ppl < 1.3 && t.epochs <= 500 && t.seconds < 300.0;
  o.detail = "training PPL " + fmt("%.4f", t.ppl) + " after " + std::to_string(t.epochs) +
             " epochs (limit < 1.3 within 500), V=" + std::to_string(s.vocab.size()) + "; " + fmt("%.1f", t.seconds) +
             " s of 300 s";
  return o;
}

// ---------------------------------------------------------------- AC3

double position_ppl(const Model& m, const Synthetic& s) {
  double total = 0.0;
  for (const EncodedExample& ex : s.data) total += token_losses(m, ex).at(kSyntheticUserTokenPosition);
  return std::exp(total / static_cast<double>(s.data.size()));
}

Outcome ac3_separability(const Model& seq2seq, const Model& pcgn, const Synthetic& s) {
  const double a = position_ppl(seq2seq, s), b = position_ppl(pcgn, s);
  Outcome o;
  o.pass = a > 2.5 && b < 1.5;
  o.detail = "user-token PPL Seq2Seq " + fmt("%.3f", a) + " (limit > 2.5), PCGN " + fmt("%.3f", b) + " (limit < 1.5)";
  return o;
}

// ---------------------------------------------------------------- AC4

Outcome ac4_invariance(const Model& trained, const Synthetic& s) {
  const fs::path dir = fs::temp_directory_path() / "pcgn_acceptance";
  fs::create_directories(dir);
  std::vector<Model> models;
  save_checkpoint(dir / "seq2seq.ckpt.json", Checkpoint{trained, s.vocab, s.schema, 0, nlohmann::json::object()});
  models.push_back(load_checkpoint(dir / "seq2seq.ckpt.json").model);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) models.push_back(Model(desk_model(s, Variant::seq2seq()), seed));

  std::map<std::string, const RawRecord*> profiles;
  for (const RawRecord& r : s.records) profiles.emplace(r.user_id, &r);
  std::set<std::vector<std::string>> blogs;
  for (const RawRecord& r : s.records) blogs.insert(r.blog);

  Rng rng(7);
  DecodeConfig dc = RunConfig::from_preset("desk").decode;
  std::size_t comparisons = 0;
  bool same = true;
  for (const Model& m : models) {
    for (const auto& blog : blogs) {
      std::vector<EncodedExample> inputs;
      for (const auto& [id, rec] : profiles) {
        RawRecord r = *rec;
        r.blog = blog;
        inputs.push_back(encode_example(r, s.vocab, s.schema, 20));
      }
      for (int i = 0; i < 3; ++i) {
        EncodedExample ex = inputs.front();
        ex.features.assign(s.schema.width(), 0.0);
        ex.features[rng.index(s.schema.width() - 1)] = 1.0;
        ex.features.back() = rng.uniform();
        ex.description = {static_cast<TokenId>(kReservedTokens + rng.index(s.vocab.size() - kReservedTokens))};
        inputs.push_back(ex);
      }
      const auto reference = beam_search(m, inputs.front(), dc);
      for (std::size_t i = 1; i < inputs.size(); ++i) {
        same = same && beam_search(m, inputs[i], dc) == reference;
        ++comparisons;
      }
    }
  }
  Outcome o;
  o.pass = same;
  o.detail = std::to_string(comparisons) + " profile comparisons over " + std::to_string(models.size()) +
             " checkpoints and " + std::to_string(blogs.size()) + " blogs, " + (same ? "all" : "NOT all") +
             " beam lists bitwise identical";
  return o;
}

// ---------------------------------------------------------------- AC5

// Masked next-token log-probabilities, rebuilt from scratch for every prefix.
std::vector<double> oracle_log_probs(const Model& m, const EncodedExample& input, const std::vector<TokenId>& prefix) {
  Tape tape;
  const Encoding enc = encode_input(tape, m, input);
  DecoderState state = enc.initial;
  TokenId prev = kBosId;
  Tensor logits;
  for (std::size_t i = 0; i <= prefix.size(); ++i) {
    const DecoderStep step = decoder_step(tape, m, enc, state, prev);
    logits = step.logits.value();
    state = step.state;
    if (i < prefix.size()) prev = prefix[i];
  }
  double mx = kNegInf;
  for (std::size_t v = kEosId; v < logits.size(); ++v) mx = std::max(mx, logits[v]);
  double z = 0.0;
  for (std::size_t v = kEosId; v < logits.size(); ++v) z += std::exp(logits[v] - mx);
  std::vector<double> out(logits.size(), kNegInf);
  for (std::size_t v = kEosId; v < logits.size(); ++v) out[v] = logits[v] - mx - std::log(z);
  return out;
}

struct Best {
  std::vector<TokenId> tokens;
  double log_prob = kNegInf;
  std::size_t sequences = 0;
};

void enumerate(const Model& m, const EncodedExample& input, std::size_t max_len, std::vector<TokenId>& prefix,
               double lp, Best& best) {
  const std::vector<double> next = oracle_log_probs(m, input, prefix);
  for (std::size_t v = kEosId; v < next.size(); ++v) {
    prefix.push_back(static_cast<TokenId>(v));
    const double total = lp + next[v];
    if (v == kEosId || prefix.size() == max_len) {
      ++best.sequences;
      if (total > best.log_prob || (total == best.log_prob && prefix < best.tokens)) {
        best.log_prob = total;
        best.tokens = prefix;
      }
    } else {
      enumerate(m, input, max_len, prefix, total, best);
    }
    prefix.pop_back();
  }
}

Outcome ac5_beam_oracle() {
  const std::vector<Variant> variants{Variant::seq2seq(), Variant::seq2seq_emb(), Variant::with_memory(),
                                      Variant::with_coattention(), Variant::pcgn()};
  std::size_t exact = 0, greedy_exact = 0, sequences = 0;
  double worst_lp = 0.0;
  constexpr std::size_t kModels = 50;
  Rng rng(11);
  for (std::size_t i = 0; i < kModels; ++i) {
    ModelDims d = ModelDims::desk(kReservedTokens + 2, 5);
    const Model m(ModelConfig{d, variants[i % variants.size()], 1.0}, 100 + i);
    const EncodedExample input = random_input(rng, d.vocab_size, 5, 1);
    DecodeConfig dc;
    dc.beam_size = 40;
    dc.max_length = 3;
    dc.length_penalty = 0.0;
    const auto beam = beam_search(m, input, dc);
    Best best;
    std::vector<TokenId> prefix;
    enumerate(m, input, 3, prefix, 0.0, best);
    sequences = best.sequences;
    if (!beam.empty() && beam[0].tokens == best.tokens) ++exact;
    if (!beam.empty()) worst_lp = std::max(worst_lp, std::abs(beam[0].log_prob - best.log_prob));

    bool greedy_same = true;
    for (std::size_t len : {3u, 8u}) {
      dc.beam_size = 1;
      dc.max_length = len;
      const auto one = beam_search(m, input, dc);
      greedy_same = greedy_same && one.size() == 1 && one[0] == greedy_decode(m, input, len);
    }
    greedy_exact += greedy_same;
  }
  Outcome o;
  o.pass = exact == kModels && greedy_exact == kModels;
  o.detail = "rank-1 equals enumeration argmax on " + std::to_string(exact) + "/" + std::to_string(kModels) +
             " models (" + std::to_string(sequences) + " sequences each, 3 emittable tokens, max |dlogp| " +
             fmt("%.1e", worst_lp) + "); B=1 equals greedy on " + std::to_string(greedy_exact) + "/" +
             std::to_string(kModels);
  return o;
}

// ---------------------------------------------------------------- AC6

Outcome ac6_memory_decay() {
  constexpr int kRollouts = 100;
  constexpr std::size_t kSteps = 12;
  Rng rng(13);
  bool monotone = true;
  double worst = 0.0;
  for (int r = 0; r < kRollouts; ++r) {
    ModelDims d = ModelDims::desk(20, 6);
    const Variant v = r % 2 ? Variant::pcgn() : Variant::with_memory();
    const Model m(ModelConfig{d, v, 0.5}, 200 + static_cast<std::uint64_t>(r));
    const EncodedExample input = random_input(rng, 20, 6, 0);
    Tape tape;
    const Encoding enc = encode_input(tape, m, input);
    const Tensor m0 = enc.initial.memory->value();
    Tensor product(m0.shape(), 1.0);
    DecoderState state = enc.initial;
    TokenId prev = kBosId;
    for (std::size_t t = 0; t < kSteps; ++t) {
      const DecoderStep step = decoder_step(tape, m, enc, state, prev);
      const Tensor& before = state.memory->value();
      const Tensor& after = step.state.memory->value();
      const Tensor& gate = step.update_gate->value();
      for (std::size_t i = 0; i < after.size(); ++i) {
        monotone = monotone && std::abs(after[i]) <= std::abs(before[i]);
        product[i] *= gate[i];
      }
      state = step.state;
      prev = static_cast<TokenId>(kReservedTokens + rng.index(16));
    }
    const Tensor& final_memory = state.memory->value();
    for (std::size_t i = 0; i < m0.size(); ++i) worst = std::max(worst, std::abs(final_memory[i] - product[i] * m0[i]));
  }
  Outcome o;
  o.pass = monotone && worst <= 1e-10;
  o.detail = std::to_string(kRollouts) + " rollouts of " + std::to_string(kSteps) + " steps: |M_t| " +
             (monotone ? "non-increasing" : "INCREASED") + " elementwise, max |M_T - prod(g_u) M_0| " +
             fmt("%.1e", worst) + " (limit 1e-10)";
  return o;
}

// ---------------------------------------------------------------- AC7

Outcome ac7_metrics(const Synthetic& s) {
  using W = std::vector<std::string>;
  auto bleu = [](const W& h, const W& r) {
    const std::vector<EvalPair> p{{h, r}};
    return bleu2(p);
  };
  struct Case {
    std::string name;
    double got;
    double want;
  };
  const std::vector<Case> cases{
      {"bleu2 identity", bleu({"the", "cat", "sat", "down"}, {"the", "cat", "sat", "down"}), 1.0},
      {"bleu2 'the the'/'the cat'", bleu({"the", "the"}, {"the", "cat"}), 0.0},
      {"bleu2 'a b'/'a b c d'", bleu({"a", "b"}, {"a", "b", "c", "d"}), std::exp(-1.0)},
      {"meteor identity of 3", meteor_pair({"x", "y", "z"}, {"x", "y", "z"}).score, 1.0 - 0.5 / 27.0},
      {"meteor 'b a'/'a b'", meteor_pair({"b", "a"}, {"a", "b"}).score, 0.5},
  };
  double worst = 0.0;
  std::string where;
  for (const Case& c : cases) {
    const double err = std::abs(c.got - c.want);
    if (err > worst || std::isnan(c.got)) {
      worst = err;
      where = c.name;
    }
  }
  Model uniform(desk_model(s, Variant::pcgn()), 3);
  const ParamId head = *uniform.ids().external_output;
  uniform.params().value(head) = Tensor(uniform.params().value(head).shape(), 0.0);
  const double v = static_cast<double>(s.vocab.size());
  const double ppl_rel = std::abs(perplexity(uniform, s.data) - v) / v;
  Outcome o;
  o.pass = worst <= 1e-9 && ppl_rel <= 1e-9;
  o.detail = std::to_string(cases.size()) + " metric values, max abs err " + fmt("%.1e", worst) +
             (where.empty() ? "" : " (" + where + ")") + " (limit 1e-9); uniform-model PPL rel err " +
             fmt("%.1e", ppl_rel) + " vs V=" + std::to_string(s.vocab.size()) + " (limit 1e-9)";
  return o;
}

// ---------------------------------------------------------------- AC8

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome ac8_ablation(const Model& pcgn, const Synthetic& s) {
  const auto start = Clock::now();
  const fs::path dir = fs::temp_directory_path() / "pcgn_acceptance" / "ablate";
  fs::remove_all(dir);
  RunConfig c = RunConfig::from_preset("desk");
  c.synthetic = 32;
  c.users = 4;
  c.common_words = 20;
  c.output_dir = dir.string();
  c.seed = 1;
  std::ostringstream sink;
  cmd_prepare(c, sink);

  const AblateResult first = cmd_ablate(c, sink);
  const std::string json1 = slurp(dir / "ablation.json"), text1 = slurp(dir / "ablation.txt");
  std::map<fs::path, std::string> ckpt1;
  for (const auto& e : fs::recursive_directory_iterator(dir / "ablate"))
    if (e.path().filename() == "final.ckpt.json") ckpt1[e.path()] = file_checksum(e.path());
  const AblateResult second = cmd_ablate(c, sink);
  bool identical = json1 == slurp(dir / "ablation.json") && text1 == slurp(dir / "ablation.txt") && !ckpt1.empty();
  for (const auto& [path, sum] : ckpt1) identical = identical && file_checksum(path) == sum;

  const std::vector<std::string> want{"Seq2Seq", "+Mem", "+CoAtt", "+External"};
  bool shape = first.rows.size() == want.size();
  for (std::size_t i = 0; shape && i < want.size(); ++i) shape = first.rows[i].label == want[i];
  std::istringstream lines(text1);
  std::string line;
  std::size_t delta_rows = 0;
  while (std::getline(lines, line))
    if (line.find("(+") != std::string::npos || line.find("(-") != std::string::npos) ++delta_rows;
  shape = shape && delta_rows == want.size() - 1;

  const fs::path ck = fs::temp_directory_path() / "pcgn_acceptance" / "pcgn.ckpt.json";
  save_checkpoint(ck, Checkpoint{pcgn, s.vocab, s.schema, 0, nlohmann::json::object()});
  const Checkpoint loaded = load_checkpoint(ck);
  const DecodeConfig dc = c.decode;
  bool generation = true;
  for (const EncodedExample& ex : s.data) generation = generation && beam_search(pcgn, ex, dc) == beam_search(loaded.model, ex, dc);

  std::string table_rows;
  for (const AblationRow& r : first.rows) table_rows += (table_rows.empty() ? "" : ", ") + r.label + " " + fmt("%.2f", r.scores.ppl);
  Outcome o;
  o.pass = shape && identical && generation && second.rows.size() == first.rows.size();
  o.detail = std::to_string(first.rows.size()) + " rows [" + table_rows + "], " + std::to_string(delta_rows) +
             " delta rows; rerun " + (identical ? "bitwise identical" : "DIFFERS") + " (" +
             std::to_string(ckpt1.size()) + " checkpoints + report); save/load generation " +
             (generation ? "bitwise identical" : "DIFFERS") + " on " + std::to_string(s.data.size()) + " inputs; " +
             fmt("%.1f", seconds_since(start)) + " s";
  return o;
}

bool report(const std::string& id, const std::string& title, const std::function<Outcome()>& run) {
  Outcome o;
  try {
    o = run();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << "  " << title << ": " << o.detail << std::endl;
  return o.pass;
}

}  // namespace
}  // namespace pcgn

int main() {
  using namespace pcgn;
  bool all = true;
  all &= report("AC1", "gradient correctness", ac1_gradients);

  const Synthetic s = synthetic_setup();
  Model pcgn(desk_model(s, Variant::pcgn()), 1);
  Model seq2seq(desk_model(s, Variant::seq2seq()), 1);
  all &= report("AC2", "overfit sanity", [&] { return ac2_overfit(pcgn, s); });
  all &= report("AC3", "user separability", [&] {
    train_desk(seq2seq, s, 500, 0.0);
    return ac3_separability(seq2seq, pcgn, s);
  });
  all &= report("AC4", "Seq2Seq invariance", [&] { return ac4_invariance(seq2seq, s); });
  all &= report("AC5", "beam-search oracle", ac5_beam_oracle);
  all &= report("AC6", "gated-memory decay", ac6_memory_decay);
  all &= report("AC7", "metric unit values", [&] { return ac7_metrics(s); });
  all &= report("AC8", "ablation harness", [&] { return ac8_ablation(pcgn, s); });
  return all ? 0 : 1;
}
