#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "pcgn/cli.hpp"

namespace pcgn {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::size_t to_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw UsageError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    throw UsageError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError(key + ": expected true or false, got '" + v + "'");
}

struct KeyHandler {
  ConfigKey key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<json(const RunConfig&)> get;
};

#define PCGN_COUNT(name, field, help)                                                            \
  KeyHandler{{name, help}, [](RunConfig& c, const std::string& v) { c.field = to_count(name, v); }, \
             [](const RunConfig& c) { return json(c.field); }}
#define PCGN_REAL(name, field, help)                                                            \
  KeyHandler{{name, help}, [](RunConfig& c, const std::string& v) { c.field = to_real(name, v); }, \
             [](const RunConfig& c) { return json(c.field); }}
#define PCGN_TEXT(name, field, help)                                                  \
  KeyHandler{{name, help}, [](RunConfig& c, const std::string& v) { c.field = v; }, \
             [](const RunConfig& c) { return json(c.field); }}

const std::vector<KeyHandler>& handlers() {
  static const std::vector<KeyHandler> table = {
      PCGN_TEXT("preset", preset, "desk or full; supplies the defaults for every other key"),
      PCGN_TEXT("input", input, "raw JSONL corpus read by prepare"),
      PCGN_COUNT("synthetic", synthetic, "prepare: generate this many synthetic records (0 reads input)"),
      PCGN_COUNT("users", users, "prepare: number of synthetic users"),
      PCGN_COUNT("min_tokens", min_tokens, "drop records whose blog or comment is shorter"),
      PCGN_COUNT("min_user_records", min_user_records, "drop users with fewer records"),
      PCGN_COUNT("common_words", common_words, "k common words appended to each description (0 disables)"),
      PCGN_REAL("train_ratio", split_ratios[0], "share of blogs in the training split"),
      PCGN_REAL("dev_ratio", split_ratios[1], "share of blogs in the dev split"),
      PCGN_REAL("test_ratio", split_ratios[2], "share of blogs in the test split"),
      PCGN_TEXT("data_dir", data_dir, "prepared artifacts (defaults to output_dir)"),
      PCGN_TEXT("output_dir", output_dir, "where artifacts are written; PCGN_OUTPUT_DIR overrides the file"),
      PCGN_TEXT("checkpoint", checkpoint, "checkpoint for generate/eval (defaults to <output_dir>/final.ckpt.json)"),
      PCGN_TEXT("split", split, "eval/ablate split: train, dev or test"),
      PCGN_TEXT("variant", variant, "seq2seq, seq2seq+emb, +mem, +coatt or pcgn"),
      PCGN_COUNT("vocab_size", dims.vocab_size, "vocabulary cap including the 4 reserved tokens"),
      PCGN_COUNT("word_dim", dims.word_dim, "word embedding width"),
      PCGN_COUNT("hidden", dims.blog_hidden, "blog encoder and decoder LSTM width"),
      PCGN_COUNT("layers", dims.blog_layers, "blog encoder and decoder depth"),
      PCGN_COUNT("desc_hidden", dims.desc_hidden, "description encoder width"),
      PCGN_COUNT("user_dim", dims.user_dim, "user feature embedding width"),
      PCGN_REAL("init_range", init_range, "parameters start uniform in [-r, r]"),
      PCGN_REAL("lr", optimizer.learning_rate, "SGD learning rate"),
      PCGN_COUNT("batch_size", optimizer.batch_size, "examples per update"),
      PCGN_COUNT("epochs", optimizer.epochs, "maximum training epochs"),
      PCGN_REAL("clip_norm", optimizer.clip_norm, "global gradient norm clip (0 disables)"),
      PCGN_REAL("stop_ppl", stop_ppl, "stop training once the epoch PPL is below this (0 disables)"),
      PCGN_COUNT("beam", decode.beam_size, "beam width"),
      PCGN_COUNT("max_length", decode.max_length, "maximum generated tokens, EOS included"),
      PCGN_REAL("length_penalty", decode.length_penalty, "rank by log_prob / len^p (0 disables)"),
      KeyHandler{{"prune", "stop the beam once B hypotheses have finished"},
                 [](RunConfig& c, const std::string& v) { c.decode.prune = to_bool("prune", v); },
                 [](const RunConfig& c) { return json(c.decode.prune); }},
      KeyHandler{{"seed", "seed for splitting, initialization, shuffling and synthetic data"},
                 [](RunConfig& c, const std::string& v) { c.seed = to_count("seed", v); },
                 [](const RunConfig& c) { return json(c.seed); }},
      PCGN_TEXT("ablate_variants", ablate_variants, "comma-separated variants trained by ablate, in row order"),
  };
  return table;
}

#undef PCGN_COUNT
#undef PCGN_REAL
#undef PCGN_TEXT

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const KeyHandler& h : handlers()) out.push_back(h.key);
    return out;
  }();
  return keys;
}

RunConfig RunConfig::from_preset(const std::string& name) {
  RunConfig c;
  if (name == "desk") {
    c.preset = "desk";
    c.dims = ModelDims::desk(256, 1);
    c.init_range = 0.3;
    c.optimizer.learning_rate = 1.0;
    c.optimizer.batch_size = 4;
    c.optimizer.epochs = 300;
    c.decode.beam_size = 5;
  } else if (name == "full") {
    c.preset = "full";
    c.dims = ModelDims::full(40000, 1);
    c.init_range = 0.08;
    c.optimizer.learning_rate = 0.001;
    c.optimizer.batch_size = 128;
    c.optimizer.epochs = 10;
    c.decode.beam_size = 10;
    c.min_user_records = 50;
    c.common_words = 20;
  } else {
    throw UsageError("unknown preset '" + name + "' (expected desk or full)");
  }
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const KeyHandler& h : handlers()) {
    if (h.key.name == key) {
      h.set(*this, trim(value));
      return;
    }
  }
  throw UsageError("unknown config key '" + key + "'");
}

json RunConfig::to_json() const {
  json j = json::object();
  for (const KeyHandler& h : handlers()) j[h.key.name] = h.get(*this);
  return j;
}

void RunConfig::validate() const {
  try {
    Variant::from_name(variant).validate();
    ModelDims d = dims;
    d.feature_dim = std::max<std::size_t>(d.feature_dim, 1);
    d.validate();
    optimizer.validate();
    decode.validate();
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  if (dims.vocab_size <= kReservedTokens) throw UsageError("vocab_size must exceed the 4 reserved tokens");
  if (!(init_range >= 0.0)) throw UsageError("init_range must be non-negative");
  if (stop_ppl < 0.0) throw UsageError("stop_ppl must be non-negative");
  for (double r : split_ratios) {
    if (!(r > 0.0)) throw UsageError("split ratios must be positive");
  }
  if (std::abs(split_ratios[0] + split_ratios[1] + split_ratios[2] - 1.0) > 1e-9) {
    throw UsageError("train_ratio + dev_ratio + test_ratio must equal 1");
  }
  if (split != "train" && split != "dev" && split != "test") throw UsageError("split must be train, dev or test");
  if (output_dir.empty()) throw UsageError("output_dir must not be empty");
}

std::filesystem::path RunConfig::data_path() const { return data_dir.empty() ? output_dir : data_dir; }

std::filesystem::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? std::filesystem::path(output_dir) / "final.ckpt.json" : std::filesystem::path(checkpoint);
}

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw UsageError("config line " + std::to_string(lineno) + ": missing key");
    out.emplace_back(std::move(key), trim(std::string_view(t).substr(eq + 1)));
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config_text(buf.str());
  } catch (const UsageError& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

RunConfig resolve_config(const std::vector<std::pair<std::string, std::string>>& file_entries,
                         const std::vector<std::pair<std::string, std::string>>& flag_entries) {
  std::string preset = "desk";
  for (const auto& [k, v] : file_entries)
    if (k == "preset") preset = v;
  for (const auto& [k, v] : flag_entries)
    if (k == "preset") preset = v;
  RunConfig config = RunConfig::from_preset(preset);
  for (const auto& [k, v] : file_entries) config.set(k, v);
  if (const char* env = std::getenv("PCGN_OUTPUT_DIR"); env && *env) config.output_dir = env;
  for (const auto& [k, v] : flag_entries) config.set(k, v);
  config.validate();
  return config;
}

std::string format_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  // Widths count UTF-8 code points so non-ASCII text stays aligned in a terminal.
  auto width = [](const std::string& s) {
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char ch) { return (ch & 0xC0) != 0x80; }));
  };
  std::vector<std::size_t> w(header.size(), 0);
  for (std::size_t i = 0; i < header.size(); ++i) w[i] = width(header[i]);
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.size() && i < w.size(); ++i) w[i] = std::max(w[i], width(row[i]));
  auto line = [&](const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const std::string cell = i < cells.size() ? cells[i] : "";
      s += cell;
      if (i + 1 < w.size()) s += std::string(w[i] - width(cell) + 2, ' ');
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s + "\n";
  };
  std::string out = line(header);
  std::string rule;
  for (std::size_t i = 0; i < w.size(); ++i) rule += std::string(w[i], '-') + (i + 1 < w.size() ? "  " : "");
  out += rule + "\n";
  for (const auto& row : rows) out += line(row);
  return out;
}

}  // namespace pcgn
