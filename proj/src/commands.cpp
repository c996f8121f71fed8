#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "pcgn/checkpoint.hpp"
#include "pcgn/cli.hpp"

namespace pcgn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kSplitNames[] = {"train", "dev", "test"};

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": invalid JSON: " + e.what());
  }
}

std::string dataset_text(std::span<const RawRecord> records) {
  std::string s;
  for (const RawRecord& r : records) s += record_to_json(r).dump() + "\n";
  return s;
}

std::vector<RawRecord> read_records(const fs::path& path) {
  try {
    return parse_dataset(path);
  } catch (const DataError& e) {
    if (e.line() == 0) throw;
    throw DataError(path.string() + ":" + std::to_string(e.line()) + ": " + e.what(), e.line());
  }
}

struct Prepared {
  fs::path dir;
  Vocab vocab;
  FeatureSchema schema;
  json manifest;
  std::string checksum;  // of the manifest, which lists every artifact checksum

  std::vector<RawRecord> split(const std::string& name) const { return read_records(dir / (name + ".jsonl")); }
};

Prepared load_prepared(const fs::path& dir) {
  const fs::path manifest = dir / kManifest;
  if (!fs::exists(manifest)) throw DataError("no prepared data in " + dir.string() + " (run `pcgn prepare` first)");
  Prepared p;
  p.dir = dir;
  p.manifest = read_json(manifest);
  p.checksum = file_checksum(manifest);
  try {
    p.vocab = Vocab::from_json(read_json(dir / "vocab.json"));
    p.schema = FeatureSchema::from_json(read_json(dir / "schema.json"));
  } catch (const json::exception& e) {
    throw DataError("malformed vocab or schema in " + dir.string() + ": " + e.what());
  }
  for (const auto& [name, sum] : p.manifest.at("files").items()) {
    const std::string actual = file_checksum(dir / name);
    if (actual != sum.get<std::string>()) {
      throw DataError(name + " checksum " + actual + " does not match the manifest (" + sum.get<std::string>() + ")");
    }
  }
  return p;
}

ModelConfig model_config(const RunConfig& c, const Prepared& p) {
  ModelConfig mc;
  mc.dims = c.dims;
  mc.dims.vocab_size = p.vocab.size();
  mc.dims.feature_dim = p.schema.width();
  mc.variant = Variant::from_name(c.variant);
  mc.init_range = c.init_range;
  return mc;
}

std::string variant_slug(const std::string& name) {
  std::string s;
  for (char ch : name) {
    if (std::isalnum(static_cast<unsigned char>(ch))) s += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    else if (ch == '+') s += s.empty() ? "" : "_";
  }
  return s.empty() ? "variant" : s;
}

std::string comment_text(const Vocab& vocab, const Hypothesis& h) {
  const std::vector<TokenId> ids = h.content();
  return join_tokens(vocab.decode(ids));
}

}  // namespace

// ---------------------------------------------------------------- prepare

PrepareResult cmd_prepare(const RunConfig& c, std::ostream& out) {
  std::vector<RawRecord> records;
  std::string source;
  std::string input_checksum;
  if (c.synthetic > 0) {
    records = synthetic_corpus(c.synthetic, c.users, c.seed);
    source = "synthetic:" + std::to_string(c.synthetic) + "x" + std::to_string(c.users);
    input_checksum = checksum(dataset_text(records));
  } else {
    if (c.input.empty()) throw UsageError("prepare: set --input or --synthetic");
    records = read_records(c.input);
    source = c.input;
    input_checksum = file_checksum(c.input);
  }

  const std::vector<RawRecord> kept = filter_records(records, c.min_tokens, c.min_user_records);
  if (kept.empty()) throw DataError("empty training set: no records survive filtering");
  DatasetSplits splits = split_by_blog(kept, c.split_ratios, c.seed);
  if (splits.train.empty()) throw DataError("empty training set");

  std::array<std::vector<RawRecord>*, 3> parts{&splits.train, &splits.dev, &splits.test};
  if (c.common_words > 0) {
    for (auto* part : parts)
      for (RawRecord& r : *part) r.description = augment_common_words(r, c.common_words);
  }
  const Vocab vocab = build_vocab(splits.train, c.dims.vocab_size);
  const FeatureSchema schema = fit_schema(splits.train);

  const fs::path dir = c.output_dir;
  fs::create_directories(dir);
  json files = json::object();
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string name = std::string(kSplitNames[i]) + ".jsonl";
    write_text(dir / name, dataset_text(*parts[i]));
    files[name] = file_checksum(dir / name);
  }
  write_text(dir / "vocab.json", vocab.to_json().dump(1) + "\n");
  files["vocab.json"] = file_checksum(dir / "vocab.json");
  write_text(dir / "schema.json", schema.to_json().dump(1) + "\n");
  files["schema.json"] = file_checksum(dir / "schema.json");

  auto count = [](const std::vector<const std::vector<RawRecord>*>& sets) {
    std::set<std::string> users;
    std::set<std::vector<std::string>> blogs;
    std::size_t comments = 0;
    for (const auto* s : sets) {
      for (const RawRecord& r : *s) {
        users.insert(r.user_id);
        blogs.insert(r.blog);
        ++comments;
      }
    }
    return std::array<std::size_t, 3>{users.size(), comments, blogs.size()};
  };
  std::array<std::array<std::size_t, 3>, 4> stats{count({parts[0]}), count({parts[1]}), count({parts[2]}),
                                                   count({parts[0], parts[1], parts[2]})};
  const char* row_names[] = {"User", "Comment", "Microblog"};
  std::vector<std::vector<std::string>> rows;
  json counts = json::object();
  for (std::size_t r = 0; r < 3; ++r) {
    std::vector<std::string> row{row_names[r]};
    for (std::size_t col = 0; col < 4; ++col) row.push_back(std::to_string(stats[col][r]));
    rows.push_back(row);
    counts[row_names[r]] = {{"train", stats[0][r]}, {"dev", stats[1][r]}, {"test", stats[2][r]}, {"total", stats[3][r]}};
  }

  PrepareResult result;
  result.train = splits.train.size();
  result.dev = splits.dev.size();
  result.test = splits.test.size();
  result.vocab_size = vocab.size();
  result.feature_dim = schema.width();
  result.report = format_table({"Statistic", "Train", "Dev", "Test", "Total"}, rows);
  write_text(dir / "report.txt", result.report);

  json manifest = {{"format", "pcgn-prepared"},
                   {"source", source},
                   {"input_checksum", input_checksum},
                   {"records_read", records.size()},
                   {"records_kept", kept.size()},
                   {"description_includes_common_words", c.common_words > 0},
                   {"counts", counts},
                   {"files", files},
                   {"config", c.to_json()}};
  write_text(dir / kManifest, manifest.dump(1) + "\n");

  out << "prepared " << kept.size() << " of " << records.size() << " records into " << dir.string() << "\n"
      << "vocabulary " << vocab.size() << " tokens, " << schema.width() << " user features\n\n"
      << result.report;
  return result;
}

// ---------------------------------------------------------------- train

TrainResult cmd_train(const RunConfig& c, std::ostream& out) {
  const Prepared p = load_prepared(c.data_path());
  const std::vector<EncodedExample> train = encode_examples(p.split("train"), p.vocab, p.schema);
  const std::vector<EncodedExample> dev = encode_examples(p.split("dev"), p.vocab, p.schema);
  if (train.empty()) throw DataError("empty training set");

  Model model(model_config(c, p), c.seed);
  OptimizerConfig opt = c.optimizer;
  opt.seed = c.seed;
  Trainer trainer(model, opt);

  const fs::path dir = c.output_dir;
  fs::create_directories(dir);
  TrainResult result;
  result.final_checkpoint = dir / "final.ckpt.json";
  result.best_checkpoint = dir / "best.ckpt.json";

  auto snapshot = [&](std::size_t epochs_run) {
    json run = {{"config", c.to_json()}, {"data_checksum", p.checksum}, {"epochs_run", epochs_run}};
    return Checkpoint{model, p.vocab, p.schema, trainer.step(), std::move(run)};
  };

  std::ofstream log(dir / "train_log.tsv");
  if (!log) throw DataError("cannot write " + (dir / "train_log.tsv").string());
  log << "epoch\tmean_loss\tppl\tdev_ppl\tseconds\n";
  out << model.variant().name() << ": " << model.params().scalar_count() << " parameters, " << train.size()
      << " training examples\n";

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < opt.epochs; ++e) {
    EpochMetrics m;
    try {
      m = trainer.train_epoch(train);
    } catch (const NumericError& err) {
      save_checkpoint(dir / "failed.ckpt.json", snapshot(e));
      throw NumericError(std::string(err.what()) + "; parameters before the failing update saved to " + (dir / "failed.ckpt.json").string());
    }
    result.epochs.push_back(m);
    double dev_ppl = std::nan("");
    if (!dev.empty()) {
      dev_ppl = perplexity(model, dev);
      result.dev_ppl.push_back(dev_ppl);
      if (dev_ppl < best) {
        best = dev_ppl;
        save_checkpoint(result.best_checkpoint, snapshot(e + 1));
      }
    }
    log << m.epoch << '\t' << fixed(m.mean_loss, 6) << '\t' << fixed(m.ppl, 4) << '\t'
        << (dev.empty() ? std::string("-") : fixed(dev_ppl, 4)) << '\t' << fixed(m.seconds, 3) << '\n';
    log.flush();
    const bool stop = c.stop_ppl > 0.0 && m.ppl < c.stop_ppl;
    if (e == 0 || (e + 1) % 10 == 0 || e + 1 == opt.epochs || stop) {
      out << "epoch " << m.epoch << "  loss " << fixed(m.mean_loss, 4) << "  ppl " << fixed(m.ppl, 3);
      if (!dev.empty()) out << "  dev ppl " << fixed(dev_ppl, 3);
      out << "\n";
    }
    if (stop) break;
  }
  save_checkpoint(result.final_checkpoint, snapshot(result.epochs.size()));
  if (dev.empty()) fs::copy_file(result.final_checkpoint, result.best_checkpoint, fs::copy_options::overwrite_existing);
  out << "wrote " << result.final_checkpoint.string() << " and " << result.best_checkpoint.string() << "\n";
  return result;
}

// ---------------------------------------------------------------- generate

GenerateResult cmd_generate(const RunConfig& c, const std::string& blog, const std::vector<std::string>& user_specs,
                            std::size_t top, std::ostream& out) {
  if (user_specs.empty()) throw UsageError("generate: give at least one --user");
  if (top == 0) throw UsageError("generate: --top must be at least 1");
  const std::vector<std::string> blog_tokens = tokenize(blog);
  if (blog_tokens.empty()) throw DataError("generate: empty blog text");

  const Checkpoint ck = load_checkpoint(c.checkpoint_path());
  const std::size_t k = ck.run_config.contains("config") ? ck.run_config["config"].value("common_words", 0) : 0;

  std::map<std::string, RawRecord> known;
  bool loaded_users = false;
  auto dataset_users = [&]() -> const std::map<std::string, RawRecord>& {
    if (!loaded_users) {
      const fs::path dir = c.data_path();
      for (const char* name : kSplitNames) {
        const fs::path path = dir / (std::string(name) + ".jsonl");
        if (!fs::exists(path)) continue;
        for (RawRecord& r : read_records(path)) known.emplace(r.user_id, std::move(r));
      }
      loaded_users = true;
    }
    return known;
  };

  std::vector<UserSpec> users;
  for (std::size_t i = 0; i < user_specs.size(); ++i) {
    const std::string& spec = user_specs[i];
    if (!spec.empty() && spec.front() == '{') {
      json j;
      try {
        j = json::parse(spec);
      } catch (const json::exception& e) {
        throw DataError("user profile is not valid JSON: " + spec);
      }
      if (!j.contains("user_id")) j["user_id"] = "inline" + std::to_string(i + 1);
      if (!j.contains("blog")) j["blog"] = blog;
      if (!j.contains("comment")) j["comment"] = "";
      RawRecord r = record_from_json(j);
      r.description = augment_common_words(r, k);
      users.push_back({r.user_id, std::move(r)});
    } else {
      const auto& table = dataset_users();
      auto it = table.find(spec);
      if (it == table.end()) {
        std::string ids;
        for (const auto& [id, rec] : table) ids += (ids.empty() ? "" : ", ") + id;
        throw DataError("unknown user id '" + spec + "'; available: " + (ids.empty() ? "(no prepared data)" : ids));
      }
      users.push_back({spec, it->second});
    }
  }

  GenerateResult result;
  DecodeConfig decode = c.decode;
  decode.beam_size = std::max(decode.beam_size, top);
  for (UserSpec& u : users) {
    u.profile.blog = blog_tokens;
    u.profile.comment.clear();
    const EncodedExample ex = encode_example(u.profile, ck.vocab, ck.schema, 0);
    std::vector<Hypothesis> hyps = beam_search(ck.model, ex, decode);
    if (hyps.size() > top) hyps.resize(top);
    std::vector<std::string> texts;
    for (const Hypothesis& h : hyps) texts.push_back(comment_text(ck.vocab, h));
    result.users.push_back(u.label);
    result.outputs.push_back(std::move(hyps));
    result.texts.push_back(std::move(texts));
  }

  std::vector<std::string> header{"rank"};
  for (const std::string& u : result.users) header.push_back(u);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t r = 0; r < top; ++r) {
    std::vector<std::string> row{std::to_string(r + 1)};
    for (std::size_t u = 0; u < users.size(); ++u) {
      row.push_back(r < result.outputs[u].size()
                        ? (result.texts[u][r].empty() ? "<empty>" : result.texts[u][r]) + "  (" + fixed(result.outputs[u][r].log_prob, 3) + ")"
                        : "");
    }
    rows.push_back(row);
  }
  result.table = format_table(header, rows);
  out << "blog: " << join_tokens(blog_tokens) << "\nmodel: " << ck.model.variant().name() << "\n\n" << result.table;
  return result;
}

// ---------------------------------------------------------------- eval

EvalResult cmd_eval(const RunConfig& c, const fs::path& dump_pairs, std::ostream& out) {
  const fs::path ck_path = c.checkpoint_path();
  const Checkpoint ck = load_checkpoint(ck_path);
  const Prepared p = load_prepared(c.data_path());
  const std::vector<EncodedExample> data = encode_examples(p.split(c.split), ck.vocab, ck.schema);
  if (data.empty()) throw DataError("eval: split '" + c.split + "' is empty");

  const Evaluation ev = evaluate(ck.model, ck.vocab, data, c.decode);
  EvalResult result;
  result.scores = ev.scores;
  result.report = ev.scores.to_json();
  result.report["split"] = c.split;
  result.report["variant"] = ck.model.variant().name();
  result.report["checkpoint"] = ck_path.string();
  result.report["checkpoint_checksum"] = file_checksum(ck_path);
  result.report["data_checksum"] = p.checksum;
  result.report["config"] = c.to_json();
  result.report["checkpoint_run_config"] = ck.run_config;

  if (!dump_pairs.empty()) {
    std::string tsv = "hypothesis\treference\tlog_prob\n";
    for (std::size_t i = 0; i < ev.pairs.size(); ++i) {
      tsv += join_tokens(ev.pairs[i].hypothesis) + '\t' + join_tokens(ev.pairs[i].reference) + '\t' +
             fixed(ev.hypothesis_log_probs[i], 6) + '\n';
    }
    write_text(dump_pairs, tsv);
  }

  result.table = format_table({"Metric", "Value"}, {{"PPL", fixed(ev.scores.ppl, 4)},
                                                    {"B-2", fixed(ev.scores.bleu2, 4)},
                                                    {"METEOR", fixed(ev.scores.meteor, 4)},
                                                    {"pairs", std::to_string(ev.scores.pairs)}});
  fs::create_directories(c.output_dir);
  write_text(fs::path(c.output_dir) / ("eval_" + c.split + ".json"), result.report.dump(1) + "\n");
  out << ck.model.variant().name() << " on " << c.split << " (checkpoint " << result.report["checkpoint_checksum"].get<std::string>()
      << ")\n\n" << result.table;
  return result;
}

// ---------------------------------------------------------------- ablate

AblateResult cmd_ablate(const RunConfig& c, std::ostream& out) {
  std::vector<std::string> names;
  {
    std::stringstream ss(c.ablate_variants);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char ch) { return std::isspace(ch); }), item.end());
      if (!item.empty()) names.push_back(item);
    }
  }
  if (names.empty()) throw UsageError("ablate: no variants listed");
  for (const std::string& n : names) {
    try {
      Variant::from_name(n);
    } catch (const DomainError& e) {
      throw UsageError(e.what());
    }
  }

  const Prepared p = load_prepared(c.data_path());
  const fs::path dir = c.output_dir;
  fs::create_directories(dir);

  AblateResult result;
  auto render = [&](bool complete) {
    std::vector<std::vector<std::string>> rows;
    json jrows = json::array();
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
      const AblationRow& r = result.rows[i];
      auto cell = [&](double v, double prev, int digits) {
        std::string s = fixed(v, digits);
        if (i > 0) {
          char buf[64];
          std::snprintf(buf, sizeof buf, " (%+.*f)", digits, v - prev);
          s += buf;
        }
        return s;
      };
      const CorpusScores& prev = i > 0 ? result.rows[i - 1].scores : r.scores;
      rows.push_back({r.label, cell(r.scores.ppl, prev.ppl, 2), cell(r.scores.bleu2, prev.bleu2, 3),
                      cell(r.scores.meteor, prev.meteor, 3)});
      json row = r.scores.to_json();
      row["method"] = r.label;
      if (i > 0) {
        row["delta"] = {{"ppl", r.scores.ppl - prev.ppl},
                        {"bleu2", r.scores.bleu2 - prev.bleu2},
                        {"meteor", r.scores.meteor - prev.meteor}};
      }
      jrows.push_back(row);
    }
    result.table = format_table({"Method", "PPL", "B-2", "METEOR"}, rows);
    result.report = {{"split", c.split},
                     {"complete", complete},
                     {"data_checksum", p.checksum},
                     {"config", c.to_json()},
                     {"rows", jrows}};
    write_text(dir / "ablation.json", result.report.dump(1) + "\n");
    write_text(dir / "ablation.txt", result.table);
  };

  for (std::size_t i = 0; i < names.size(); ++i) {
    RunConfig vc = c;
    vc.variant = names[i];
    vc.data_dir = p.dir.string();
    vc.output_dir = (dir / "ablate" / variant_slug(names[i])).string();
    vc.checkpoint.clear();
    const Variant v = Variant::from_name(names[i]);
    std::string label = v.name();
    if (i > 0 && v == Variant::pcgn()) label = "+External";
    out << "== " << label << "\n";
    std::ostringstream quiet;
    cmd_train(vc, out);
    const EvalResult ev = cmd_eval(vc, {}, quiet);
    result.rows.push_back({label, ev.scores});
    render(i + 1 == names.size());
  }
  out << "\n" << result.table;
  return result;
}

}  // namespace pcgn
