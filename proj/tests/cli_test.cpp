#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "pcgn/checkpoint.hpp"
#include "pcgn/cli.hpp"

namespace pcgn {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "pcgn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "pcgn_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> small_run(const fs::path& dir) {
  return {"--output-dir", dir.string(), "--epochs", "3", "--word-dim", "6", "--hidden", "8", "--desc-hidden", "4",
          "--user-dim", "4", "--beam", "3", "--max-length", "6"};
}

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

const fs::path& prepared_sample() {
  static const fs::path dir = [] {
    const fs::path d = fresh_dir("sample");
    const CliRun r = run({"prepare", "--input", PCGN_SAMPLE_DATA, "--output-dir", d.string()});
    EXPECT_EQ(r.code, kExitOk) << r.err;
    return d;
  }();
  return dir;
}

TEST(Config, FlagsOverrideFileOverridePreset) {
  const auto file = parse_config_text("# comment\nlr = 0.5\nbeam = 7\n\nvariant = seq2seq\n");
  const RunConfig c = resolve_config(file, {{"beam", "3"}});
  EXPECT_EQ(c.optimizer.learning_rate, 0.5);
  EXPECT_EQ(c.decode.beam_size, 3u);
  EXPECT_EQ(c.variant, "seq2seq");
  EXPECT_EQ(c.optimizer.batch_size, RunConfig::from_preset("desk").optimizer.batch_size);
}

TEST(Config, PresetComesFromFlagsThenFile) {
  EXPECT_EQ(resolve_config({{"preset", "full"}}, {}).decode.beam_size, 10u);
  EXPECT_EQ(resolve_config({{"preset", "full"}}, {{"preset", "desk"}}).decode.beam_size,
            RunConfig::from_preset("desk").decode.beam_size);
  const RunConfig full = RunConfig::from_preset("full");
  EXPECT_EQ(full.dims.blog_hidden, 512u);
  EXPECT_EQ(full.init_range, 0.08);
  EXPECT_THROW(RunConfig::from_preset("huge"), UsageError);
}

TEST(Config, EnvironmentSitsBetweenFileAndFlags) {
  ::setenv("PCGN_OUTPUT_DIR", "from_env", 1);
  EXPECT_EQ(resolve_config({{"output_dir", "from_file"}}, {}).output_dir, "from_env");
  EXPECT_EQ(resolve_config({{"output_dir", "from_file"}}, {{"output_dir", "from_flag"}}).output_dir, "from_flag");
  ::unsetenv("PCGN_OUTPUT_DIR");
  EXPECT_EQ(resolve_config({{"output_dir", "from_file"}}, {}).output_dir, "from_file");
}

TEST(Config, BadEntriesAreUsageErrors) {
  EXPECT_THROW(parse_config_text("lr 0.5\n"), UsageError);
  EXPECT_THROW(resolve_config({{"learning_speed", "1"}}, {}), UsageError);
  EXPECT_THROW(resolve_config({{"beam", "wide"}}, {}), UsageError);
  EXPECT_THROW(resolve_config({}, {{"train_ratio", "0.9"}}), UsageError);
  EXPECT_THROW(resolve_config({}, {{"split", "validation"}}), UsageError);
}

TEST(Config, SetAndSerializeEveryKey) {
  const RunConfig c = RunConfig::from_preset("desk");
  const nlohmann::json j = c.to_json();
  for (const ConfigKey& k : config_keys()) {
    ASSERT_TRUE(j.contains(k.name)) << k.name;
    RunConfig copy = c;
    const nlohmann::json& v = j.at(k.name);
    copy.set(k.name, v.is_string() ? v.get<std::string>() : v.dump());
    EXPECT_EQ(copy.to_json(), j) << k.name;
  }
}

TEST(Cli, UnknownConfigKeyInFileExitsOne) {
  const fs::path dir = fresh_dir("badkey");
  std::ofstream(dir / "run.cfg") << "epochs = 2\nwarp_speed = 9\n";
  const CliRun r = run({"keys", "-c", (dir / "run.cfg").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("warp_speed"), std::string::npos) << r.err;
}

TEST(Cli, ParseErrorsExitOne) {
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"train", "--no-such-flag", "1"}).code, kExitUsage);
  EXPECT_EQ(run({"generate", "--blog", "x"}).code, kExitUsage);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST(Cli, KeysListsResolvedValues) {
  const CliRun r = run({"keys", "--beam", "4"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("beam"), std::string::npos);
  EXPECT_NE(r.out.find("ablate_variants"), std::string::npos);
}

TEST(Prepare, SampleProducesThreeSplitsAndReport) {
  const fs::path& dir = prepared_sample();
  for (const char* f : {"train.jsonl", "dev.jsonl", "test.jsonl", "vocab.json", "schema.json", "manifest.json",
                        "report.txt"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  EXPECT_FALSE(slurp(dir / "dev.jsonl").empty());
  EXPECT_FALSE(slurp(dir / "test.jsonl").empty());
  const std::string report = slurp(dir / "report.txt");
  for (const char* row : {"User", "Comment", "Microblog", "Train", "Dev", "Test"})
    EXPECT_NE(report.find(row), std::string::npos) << row;
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest.at("input_checksum").get<std::string>(), file_checksum(PCGN_SAMPLE_DATA));
}

TEST(Prepare, RerunGivesIdenticalArtifacts) {
  const fs::path dir = fresh_dir("prepare_again");
  const CliRun r = run({"prepare", "--input", PCGN_SAMPLE_DATA, "--output-dir", dir.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* f : {"train.jsonl", "dev.jsonl", "test.jsonl", "vocab.json", "schema.json", "report.txt"})
    EXPECT_EQ(file_checksum(dir / f), file_checksum(prepared_sample() / f)) << f;
}

TEST(Prepare, DegenerateInputReportsEmptyTrainingSet) {
  const fs::path dir = fresh_dir("degenerate");
  std::ofstream f(dir / "in.jsonl");
  for (int i = 0; i < 6; ++i)
    f << R"({"blog":"blog )" << i << R"( here","comment":"wow","user_id":"u)" << i % 2 << "\"}\n";
  f.close();
  const CliRun r = run({"prepare", "--input", (dir / "in.jsonl").string(), "--output-dir", dir.string()});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("empty training set"), std::string::npos) << r.err;
}

TEST(Prepare, MalformedLineNamesFileAndLine) {
  const fs::path dir = fresh_dir("malformed");
  std::ofstream(dir / "in.jsonl") << R"({"blog":"a b","comment":"c d","user_id":"u"})" << "\n{oops\n";
  const CliRun r = run({"prepare", "--input", (dir / "in.jsonl").string(), "--output-dir", dir.string()});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("in.jsonl:2"), std::string::npos) << r.err;
}

TEST(Train, Seq2SeqCheckpointHasNoUserParameters) {
  const fs::path dir = fresh_dir("train_s2s");
  fs::copy(prepared_sample(), dir, fs::copy_options::overwrite_existing | fs::copy_options::recursive);
  const CliRun r = run(with({"train", "--variant", "seq2seq"}, small_run(dir)));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const Checkpoint ck = load_checkpoint(dir / "final.ckpt.json");
  for (ParamId id = 0; id < ck.model.params().size(); ++id) {
    const std::string& name = ck.model.params().name(id);
    EXPECT_NE(name.rfind("user", 0), 0u) << name;
    EXPECT_NE(name.rfind("mem", 0), 0u) << name;
    EXPECT_NE(name.rfind("desc", 0), 0u) << name;
  }
  EXPECT_TRUE(fs::exists(dir / "best.ckpt.json"));
  const std::string log = slurp(dir / "train_log.tsv");
  EXPECT_EQ(log.rfind("epoch\tmean_loss\tppl\tdev_ppl\tseconds\n", 0), 0u) << log;
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 4);
}

TEST(Train, IdenticalRunsGiveIdenticalCheckpoints) {
  const fs::path dir = fresh_dir("train_twice");
  fs::copy(prepared_sample(), dir, fs::copy_options::overwrite_existing | fs::copy_options::recursive);
  ASSERT_EQ(run(with({"train"}, small_run(dir))).code, kExitOk);
  const std::string first = file_checksum(dir / "final.ckpt.json");
  ASSERT_EQ(run(with({"train"}, small_run(dir))).code, kExitOk);
  EXPECT_EQ(file_checksum(dir / "final.ckpt.json"), first);
  ASSERT_EQ(run(with({"train", "--seed", "2"}, small_run(dir))).code, kExitOk);
  EXPECT_NE(file_checksum(dir / "final.ckpt.json"), first);
}

TEST(Train, DivergenceExitsThreeAndKeepsParameters) {
  const fs::path dir = fresh_dir("train_nan");
  fs::copy(prepared_sample(), dir, fs::copy_options::overwrite_existing | fs::copy_options::recursive);
  const CliRun r = run(with({"train", "--lr", "1e308", "--clip-norm", "0"}, small_run(dir)));
  EXPECT_EQ(r.code, kExitNumeric) << r.err;
  EXPECT_TRUE(fs::exists(dir / "failed.ckpt.json"));
}

TEST(Train, MissingDataExitsTwo) {
  const fs::path dir = fresh_dir("train_nodata");
  EXPECT_EQ(run(with({"train"}, small_run(dir))).code, kExitData);
}

class Trained : public ::testing::Test {
 protected:
  static fs::path dir(const std::string& variant) {
    const fs::path d = fs::temp_directory_path() / "pcgn_cli_test" / ("trained_" + variant);
    if (!fs::exists(d / "final.ckpt.json")) {
      fs::remove_all(d);
      fs::create_directories(d);
      fs::copy(prepared_sample(), d, fs::copy_options::overwrite_existing | fs::copy_options::recursive);
      const CliRun r = run(with({"train", "--variant", variant}, small_run(d)));
      EXPECT_EQ(r.code, kExitOk) << r.err;
    }
    return d;
  }
};

TEST_F(Trained, Seq2SeqGeneratesTheSameForEveryUser) {
  const fs::path d = dir("seq2seq");
  std::ostringstream out;
  RunConfig c = resolve_config({}, {{"output_dir", d.string()}, {"beam", "3"}, {"max_length", "6"}});
  const GenerateResult g = cmd_generate(
      c, "phone maker announces a new screen",
      {"u_anna", "u_ben", R"({"gender":"F","age":60,"description":"retired teacher"})"}, 3, out);
  ASSERT_EQ(g.outputs.size(), 3u);
  EXPECT_EQ(g.outputs[0], g.outputs[1]);
  EXPECT_EQ(g.outputs[0], g.outputs[2]);
  EXPECT_EQ(g.outputs[0].size(), 3u);
}

TEST_F(Trained, PcgnGenerateRendersSideBySide) {
  const fs::path d = dir("pcgn");
  const CliRun r = run({"generate", "--output-dir", d.string(), "--blog", "rain all week", "--user", "u_anna", "--user",
                     "u_dara", "--top", "2", "--beam", "3", "--max-length", "6"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("u_anna"), std::string::npos);
  EXPECT_NE(r.out.find("u_dara"), std::string::npos);
  EXPECT_NE(r.out.find("PCGN"), std::string::npos);
}

TEST_F(Trained, UnknownUserListsAvailableIds) {
  const CliRun r = run({"generate", "--output-dir", dir("seq2seq").string(), "--blog", "x y", "--user", "u_zed"});
  EXPECT_EQ(r.code, kExitData);
  for (const char* id : {"u_zed", "u_anna", "u_ben", "u_chen", "u_dara"})
    EXPECT_NE(r.err.find(id), std::string::npos) << r.err;
}

TEST_F(Trained, EvalPerplexityMatchesDirectComputation) {
  const fs::path d = dir("pcgn");
  std::ostringstream out;
  const RunConfig c = resolve_config({}, {{"output_dir", d.string()}, {"beam", "3"}, {"max_length", "6"}});
  const EvalResult e = cmd_eval(c, d / "pairs.tsv", out);
  const Checkpoint ck = load_checkpoint(d / "final.ckpt.json");
  const auto records = parse_dataset(d / "test.jsonl");
  const auto data = encode_examples(records, ck.vocab, ck.schema);
  EXPECT_NEAR(e.scores.ppl, perplexity(ck.model, data), 1e-9);
  EXPECT_EQ(e.scores.pairs, records.size());
  EXPECT_TRUE(fs::exists(d / "eval_test.json"));
  EXPECT_EQ(e.report.at("checkpoint_checksum").get<std::string>(), file_checksum(d / "final.ckpt.json"));
  const std::string tsv = slurp(d / "pairs.tsv");
  EXPECT_EQ(static_cast<std::size_t>(std::count(tsv.begin(), tsv.end(), '\n')), records.size() + 1);
}

TEST(Generate, PcgnTrainedOnSeparableCorpusDiffersAcrossUsers) {
  const fs::path dir = fresh_dir("separable");
  const std::vector<std::string> common{"--output-dir", dir.string(), "--preset", "desk"};
  ASSERT_EQ(run(with({"prepare", "--synthetic", "32", "--users", "4", "--common-words", "20"}, common)).code, kExitOk);
  const CliRun t = run(with({"train", "--variant", "pcgn", "--epochs", "250"}, common));
  ASSERT_EQ(t.code, kExitOk) << t.err;
  const auto records = parse_dataset(dir / "train.jsonl");
  std::vector<std::string> users;
  for (const RawRecord& r : records)
    if (std::find(users.begin(), users.end(), r.user_id) == users.end()) users.push_back(r.user_id);
  ASSERT_GE(users.size(), 2u);
  std::string blog;
  for (const auto& w : records.front().blog) blog += (blog.empty() ? "" : " ") + w;
  std::ostringstream out;
  const RunConfig c = resolve_config({}, {{"output_dir", dir.string()}, {"preset", "desk"}});
  const GenerateResult g = cmd_generate(c, blog, users, 1, out);
  std::set<std::vector<TokenId>> distinct;
  for (const auto& ranked : g.outputs) distinct.insert(ranked.at(0).tokens);
  EXPECT_EQ(distinct.size(), users.size()) << out.str();
}

TEST(Ablate, FourRowsWithDeltas) {
  const fs::path dir = fresh_dir("ablate");
  fs::copy(prepared_sample(), dir, fs::copy_options::overwrite_existing | fs::copy_options::recursive);
  const CliRun r = run(with({"ablate"}, small_run(dir)));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto report = nlohmann::json::parse(slurp(dir / "ablation.json"));
  ASSERT_EQ(report.at("rows").size(), 4u);
  EXPECT_TRUE(report.at("complete").get<bool>());
  const std::vector<std::string> labels{"Seq2Seq", "+Mem", "+CoAtt", "+External"};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(report["rows"][i].at("method").get<std::string>(), labels[i]);
    EXPECT_NE(r.out.find(labels[i]), std::string::npos);
  }
  const std::string table = slurp(dir / "ablation.txt");
  EXPECT_TRUE(table.find("(+") != std::string::npos || table.find("(-") != std::string::npos) << table;
}

}  // namespace
}  // namespace pcgn
