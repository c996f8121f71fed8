#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pcgn/decoding.hpp"
#include "pcgn/metrics.hpp"
#include "pcgn/model.hpp"
#include "pcgn/training.hpp"

namespace pcgn {

/// Bad flags, unknown config keys or unparsable values. Maps to exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

/// Every setting a command reads. Built from a preset, then a key = value file, then the
/// PCGN_OUTPUT_DIR environment variable, then command-line flags.
struct RunConfig {
  std::string preset = "desk";

  // data preparation
  std::string input;            // raw JSONL corpus
  std::size_t synthetic = 0;    // > 0: generate this many synthetic records instead of reading input
  std::size_t users = 4;        // synthetic users
  std::size_t min_tokens = 2;
  std::size_t min_user_records = 2;
  std::size_t common_words = 0;  // k > 0 appends each user's top-k common words to the description
  std::array<double, 3> split_ratios{0.8, 0.1, 0.1};

  // locations
  std::string data_dir;  // prepared artifacts; empty means output_dir
  std::string output_dir = "pcgn_out";
  std::string checkpoint;  // empty means <output_dir>/final.ckpt.json
  std::string split = "test";

  // model
  std::string variant = "pcgn";
  ModelDims dims;  // vocab_size is the vocabulary cap; feature_dim is derived from the schema
  double init_range = 0.3;

  // optimization
  OptimizerConfig optimizer;
  double stop_ppl = 0.0;  // > 0: stop once the training PPL drops below this

  // decoding
  DecodeConfig decode;

  std::uint64_t seed = 1;
  std::string ablate_variants = "seq2seq,+mem,+coatt,pcgn";

  static RunConfig from_preset(const std::string& name);

  /// Sets one key from its textual value.
  void set(const std::string& key, const std::string& value);
  nlohmann::json to_json() const;
  void validate() const;

  std::filesystem::path data_path() const;
  std::filesystem::path checkpoint_path() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
};

/// Every recognised key, in documentation order.
const std::vector<ConfigKey>& config_keys();

/// Flat `key = value` lines; `#` starts a comment, blank lines are ignored.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text);
std::vector<std::pair<std::string, std::string>> parse_config_file(const std::filesystem::path& path);

/// Applies the layering: preset (taken from the flags, else the file, else desk), file,
/// environment, flags.
RunConfig resolve_config(const std::vector<std::pair<std::string, std::string>>& file_entries,
                         const std::vector<std::pair<std::string, std::string>>& flag_entries);

/// Aligned plain-text table.
std::string format_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows);

// ---------------------------------------------------------------- commands

struct PrepareResult {
  std::size_t train = 0;
  std::size_t dev = 0;
  std::size_t test = 0;
  std::size_t vocab_size = 0;
  std::size_t feature_dim = 0;
  std::string report;  // Table-1 shaped counts
};
PrepareResult cmd_prepare(const RunConfig& config, std::ostream& out);

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  std::vector<double> dev_ppl;  // empty when there is no dev split
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;
};
TrainResult cmd_train(const RunConfig& config, std::ostream& out);

struct UserSpec {
  std::string label;
  RawRecord profile;
};

struct GenerateResult {
  std::vector<std::string> users;
  std::vector<std::vector<Hypothesis>> outputs;  // per user, ranked
  std::vector<std::vector<std::string>> texts;   // per user, detokenized rank order
  std::string table;
};
/// `user_specs` are dataset user ids or inline profile JSON objects.
GenerateResult cmd_generate(const RunConfig& config, const std::string& blog, const std::vector<std::string>& user_specs,
                            std::size_t top, std::ostream& out);

struct EvalResult {
  CorpusScores scores;
  nlohmann::json report;
  std::string table;
};
EvalResult cmd_eval(const RunConfig& config, const std::filesystem::path& dump_pairs, std::ostream& out);

struct AblationRow {
  std::string label;
  CorpusScores scores;
};
struct AblateResult {
  std::vector<AblationRow> rows;
  nlohmann::json report;
  std::string table;
};
AblateResult cmd_ablate(const RunConfig& config, std::ostream& out);

/// Entry point of the `pcgn` tool. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pcgn
