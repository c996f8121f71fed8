#include <filesystem>
#include <map>
#include <ostream>

#include "CLI11.hpp"
#include "pcgn/checkpoint.hpp"
#include "pcgn/cli.hpp"

namespace pcgn {

namespace {

std::string flag_name(const std::string& key) {
  std::string s = "--";
  for (char ch : key) s += ch == '_' ? '-' : ch;
  return s;
}

/// Config-key flags shared by every subcommand, recorded in the order of the key table.
struct KeyFlags {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", config_file, "key = value config file")->check(CLI::ExistingFile);
    for (const ConfigKey& k : config_keys()) options[k.name] = cmd->add_option(flag_name(k.name), values[k.name], k.help);
  }

  RunConfig resolve() const {
    std::vector<std::pair<std::string, std::string>> flags;
    for (const ConfigKey& k : config_keys()) {
      if (options.at(k.name)->count() > 0) flags.emplace_back(k.name, values.at(k.name));
    }
    const auto file = config_file.empty() ? std::vector<std::pair<std::string, std::string>>{}
                                          : parse_config_file(config_file);
    return resolve_config(file, flags);
  }
};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Personalized comment generation: prepare data, train, generate, evaluate and ablate.", "pcgn"};
  app.require_subcommand(1);

  KeyFlags prepare_flags, train_flags, generate_flags, eval_flags, ablate_flags;
  CLI::App* prepare = app.add_subcommand("prepare", "parse, filter and split a corpus; build vocabulary and schema");
  prepare_flags.attach(prepare);
  CLI::App* train = app.add_subcommand("train", "train one variant on prepared data");
  train_flags.attach(train);

  CLI::App* generate = app.add_subcommand("generate", "beam-search comments for one blog and several users");
  generate_flags.attach(generate);
  std::string blog;
  std::vector<std::string> user_specs;
  std::size_t top = 1;
  generate->add_option("--blog", blog, "blog text (whitespace-tokenized)")->required();
  generate->add_option("--user", user_specs, "user id from the prepared data, or an inline profile JSON object")
      ->required();
  generate->add_option("--top", top, "ranked outputs shown per user");

  CLI::App* eval = app.add_subcommand("eval", "decode a split and report PPL, BLEU-2 and METEOR-lite");
  eval_flags.attach(eval);
  std::string dump_pairs;
  eval->add_option("--dump-pairs", dump_pairs, "write hypothesis/reference pairs as TSV");

  CLI::App* ablate = app.add_subcommand("ablate", "train and evaluate the incremental variants with one seed");
  ablate_flags.attach(ablate);

  CLI::App* keys = app.add_subcommand("keys", "list the config keys and their resolved values");
  KeyFlags keys_flags;
  keys_flags.attach(keys);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*prepare) {
      cmd_prepare(prepare_flags.resolve(), out);
    } else if (*train) {
      cmd_train(train_flags.resolve(), out);
    } else if (*generate) {
      cmd_generate(generate_flags.resolve(), blog, user_specs, top, out);
    } else if (*eval) {
      const EvalResult r = cmd_eval(eval_flags.resolve(), dump_pairs, out);
      out << "\n" << r.report.dump(1) << "\n";
    } else if (*ablate) {
      cmd_ablate(ablate_flags.resolve(), out);
    } else if (*keys) {
      const RunConfig c = keys_flags.resolve();
      const nlohmann::json j = c.to_json();
      std::vector<std::vector<std::string>> rows;
      for (const ConfigKey& k : config_keys()) {
        const nlohmann::json& v = j.at(k.name);
        rows.push_back({k.name, v.is_string() ? v.get<std::string>() : v.dump(), k.help});
      }
      out << format_table({"key", "value", "meaning"}, rows);
    }
    return kExitOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "file error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace pcgn
