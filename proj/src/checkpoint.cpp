#include "pcgn/checkpoint.hpp"

#include <boost/crc.hpp>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pcgn {

using nlohmann::json;

CheckpointError::CheckpointError(CheckpointErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

json checkpoint_to_json(const Checkpoint& ck) {
  json params = json::array();
  const ParameterStore& store = ck.model.params();
  for (ParamId id = 0; id < store.size(); ++id) {
    const Tensor& t = store.value(id);
    params.push_back(json{{"name", store.name(id)}, {"shape", t.shape()}, {"values", t.values()}});
  }
  return json{{"format", "pcgn-checkpoint"},
              {"version", kCheckpointVersion},
              {"model", ck.model.config().to_json()},
              {"vocab", ck.vocab.to_json()},
              {"schema", ck.schema.to_json()},
              {"step", ck.step},
              {"run_config", ck.run_config},
              {"parameters", std::move(params)}};
}

Checkpoint checkpoint_from_json(const json& j) {
  try {
    if (!j.is_object() || j.value("format", std::string()) != "pcgn-checkpoint") {
      throw CheckpointError(CheckpointErrorKind::Corrupt, "checkpoint: not a pcgn checkpoint");
    }
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError(CheckpointErrorKind::Version, "checkpoint: format version " + std::to_string(version) +
                                                              ", this build reads " +
                                                              std::to_string(kCheckpointVersion));
    }
    ModelConfig config;
    try {
      config = ModelConfig::from_json(j.at("model"));
      config.dims.validate();
    } catch (const DomainError& e) {
      throw CheckpointError(CheckpointErrorKind::Corrupt, std::string("checkpoint: bad model config: ") + e.what());
    }
    Checkpoint ck{Model(config, 0), Vocab::from_json(j.at("vocab")), FeatureSchema::from_json(j.at("schema")),
                  j.at("step").get<std::size_t>(), j.value("run_config", json::object())};
    if (ck.vocab.size() != config.dims.vocab_size) {
      throw CheckpointError(CheckpointErrorKind::ShapeMismatch,
                            "checkpoint: vocabulary holds " + std::to_string(ck.vocab.size()) +
                                " tokens but the model expects " + std::to_string(config.dims.vocab_size));
    }
    if (ck.schema.width() != config.dims.feature_dim) {
      throw CheckpointError(CheckpointErrorKind::ShapeMismatch,
                            "checkpoint: feature schema width " + std::to_string(ck.schema.width()) +
                                " but the model expects " + std::to_string(config.dims.feature_dim));
    }

    const json& params = j.at("parameters");
    ParameterStore& store = ck.model.params();
    if (params.size() != store.size()) {
      throw CheckpointError(CheckpointErrorKind::ShapeMismatch,
                            "checkpoint: " + std::to_string(params.size()) + " parameter tensors stored, model has " +
                                std::to_string(store.size()));
    }
    for (const json& p : params) {
      const std::string name = p.at("name").get<std::string>();
      const auto id = store.find(name);
      if (!id) throw CheckpointError(CheckpointErrorKind::ShapeMismatch, "checkpoint: unexpected parameter " + name);
      const Shape shape = p.at("shape").get<Shape>();
      if (shape != store.value(*id).shape()) {
        throw CheckpointError(CheckpointErrorKind::ShapeMismatch,
                              "checkpoint: parameter " + name + " stored as " + shape_string(shape) +
                                  " but the config implies " + shape_string(store.value(*id).shape()));
      }
      std::vector<double> values = p.at("values").get<std::vector<double>>();
      if (values.size() != shape_size(shape)) {
        throw CheckpointError(CheckpointErrorKind::Corrupt, "checkpoint: parameter " + name + " has wrong value count");
      }
      store.value(*id) = Tensor(shape, std::move(values));
    }
    return ck;
  } catch (const json::exception& e) {
    throw CheckpointError(CheckpointErrorKind::Corrupt, std::string("checkpoint: malformed content: ") + e.what());
  } catch (const DataError& e) {
    throw CheckpointError(CheckpointErrorKind::Corrupt, std::string("checkpoint: ") + e.what());
  } catch (const DomainError& e) {
    throw CheckpointError(CheckpointErrorKind::Corrupt, std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const std::string text = checkpoint_to_json(ck).dump() + "\n";
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError(CheckpointErrorKind::Io, "checkpoint: cannot write " + tmp.string());
    out << text;
    if (!out) throw CheckpointError(CheckpointErrorKind::Io, "checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorKind::Io, "checkpoint: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw CheckpointError(CheckpointErrorKind::Corrupt, "checkpoint: " + path.string() + " is not valid JSON");
  }
  return checkpoint_from_json(j);
}

std::string checksum(std::string_view bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", static_cast<unsigned>(crc.checksum()));
  return buf;
}

std::string file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorKind::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return checksum(buf.str());
}

}  // namespace pcgn
