#include "offtopic/checkpoint.hpp"

#include <bit>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "offtopic/serialize.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; big-endian hosts need byte swapping");

namespace offtopic {

using nlohmann::json;
namespace fs = std::filesystem;

void save_checkpoint(const std::string& dir, const ModelParams<float>& params,
                     const Vocabulary& vocab) {
  if (vocab.size() != params.config.vocab_size) {
    throw ValueError("checkpoint: vocabulary size " + std::to_string(vocab.size()) +
                     " does not match config vocab_size " +
                     std::to_string(params.config.vocab_size));
  }
  fs::create_directories(dir);

  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& name : params.names) {
    const auto& t = params.at(name);
    tensors.push_back({{"name", name},
                       {"shape", t->shape},
                       {"dtype", "f32"},
                       {"offset", offset},
                       {"count", t->size()}});
    offset += static_cast<std::uint64_t>(t->size()) * sizeof(float);
  }
  json manifest = {{"format_version", kCheckpointFormatVersion},
                   {"config", params.config},
                   {"tensors", tensors}};

  {
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw ValueError("cannot write checkpoint manifest in " + dir);
    out << manifest.dump(2) << '\n';
  }
  {
    std::ofstream out(fs::path(dir) / "params.bin", std::ios::binary);
    if (!out) throw ValueError("cannot write checkpoint blob in " + dir);
    for (const auto& name : params.names) {
      const auto& t = params.at(name);
      out.write(reinterpret_cast<const char*>(t->value.data()),
                static_cast<std::streamsize>(t->value.size() * sizeof(float)));
    }
    if (!out) throw ValueError("short write on checkpoint blob in " + dir);
  }
  vocab.save((fs::path(dir) / "vocab.txt").string());
}

Checkpoint load_checkpoint(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream manifest_in(root / "manifest.json");
  if (!manifest_in) throw ValueError("cannot read checkpoint manifest in " + dir);
  json manifest;
  try {
    manifest_in >> manifest;
  } catch (const json::exception& e) {
    throw FormatError("checkpoint manifest: " + std::string(e.what()));
  }

  int version = -1;
  ModelConfig config;
  try {
    manifest.at("format_version").get_to(version);
    if (version != kCheckpointFormatVersion) {
      throw FormatError("checkpoint format version " + std::to_string(version) +
                        " unsupported (expected " + std::to_string(kCheckpointFormatVersion) + ")");
    }
    manifest.at("config").get_to(config);
  } catch (const json::exception& e) {
    throw FormatError("checkpoint manifest: " + std::string(e.what()));
  }
  config.validate();

  const auto specs = param_specs(config);
  const auto& tensors = manifest.at("tensors");
  if (!tensors.is_array() || tensors.size() != specs.size()) {
    throw FormatError("checkpoint manifest lists " + std::to_string(tensors.size()) +
                      " tensors, configuration dictates " + std::to_string(specs.size()));
  }

  ModelParams<float> params(config);
  std::ifstream blob(root / "params.bin", std::ios::binary);
  if (!blob) throw ValueError("cannot read checkpoint blob in " + dir);
  std::uint64_t expected_offset = 0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& entry = tensors[i];
    std::string name;
    Shape shape;
    std::string dtype;
    std::uint64_t offset = 0, count = 0;
    try {
      entry.at("name").get_to(name);
      entry.at("shape").get_to(shape);
      entry.at("dtype").get_to(dtype);
      entry.at("offset").get_to(offset);
      entry.at("count").get_to(count);
    } catch (const json::exception& e) {
      throw FormatError("checkpoint manifest tensor " + std::to_string(i) + ": " +
                        std::string(e.what()));
    }
    if (name != specs[i].name) {
      throw FormatError("checkpoint tensor " + std::to_string(i) + " is '" + name +
                        "', configuration dictates '" + specs[i].name + "'");
    }
    if (shape != specs[i].shape) {
      throw ShapeError("checkpoint tensor '" + name + "': stored " + shape_str(shape) +
                       ", configuration dictates " + shape_str(specs[i].shape));
    }
    if (dtype != "f32") throw FormatError("checkpoint tensor '" + name + "': dtype " + dtype);
    if (offset != expected_offset) {
      throw FormatError("checkpoint tensor '" + name + "': offset " + std::to_string(offset) +
                        ", expected " + std::to_string(expected_offset));
    }
    auto& t = params.at(name);
    if (count != static_cast<std::uint64_t>(t->size())) {
      throw FormatError("checkpoint tensor '" + name + "': count " + std::to_string(count) +
                        ", shape implies " + std::to_string(t->size()));
    }
    blob.read(reinterpret_cast<char*>(t->value.data()),
              static_cast<std::streamsize>(t->value.size() * sizeof(float)));
    if (blob.gcount() != static_cast<std::streamsize>(t->value.size() * sizeof(float))) {
      throw FormatError("checkpoint blob truncated at tensor '" + name + "'");
    }
    expected_offset = offset + count * sizeof(float);
  }
  blob.peek();
  if (!blob.eof()) throw FormatError("checkpoint blob has trailing bytes");

  Vocabulary vocab = Vocabulary::load((root / "vocab.txt").string());
  if (vocab.size() != config.vocab_size) {
    throw FormatError("checkpoint vocabulary has " + std::to_string(vocab.size()) +
                      " ids, configuration dictates " + std::to_string(config.vocab_size));
  }
  return Checkpoint(std::move(params), std::move(vocab));
}

}  // namespace offtopic
