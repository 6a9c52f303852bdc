#pragma once

// Checkpoint directory format:
//   manifest.json — format version, model configuration, ordered tensor
//                   table (name, shape, dtype, byte offset, element count)
//   params.bin    — row-major little-endian float32, tensors in table order
//   vocab.txt     — one token per line; line index + 2 = token id
// Loading validates the tensor table against the shapes the configuration
// dictates, so a checkpoint can never silently deliver mis-shaped weights.

#include <string>

#include "offtopic/data.hpp"
#include "offtopic/model.hpp"

namespace offtopic {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  ModelParams<float> params;
  Vocabulary vocab;

  Checkpoint(ModelParams<float> p, Vocabulary v) : params(std::move(p)), vocab(std::move(v)) {}
};

void save_checkpoint(const std::string& dir, const ModelParams<float>& params,
                     const Vocabulary& vocab);

Checkpoint load_checkpoint(const std::string& dir);

}  // namespace offtopic
