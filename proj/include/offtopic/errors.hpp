#pragma once

#include <stdexcept>
#include <string>

namespace offtopic {

// Shape contract violation in a graph primitive (names the primitive and the
// offending shapes in the message).
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite value produced by a primitive, or training divergence.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid input value: all-masked sequence, out-of-range token id, empty
// corpus, infeasible calibration, and similar.
class ValueError : public std::runtime_error {
 public:
  explicit ValueError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed external file: corpus line, embedding file, checkpoint manifest.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace offtopic
