#pragma once

#include <stdexcept>
#include <string>

namespace emo {

/// Malformed or unsupported input bytes (WAV, PGM, manifest, catalog, cascade).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model file or network definition problems.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor/layer shape disagreement.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace emo
