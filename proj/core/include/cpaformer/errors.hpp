// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace cpaformer {

/// Malformed textual input (SMILES, corpus records, prediction files).
/// Carries the character offset within the offending string when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string message, int offset = -1)
      : std::runtime_error(offset >= 0 ? message + " at offset " +
                                             std::to_string(offset)
                                       : message),
        offset_(offset) {}
  int offset() const { return offset_; }

 private:
  int offset_;
};

/// Filesystem level failure: missing file, unreadable stream.
class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid configuration: bad dimensions, unknown keys, out-of-range knobs.
class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes.
class ShapeError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical failure: non-finite values, all-forbidden softmax rows,
/// undefined metrics (single-class AUC), degenerate regressions.
class NumericError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace cpaformer
