// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cpaformer/model.hpp"

namespace cpaformer::model {

/// One checkpoint: the model configuration plus named parameter sections
/// ("encoder", "decoder", "head", ...). Binary layout, version 1:
///   magic "CPAF" | u32 version | u64 config_len | config JSON |
///   u32 n_sections | per section: u32 name_len, name, u32 n_params,
///   per param: u32 name_len, name, u32 rows, u32 cols,
///   rows*cols float64 little-endian.
struct Checkpoint {
  std::string config_json;
  std::vector<std::pair<std::string, ParamStore>> sections;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Canonical JSON for a ModelConfig (sorted keys, stable formatting).
std::string config_to_json(const ModelConfig& cfg);

/// Parses a config; unknown keys are rejected.
ModelConfig config_from_json(const std::string& text);

}  // namespace cpaformer::model
