// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "cpaformer/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

#include "cpaformer/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace cpaformer::model {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'C', 'P', 'A', 'F'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated checkpoint");
  return v;
}

void write_string(std::ofstream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& in) {
  const auto len = read_pod<std::uint32_t>(in);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw IoError("truncated checkpoint");
  return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(kMagic, 4);
  write_pod<std::uint32_t>(out, kVersion);
  write_pod<std::uint64_t>(out, ckpt.config_json.size());
  out.write(ckpt.config_json.data(),
            static_cast<std::streamsize>(ckpt.config_json.size()));
  write_pod<std::uint32_t>(out,
                           static_cast<std::uint32_t>(ckpt.sections.size()));
  for (const auto& [name, store] : ckpt.sections) {
    write_string(out, name);
    write_pod<std::uint32_t>(
        out, static_cast<std::uint32_t>(store.entries().size()));
    for (const Param& p : store.entries()) {
      write_string(out, p.name);
      write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p.rows));
      write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p.cols));
      out.write(reinterpret_cast<const char*>(p.value.data()),
                static_cast<std::streamsize>(p.value.size() *
                                             sizeof(double)));
    }
  }
  if (!out) throw IoError("write failure on '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("not a checkpoint file: bad magic");
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion)
    throw ParseError("unsupported checkpoint version " +
                     std::to_string(version));
  Checkpoint ckpt;
  const auto config_len = read_pod<std::uint64_t>(in);
  ckpt.config_json.resize(config_len);
  in.read(ckpt.config_json.data(),
          static_cast<std::streamsize>(config_len));
  if (!in) throw IoError("truncated checkpoint");
  const auto n_sections = read_pod<std::uint32_t>(in);
  for (std::uint32_t s = 0; s < n_sections; ++s) {
    const std::string section_name = read_string(in);
    ParamStore store;
    const auto n_params = read_pod<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < n_params; ++i) {
      const std::string name = read_string(in);
      const auto rows = read_pod<std::uint32_t>(in);
      const auto cols = read_pod<std::uint32_t>(in);
      Param& p = store.add(name, static_cast<int>(rows),
                           static_cast<int>(cols));
      in.read(reinterpret_cast<char*>(p.value.data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(double)));
      if (!in) throw IoError("truncated checkpoint");
    }
    ckpt.sections.emplace_back(section_name, std::move(store));
  }
  return ckpt;
}

std::string config_to_json(const ModelConfig& cfg) {
  json j;
  j["layers"] = cfg.layers;
  j["model_dim"] = cfg.model_dim;
  j["heads"] = cfg.heads;
  j["ffn_dim"] = cfg.ffn_dim;
  j["dropout"] = cfg.dropout;
  if (cfg.k == kGlobalHops)
    j["k"] = "global";
  else
    j["k"] = cfg.k;
  j["spd_clip"] = cfg.spd_clip;
  j["path_edge_bias"] = cfg.path_edge_bias;
  j["key_centrality_bias"] = cfg.key_centrality_bias;
  j["layer_centrality"] = cfg.layer_centrality;
  j["variant"] = variant_name(cfg.variant);
  j["gate"] = gate_name(cfg.gate);
  j["proj_dim"] = cfg.proj_dim;
  j["decoder_hidden"] = cfg.decoder_hidden;
  j["init_scale"] = cfg.init_scale;
  j["seed"] = cfg.seed;
  return j.dump();  // nlohmann dumps objects with sorted keys
}

ModelConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config JSON: ") + e.what());
  }
  static const std::set<std::string> kKnown = {
      "layers",       "model_dim",        "heads",
      "ffn_dim",      "dropout",          "k",
      "spd_clip",     "path_edge_bias",   "key_centrality_bias",
      "layer_centrality", "variant",      "gate",
      "proj_dim",     "decoder_hidden",   "init_scale",
      "seed"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!kKnown.count(it.key()))
      throw ConfigError("unknown config key '" + it.key() + "'");
  }
  ModelConfig cfg;
  try {
    if (j.contains("layers")) cfg.layers = j["layers"].get<int>();
    if (j.contains("model_dim")) cfg.model_dim = j["model_dim"].get<int>();
    if (j.contains("heads")) cfg.heads = j["heads"].get<int>();
    if (j.contains("ffn_dim")) cfg.ffn_dim = j["ffn_dim"].get<int>();
    if (j.contains("dropout")) cfg.dropout = j["dropout"].get<double>();
    if (j.contains("k")) {
      if (j["k"].is_string()) {
        const std::string k = j["k"].get<std::string>();
        if (k != "global" && k != "inf")
          throw ConfigError("k must be an integer, \"global\" or \"inf\"");
        cfg.k = kGlobalHops;
      } else {
        cfg.k = j["k"].get<int>();
      }
    }
    if (j.contains("spd_clip")) cfg.spd_clip = j["spd_clip"].get<int>();
    if (j.contains("path_edge_bias"))
      cfg.path_edge_bias = j["path_edge_bias"].get<bool>();
    if (j.contains("key_centrality_bias"))
      cfg.key_centrality_bias = j["key_centrality_bias"].get<bool>();
    if (j.contains("layer_centrality"))
      cfg.layer_centrality = j["layer_centrality"].get<bool>();
    if (j.contains("variant"))
      cfg.variant = variant_from_name(j["variant"].get<std::string>());
    if (j.contains("gate"))
      cfg.gate = gate_from_name(j["gate"].get<std::string>());
    if (j.contains("proj_dim")) cfg.proj_dim = j["proj_dim"].get<int>();
    if (j.contains("decoder_hidden"))
      cfg.decoder_hidden = j["decoder_hidden"].get<int>();
    if (j.contains("init_scale"))
      cfg.init_scale = j["init_scale"].get<double>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config value error: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace cpaformer::model
