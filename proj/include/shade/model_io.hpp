#pragma once

// Model file layout:
//   8 bytes   magic "SCNN\0\0\0\1" (last byte is the format version)
//   4 bytes   little-endian length of the JSON header
//   N bytes   UTF-8 JSON header
//   4*P bytes parameter tensors as little-endian float32, declaration order

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "json.hpp"
#include "shade/strcnn.hpp"

namespace shade::cnn {

inline constexpr std::array<char, 8> kMagic{'S', 'C', 'N', 'N', '\0', '\0', '\0', '\1'};
inline constexpr std::size_t kPreamble = kMagic.size() + 4;

inline nlohmann::ordered_json model_header(const CnnModel& m) {
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const auto& l : m.layers)
    layers.push_back({{"kind", to_string(l.kind)},
                      {"kernel", l.kernel},
                      {"stride", l.stride},
                      {"in_channels", l.in_channels},
                      {"out_channels", l.out_channels},
                      {"in_size", l.in_size},
                      {"out_size", l.out_size}});
  nlohmann::ordered_json params = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < m.params.size(); ++i)
    params.push_back({{"name", param_name(i)}, {"shape", m.params[i].shape()}});
  return {{"format_version", m.format_version},
          {"label_size", m.label_size},
          {"layers", layers},
          {"parameters", params},
          {"normalization", {{"mean", m.norm.mean}, {"std", m.norm.stddev}}},
          {"seed", m.seed},
          {"parameter_count", m.parameter_count()}};
}

/// Serializes to bytes. Parameters are rounded to float32.
inline std::vector<char> encode_model(const CnnModel& m) {
  m.validate();
  const std::string header = model_header(m).dump();
  std::vector<char> out(kMagic.begin(), kMagic.end());
  const auto len = static_cast<std::uint32_t>(header.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  out.insert(out.end(), header.begin(), header.end());
  for (const auto& t : m.params)
    for (double v : t.values()) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
  return out;
}

inline CnnModel decode_model(const std::vector<char>& bytes) {
  require(bytes.size() >= kPreamble, "truncated", "model file shorter than its preamble");
  require(std::memcmp(bytes.data(), kMagic.data(), 7) == 0, "version", "bad model magic bytes");
  require(bytes[7] == kMagic[7], "version",
          "unsupported model format version " + std::to_string(static_cast<unsigned char>(bytes[7])));
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
  require(bytes.size() >= kPreamble + len, "truncated", "model header truncated");

  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.begin() + kPreamble, bytes.begin() + kPreamble + len);
  } catch (const nlohmann::json::exception& e) {
    throw Error("format", std::string("model header is not valid JSON: ") + e.what());
  }
  CnnModel m;
  try {
    m = zero_model(h.at("label_size").get<int>());
    m.format_version = h.at("format_version").get<int>();
    m.norm.mean = h.at("normalization").at("mean").get<std::array<double, 3>>();
    m.norm.stddev = h.at("normalization").at("std").get<std::array<double, 3>>();
    m.seed = h.at("seed").get<std::uint64_t>();
    require(h.at("parameter_count").get<std::size_t>() == m.parameter_count(), "format",
            "header parameter_count does not match the architecture");
    require(h.at("layers").size() == m.layers.size(), "format", "header layer count mismatch");
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
      const auto& l = h.at("layers")[i];
      const auto& s = m.layers[i];
      require(l.at("kind") == to_string(s.kind) && l.at("kernel") == s.kernel && l.at("stride") == s.stride &&
                  l.at("in_channels") == s.in_channels && l.at("out_channels") == s.out_channels &&
                  l.at("in_size") == s.in_size && l.at("out_size") == s.out_size,
              "format", "layer " + std::to_string(i) + " does not match the fixed architecture");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("format", std::string("model header: ") + e.what());
  }
  require(m.format_version == CnnModel::kFormatVersion, "version", "unsupported header format_version");

  const std::size_t expected = kPreamble + len + 4 * m.parameter_count();
  require(bytes.size() >= expected, "truncated", "model parameter blob truncated");
  require(bytes.size() == expected, "format", "trailing bytes after model parameters");
  const char* p = bytes.data() + kPreamble + len;
  for (auto& t : m.params)
    for (double& v : t.values()) {
      std::uint32_t bits = 0;
      for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
      v = static_cast<double>(std::bit_cast<float>(bits));
      p += 4;
    }
  m.validate();
  return m;
}

inline void save_model(const CnnModel& m, const std::string& path) {
  const auto bytes = encode_model(m);
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "io", "cannot write model file " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), "io", "failed writing model file " + path);
}

inline CnnModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "io", "cannot open model file " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_model(bytes);
}

}  // namespace shade::cnn
