/*
 * Copyright 2026 The weissi Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Network container format
// ------------------------
// <name>        binary weights, all integers and floats little-endian:
//                 char[4]  magic "WSSI"
//                 u32      version (1)
//                 u32      layer count
//                 per layer:
//                   u32    layer kind code (LayerKind enumerator value)
//                   u32    tensor count
//                   per tensor: u8 dtype (1 = f64), u32 rank, u64 dims[rank],
//                               f64 data[prod(dims)]
//               Tensors appear in Layer::for_each_param order. Residual
//               blocks append their shortcut multiplier as a [1] tensor.
// <name>.json   sidecar with the input shape and the LayerSpec list.

#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "weissi/network.hpp"

namespace weissi {

namespace io_detail {

inline constexpr char kMagic[4] = {'W', 'S', 'S', 'I'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint8_t kDtypeF64 = 1;

template <typename T>
void put(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& path) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) throw IoError(path + ": truncated network file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

inline void put_tensor(std::ostream& os, const Tensor& t) {
  put<std::uint8_t>(os, kDtypeF64);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape) put<std::uint64_t>(os, d);
  for (double x : t.data) put<double>(os, x);
}

inline Tensor get_tensor(std::istream& is, const std::string& path) {
  if (get<std::uint8_t>(is, path) != kDtypeF64) throw IoError(path + ": unsupported dtype");
  const auto rank = get<std::uint32_t>(is, path);
  Shape s(rank);
  for (auto& d : s) d = static_cast<std::size_t>(get<std::uint64_t>(is, path));
  Tensor t(s);
  for (double& x : t.data) x = get<double>(is, path);
  return t;
}

}  // namespace io_detail

inline nlohmann::json spec_to_json(const LayerSpec& s) {
  nlohmann::json j;
  j["kind"] = std::string(to_string(s.kind));
  switch (s.kind) {
    case LayerKind::dense:
      j["in"] = s.in;
      j["out"] = s.out;
      j["has_bias"] = s.has_bias;
      break;
    case LayerKind::conv2d:
      j["in_channels"] = s.in_channels;
      j["out_channels"] = s.out_channels;
      j["kernel"] = s.kernel;
      j["stride"] = s.stride;
      j["padding"] = s.padding;
      j["has_bias"] = s.has_bias;
      break;
    case LayerKind::maxpool:
    case LayerKind::avgpool:
      j["window"] = s.window;
      j["stride"] = s.stride;
      break;
    case LayerKind::residual_block:
      j["in"] = s.in;
      j["width"] = s.width;
      j["hidden"] = s.hidden;
      j["first"] = s.first;
      j["first_aggregates"] = s.first_aggregates;
      j["aggregation"] = s.aggregation == Aggregation::convex ? "convex" : "standard";
      j["has_bias"] = s.has_bias;
      break;
    default:
      break;
  }
  return j;
}

inline LayerSpec spec_from_json(const nlohmann::json& j) {
  LayerSpec s;
  s.kind = layer_kind_from_string(j.at("kind").get<std::string>());
  s.has_bias = j.value("has_bias", false);
  switch (s.kind) {
    case LayerKind::dense:
      s.in = j.at("in");
      s.out = j.at("out");
      break;
    case LayerKind::conv2d:
      s.in_channels = j.at("in_channels");
      s.out_channels = j.at("out_channels");
      s.kernel = j.at("kernel");
      s.stride = j.at("stride");
      s.padding = j.at("padding");
      break;
    case LayerKind::maxpool:
    case LayerKind::avgpool:
      s.window = j.at("window");
      s.stride = j.at("stride");
      break;
    case LayerKind::residual_block: {
      s.in = j.at("in");
      s.width = j.at("width");
      s.hidden = j.at("hidden");
      s.first = j.at("first");
      s.first_aggregates = j.value("first_aggregates", false);
      const auto agg = j.at("aggregation").get<std::string>();
      if (agg != "convex" && agg != "standard") throw ContractError("unknown aggregation '" + agg + "'");
      s.aggregation = agg == "convex" ? Aggregation::convex : Aggregation::standard;
      break;
    }
    default:
      break;
  }
  return s;
}

inline nlohmann::json network_sidecar(const Network& net) {
  nlohmann::json j;
  j["format"] = "weissi-network";
  j["version"] = io_detail::kVersion;
  j["input_shape"] = net.input_shape();
  j["layers"] = nlohmann::json::array();
  for (const auto& l : net.layers()) j["layers"].push_back(spec_to_json(l.spec));
  return j;
}

inline Network network_from_sidecar(const nlohmann::json& j) {
  if (j.value("format", "") != "weissi-network") throw IoError("sidecar: not a weissi-network document");
  std::vector<LayerSpec> specs;
  for (const auto& l : j.at("layers")) specs.push_back(spec_from_json(l));
  return Network(j.at("input_shape").get<Shape>(), std::move(specs));
}

inline void write_weights(std::ostream& os, const Network& net) {
  using namespace io_detail;
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    std::vector<const Tensor*> tensors;
    l.for_each_param([&](const Tensor& t, std::string_view) { tensors.push_back(&t); });
    Tensor scale = Tensor::vector({l.shortcut_scale});
    if (l.spec.kind == LayerKind::residual_block) tensors.push_back(&scale);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(l.spec.kind));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
    for (const Tensor* t : tensors) put_tensor(os, *t);
  }
}

/// Reads weights into a network whose layer list is already known.
inline void read_weights(std::istream& is, Network& net, const std::string& path = "<stream>") {
  using namespace io_detail;
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw IoError(path + ": bad magic, not a WSSI file");
  const auto version = get<std::uint32_t>(is, path);
  if (version != kVersion) throw IoError(path + ": unsupported version " + std::to_string(version));
  const auto count = get<std::uint32_t>(is, path);
  if (count != net.layers().size()) throw IoError(path + ": layer count does not match sidecar");
  for (auto& l : net.layers()) {
    const auto kind = get<std::uint32_t>(is, path);
    if (kind != static_cast<std::uint32_t>(l.spec.kind)) throw IoError(path + ": layer kind mismatch");
    std::vector<Tensor*> tensors = l.params();
    const bool residual = l.spec.kind == LayerKind::residual_block;
    const auto n = get<std::uint32_t>(is, path);
    if (n != tensors.size() + (residual ? 1 : 0)) throw IoError(path + ": tensor count mismatch");
    for (Tensor* t : tensors) {
      Tensor loaded = get_tensor(is, path);
      if (loaded.shape != t->shape) {
        throw IoError(path + ": tensor shape " + shape_str(loaded.shape) + " expected " + shape_str(t->shape));
      }
      t->data = std::move(loaded.data);
      t->grad.reset();
    }
    if (residual) l.shortcut_scale = get_tensor(is, path).item();
  }
}

/// Writes `path` (binary weights) and `path + ".json"` (layer list).
inline void save_network(const Network& net, const std::string& path) {
  std::ofstream bin(path, std::ios::binary);
  if (!bin) throw IoError("cannot open " + path + " for writing");
  write_weights(bin, net);
  std::ofstream side(path + ".json");
  if (!side) throw IoError("cannot open " + path + ".json for writing");
  side << network_sidecar(net).dump(2) << '\n';
}

inline Network load_network(const std::string& path) {
  std::ifstream side(path + ".json");
  if (!side) throw IoError("cannot open sidecar " + path + ".json");
  Network net = network_from_sidecar(nlohmann::json::parse(side));
  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw IoError("cannot open " + path);
  read_weights(bin, net, path);
  return net;
}

}  // namespace weissi
