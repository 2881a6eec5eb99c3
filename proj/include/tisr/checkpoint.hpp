/* Copyright 2026 The tisr Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <zlib.h>

#include <bit>
#include <cstring>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "tisr/adam.hpp"
#include "tisr/config.hpp"
#include "tisr/io.hpp"
#include "tisr/params.hpp"

namespace tisr {

inline constexpr char kCheckpointMagic[8] = {'T', 'I', 'S', 'R', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// One named float32 array.
struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

/// In-memory form of a checkpoint file.
///
/// File layout: 8-byte magic "TISRCKPT", u32 version, u64 header length,
/// UTF-8 JSON header, payload. The header holds the config snapshot, kind,
/// step, frozen flag, vocabulary, free-form `extra`, and the entry manifest
/// (name, shape, scalar width 4, element offset, count) plus the payload size
/// and CRC-32. The payload is every entry's data as little-endian float32,
/// contiguous in manifest order. All integers are little-endian.
struct Checkpoint {
  std::string kind;  // "clip" or "sr"
  std::size_t step = 0;
  bool frozen = false;
  RunConfig config;
  std::vector<std::string> vocab;
  nlohmann::json extra = nlohmann::json::object();
  std::vector<TensorRecord> entries;

  const TensorRecord* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline std::uint64_t get_le(std::string_view bytes, std::size_t at, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  return v;
}

inline std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + done), chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
  std::string payload;
  nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
  std::size_t offset = 0;
  for (const auto& e : ck.entries) {
    if (numel(e.shape) != e.data.size()) {
      throw ContractError("checkpoint entry '" + e.name + "' has " + std::to_string(e.data.size()) +
                          " values for shape " + to_string(e.shape));
    }
    manifest.push_back({{"name", e.name}, {"shape", e.shape}, {"width", 4}, {"offset", offset}, {"count", e.data.size()}});
    offset += e.data.size();
    for (float f : e.data) detail::put_u32(payload, std::bit_cast<std::uint32_t>(f));
  }
  nlohmann::ordered_json header;
  header["format"] = "tisr-checkpoint";
  header["kind"] = ck.kind;
  header["step"] = ck.step;
  header["frozen"] = ck.frozen;
  header["config"] = config_to_json(ck.config);
  header["vocab"] = ck.vocab;
  header["extra"] = ck.extra;
  header["entries"] = manifest;
  header["payload_bytes"] = payload.size();
  header["crc32"] = detail::crc32_of(payload);
  const std::string text = header.dump();
  std::string out(kCheckpointMagic, 8);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, text.size());
  out += text;
  out += payload;
  return out;
}

struct CheckpointHeader {
  Checkpoint meta;  // everything except entry data
  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset = 0, count = 0;
  };
  std::vector<Entry> manifest;
  std::size_t payload_at = 0, payload_bytes = 0;
  std::uint32_t crc = 0;
};

/// Parses and checks the fixed prefix and JSON header; does not touch the payload.
inline CheckpointHeader decode_checkpoint_header(std::string_view bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw ParseError("not a tisr checkpoint (bad magic)", 0);
  }
  const auto version = static_cast<std::uint32_t>(detail::get_le(bytes, 8, 4));
  if (version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t hlen = detail::get_le(bytes, 12, 8);
  if (hlen > bytes.size() - 20) throw ParseError("checkpoint header truncated", bytes.size());
  CheckpointHeader h;
  try {
    const auto j = nlohmann::json::parse(bytes.substr(20, hlen));
    if (j.at("format") != "tisr-checkpoint") throw ParseError("checkpoint header has wrong format tag", 20);
    h.meta.kind = j.at("kind").get<std::string>();
    h.meta.step = j.at("step").get<std::size_t>();
    h.meta.frozen = j.at("frozen").get<bool>();
    h.meta.config = config_from_json(j.at("config"));
    h.meta.vocab = j.at("vocab").get<std::vector<std::string>>();
    h.meta.extra = j.at("extra");
    std::size_t expect_offset = 0;
    for (const auto& e : j.at("entries")) {
      CheckpointHeader::Entry en;
      en.name = e.at("name").get<std::string>();
      en.shape = e.at("shape").get<Shape>();
      en.offset = e.at("offset").get<std::size_t>();
      en.count = e.at("count").get<std::size_t>();
      if (e.at("width").get<int>() != 4 || en.count != numel(en.shape) || en.offset != expect_offset) {
        throw ValidationError("checkpoint manifest entry '" + en.name + "' is inconsistent");
      }
      expect_offset += en.count;
      h.manifest.push_back(std::move(en));
    }
    h.payload_bytes = j.at("payload_bytes").get<std::size_t>();
    h.crc = j.at("crc32").get<std::uint32_t>();
    if (h.payload_bytes != 4 * expect_offset) throw ValidationError("checkpoint payload size disagrees with manifest");
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what(), 20 + e.byte);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint header: ") + e.what());
  }
  h.payload_at = 20 + hlen;
  return h;
}

/// Payload read and checksum verification; returns the complete checkpoint.
inline Checkpoint decode_checkpoint_payload(std::string_view bytes, const CheckpointHeader& h) {
  if (bytes.size() - h.payload_at != h.payload_bytes) {
    throw ParseError("checkpoint payload is " + std::to_string(bytes.size() - h.payload_at) + " bytes, expected " +
                         std::to_string(h.payload_bytes),
                     bytes.size());
  }
  const auto payload = bytes.substr(h.payload_at);
  if (detail::crc32_of(payload) != h.crc) throw ChecksumError("checkpoint payload checksum mismatch");
  Checkpoint ck = h.meta;
  for (const auto& e : h.manifest) {
    TensorRecord r{e.name, e.shape, std::vector<float>(e.count)};
    for (std::size_t i = 0; i < e.count; ++i) {
      r.data[i] = std::bit_cast<float>(static_cast<std::uint32_t>(detail::get_le(payload, 4 * (e.offset + i), 4)));
    }
    ck.entries.push_back(std::move(r));
  }
  return ck;
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
  return decode_checkpoint_payload(bytes, decode_checkpoint_header(bytes));
}

inline void save_checkpoint(const fs::path& path, const Checkpoint& ck) { write_file_atomic(path, encode_checkpoint(ck)); }

inline Checkpoint load_checkpoint(const fs::path& path) { return decode_checkpoint(read_file(path)); }

/// Records for every parameter in `params`.
inline void append_params(Checkpoint& ck, const ParamSet<float>& params) {
  for (const auto& p : params) {
    ck.entries.push_back({p.name, p.tensor.shape(), std::vector<float>(p.tensor.values().begin(), p.tensor.values().end())});
  }
}

/// Adam moments, stored as "<prefix>.m/<param>" and "<prefix>.v/<param>".
inline void append_adam(Checkpoint& ck, const std::string& prefix, const ParamSet<float>& params,
                        const AdamState<float>& opt) {
  if (opt.m.empty()) return;
  std::size_t i = 0;
  for (const auto& p : params) {
    ck.entries.push_back({prefix + ".m/" + p.name, {opt.m[i].size()}, opt.m[i]});
    ck.entries.push_back({prefix + ".v/" + p.name, {opt.v[i].size()}, opt.v[i]});
    ++i;
  }
  ck.extra[prefix + ".step"] = opt.step;
}

/// Checks that the checkpoint entries are exactly `params` (names and shapes)
/// plus optimizer moments for those params under `adam_prefixes`. Throws
/// ValidationError naming every offending entry.
inline void validate_entries(const CheckpointHeader& h, const std::vector<const ParamSet<float>*>& param_sets,
                             const std::vector<std::pair<std::string, const ParamSet<float>*>>& adam_groups) {
  std::map<std::string, Shape> expected;
  for (const auto* ps : param_sets)
    for (const auto& p : *ps) expected[p.name] = p.tensor.shape();
  std::map<std::string, std::size_t> adam_numel;
  for (const auto& [prefix, ps] : adam_groups)
    for (const auto& p : *ps) {
      adam_numel[prefix + ".m/" + p.name] = p.tensor.numel();
      adam_numel[prefix + ".v/" + p.name] = p.tensor.numel();
    }
  std::vector<std::string> unknown, drift;
  std::set<std::string> seen;
  for (const auto& e : h.manifest) {
    seen.insert(e.name);
    if (auto it = expected.find(e.name); it != expected.end()) {
      if (it->second != e.shape) drift.push_back(e.name + " " + to_string(e.shape) + " vs " + to_string(it->second));
    } else if (auto jt = adam_numel.find(e.name); jt != adam_numel.end()) {
      if (e.count != jt->second) drift.push_back(e.name);
    } else {
      unknown.push_back(e.name);
    }
  }
  std::vector<std::string> missing;
  for (const auto& [name, shape] : expected)
    if (!seen.count(name)) missing.push_back(name);
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
    return s;
  };
  if (!unknown.empty()) throw ValidationError("checkpoint has unknown entries: " + join(unknown));
  if (!drift.empty()) throw ValidationError("checkpoint shape mismatch: " + join(drift));
  if (!missing.empty()) throw ValidationError("checkpoint lacks entries: " + join(missing));
}

/// Copies entry data into matching parameters. Call after validate_entries.
inline void restore_params(const Checkpoint& ck, const ParamSet<float>& params) {
  for (const auto& p : params) {
    const auto* r = ck.find(p.name);
    if (!r) throw ValidationError("checkpoint lacks entry " + p.name);
    Tensor<float> t = p.tensor;
    auto dst = t.mutable_data();
    std::copy(r->data.begin(), r->data.end(), dst.begin());
  }
}

inline void restore_adam(const Checkpoint& ck, const std::string& prefix, const ParamSet<float>& params,
                         AdamState<float>& opt) {
  opt.m.clear();
  opt.v.clear();
  opt.step = 0;
  if (!ck.extra.contains(prefix + ".step")) return;
  opt.step = ck.extra.at(prefix + ".step").get<std::size_t>();
  for (const auto& p : params) {
    const auto* m = ck.find(prefix + ".m/" + p.name);
    const auto* v = ck.find(prefix + ".v/" + p.name);
    if (!m || !v) throw ValidationError("checkpoint lacks optimizer state for " + p.name);
    opt.m.push_back(m->data);
    opt.v.push_back(v->data);
  }
}

}  // namespace tisr
