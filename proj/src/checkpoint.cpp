// Copyright 2026 The sslnas Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Checkpoint container:
//   "SSLNASCK" | u64 manifest bytes | manifest JSON | u64 doubles | doubles |
//   u64 FNV-1a of everything before it.
// The manifest maps tensor names to [offset, size) ranges of the payload.

#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sslnas/error.hpp"
#include "sslnas/trainer.hpp"

namespace sslnas {

namespace {

constexpr char kMagic[8] = {'S', 'S', 'L', 'N', 'A', 'S', 'C', 'K'};

void put_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

std::uint64_t get_u64(const std::string& in, size_t& pos) {
  if (pos + 8 > in.size()) throw IntegrityError("checkpoint truncated at byte " + std::to_string(pos));
  std::uint64_t v;
  std::memcpy(&v, in.data() + pos, 8);
  pos += 8;
  return v;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::ordered_json manifest;
  manifest["schema_version"] = kCheckpointSchemaVersion;
  manifest["phase"] = ckpt.phase;
  manifest["epoch"] = ckpt.epoch;
  manifest["config_hash"] = hex(ckpt.config_hash);
  manifest["space_hash"] = ckpt.space_hash;
  manifest["arch"] = ckpt.arch_json;
  // Every random stream is derived from (seed, phase, epoch, iteration), so
  // there is no generator cursor to store.
  manifest["rng"] = "derived";
  manifest["counters"] = ckpt.counters;

  std::vector<double> payload;
  auto add = [&](const std::string& name, const std::vector<double>& v) {
    nlohmann::ordered_json t;
    t["name"] = name;
    t["offset"] = payload.size();
    t["size"] = v.size();
    payload.insert(payload.end(), v.begin(), v.end());
    return t;
  };
  manifest["alphas"] = nlohmann::ordered_json::array();
  for (size_t i = 0; i < ckpt.alphas.size(); ++i)
    manifest["alphas"].push_back(add("alpha." + std::to_string(i), ckpt.alphas[i]));
  manifest["tensors"] = nlohmann::ordered_json::array();
  for (const auto& [name, v] : ckpt.tensors) manifest["tensors"].push_back(add(name, v));

  const std::string text = manifest.dump();
  std::string blob(kMagic, 8);
  put_u64(blob, text.size());
  blob += text;
  put_u64(blob, payload.size());
  blob.append(reinterpret_cast<const char*>(payload.data()), payload.size() * sizeof(double));
  put_u64(blob, fnv1a(blob));

  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::uint64_t expected_config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() < 8 + 8 + 8 + 8 || std::memcmp(blob.data(), kMagic, 8) != 0)
    throw IntegrityError(path.string() + ": not a checkpoint file");
  size_t tail = blob.size() - 8;
  size_t pos = tail;
  const std::uint64_t stored = get_u64(blob, pos);
  const std::uint64_t actual = fnv1a(std::string_view(blob.data(), tail));
  if (stored != actual)
    throw IntegrityError(path.string() + ": content hash mismatch (stored " + hex(stored) + ", computed " +
                         hex(actual) + ")");

  pos = 8;
  const std::uint64_t mlen = get_u64(blob, pos);
  if (pos + mlen > tail) throw IntegrityError(path.string() + ": manifest overruns file");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(blob.substr(pos, mlen));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(path.string() + ": unreadable manifest: " + e.what());
  }
  pos += mlen;
  const std::uint64_t count = get_u64(blob, pos);
  if (pos + count * sizeof(double) != tail) throw IntegrityError(path.string() + ": payload size mismatch");
  std::vector<double> payload(count);
  std::memcpy(payload.data(), blob.data() + pos, count * sizeof(double));

  Checkpoint ck;
  try {
    if (manifest.at("schema_version").get<int>() != kCheckpointSchemaVersion)
      throw IntegrityError(path.string() + ": unsupported schema_version " +
                           manifest.at("schema_version").dump());
    ck.phase = manifest.at("phase").get<std::string>();
    ck.epoch = manifest.at("epoch").get<int>();
    ck.config_hash = std::stoull(manifest.at("config_hash").get<std::string>(), nullptr, 16);
    ck.space_hash = manifest.at("space_hash").get<std::string>();
    ck.arch_json = manifest.at("arch").get<std::string>();
    ck.counters = manifest.at("counters").get<std::map<std::string, std::int64_t>>();
    auto slice = [&](const nlohmann::json& t) {
      const auto off = t.at("offset").get<std::uint64_t>();
      const auto size = t.at("size").get<std::uint64_t>();
      if (off + size > payload.size()) throw IntegrityError(path.string() + ": tensor range out of bounds");
      return std::vector<double>(payload.begin() + static_cast<std::ptrdiff_t>(off),
                                 payload.begin() + static_cast<std::ptrdiff_t>(off + size));
    };
    for (const auto& t : manifest.at("alphas")) ck.alphas.push_back(slice(t));
    for (const auto& t : manifest.at("tensors")) ck.tensors[t.at("name").get<std::string>()] = slice(t);
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(path.string() + ": malformed manifest: " + e.what());
  }
  if (expected_config_hash != 0 && ck.config_hash != expected_config_hash)
    throw IntegrityError(path.string() + ": config hash mismatch (checkpoint " + hex(ck.config_hash) +
                         ", current config " + hex(expected_config_hash) + ")");
  return ck;
}

}  // namespace sslnas
