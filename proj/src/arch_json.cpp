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

#include <string>

#include <json.hpp>

#include "sslnas/error.hpp"
#include "sslnas/search_space.hpp"

namespace sslnas {

using nlohmann::json;

namespace {

std::string kind_name(OpKind k) {
  switch (k) {
    case OpKind::MBConv:
      return "mbconv";
    case OpKind::Zero:
      return "zero";
    case OpKind::Basic:
      return "basic";
    case OpKind::Bottleneck:
      return "bottleneck";
  }
  return "?";
}

json op_to_json(const CellOp& op) {
  json j = {{"kind", kind_name(op.kind)}};
  if (op.kind == OpKind::MBConv) {
    j["kernel"] = op.kernel;
    j["expansion"] = op.expansion;
  }
  return j;
}

// Field accessors that report the JSON pointer of whatever is wrong.
const json& field(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ParseError(path, -1, path + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(path + "/" + key, -1, path + "/" + key + ": missing field");
  return *it;
}

long get_int(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_number_integer())
    throw ParseError(path + "/" + key, -1, path + "/" + key + ": expected an integer");
  return v.get<long>();
}

std::string get_string(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_string()) throw ParseError(path + "/" + key, -1, path + "/" + key + ": expected a string");
  return v.get<std::string>();
}

OpKind parse_kind(const std::string& s, const std::string& path) {
  if (s == "mbconv") return OpKind::MBConv;
  if (s == "zero") return OpKind::Zero;
  if (s == "basic") return OpKind::Basic;
  if (s == "bottleneck") return OpKind::Bottleneck;
  throw ParseError(path, -1, path + ": unknown op kind '" + s + "'");
}

template <size_t N>
std::array<int, N> get_blocks(const json& obj, const std::string& path) {
  const json& v = field(obj, "blocks", path);
  const std::string p = path + "/blocks";
  if (!v.is_array() || v.size() != N)
    throw ParseError(p, -1, p + ": expected an array of " + std::to_string(N) + " integers");
  std::array<int, N> out{};
  for (size_t i = 0; i < N; ++i) {
    if (!v[i].is_number_integer())
      throw ParseError(p + "/" + std::to_string(i), -1, p + "/" + std::to_string(i) + ": expected an integer");
    out[i] = v[i].get<int>();
  }
  return out;
}

}  // namespace

std::string serialize_arch(const ArchitectureSpec& arch) {
  validate_arch(arch);
  json doc;
  doc["schema_version"] = kArchSchemaVersion;
  doc["family"] = family_name(arch.family);
  doc["width_multiplier"] = arch.width_multiplier;
  json cells = json::array();
  for (const auto& c : arch.cells) cells.push_back({{"stage", c.stage}, {"op", op_to_json(c.op)}});
  doc["cells"] = std::move(cells);
  if (arch.family == Family::ResNetLike) {
    doc["resnet"] = {{"blocks", arch.resnet.blocks},
                     {"block", kind_name(arch.resnet.block)},
                     {"groups", arch.resnet.groups}};
  } else if (arch.family == Family::MobileNetLike) {
    doc["mobilenet"] = {{"blocks", arch.mobilenet.blocks}};
  }
  return doc.dump(2) + "\n";
}

ArchitectureSpec parse_arch(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("", static_cast<long>(e.byte), std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("", 0, "architecture document must be a JSON object");

  const long version = get_int(doc, "schema_version", "");
  if (version != kArchSchemaVersion)
    throw ParseError("/schema_version", -1,
                     "/schema_version: unsupported version " + std::to_string(version));

  ArchitectureSpec arch;
  const std::string fam = get_string(doc, "family", "");
  try {
    arch.family = parse_family(fam);
  } catch (const DomainError&) {
    throw ParseError("/family", -1, "/family: unknown family '" + fam + "'");
  }
  const json& w = field(doc, "width_multiplier", "");
  if (!w.is_number()) throw ParseError("/width_multiplier", -1, "/width_multiplier: expected a number");
  arch.width_multiplier = w.get<double>();
  if (!(arch.width_multiplier > 0.0))
    throw ParseError("/width_multiplier", -1, "/width_multiplier: must be positive");

  const json& cells = field(doc, "cells", "");
  if (!cells.is_array()) throw ParseError("/cells", -1, "/cells: expected an array");
  for (size_t i = 0; i < cells.size(); ++i) {
    const std::string path = "/cells/" + std::to_string(i);
    CellSpec c;
    c.stage = static_cast<int>(get_int(cells[i], "stage", path));
    const json& op = field(cells[i], "op", path);
    const std::string op_path = path + "/op";
    c.op.kind = parse_kind(get_string(op, "kind", op_path), op_path + "/kind");
    if (c.op.kind == OpKind::MBConv) {
      c.op.kernel = static_cast<int>(get_int(op, "kernel", op_path));
      c.op.expansion = static_cast<int>(get_int(op, "expansion", op_path));
    } else if (op.contains("kernel") || op.contains("expansion")) {
      throw ParseError(op_path, -1, op_path + ": " + kind_name(c.op.kind) + " op carries no kernel/expansion");
    }
    try {
      validate_op(c.op);
    } catch (const StructuralError& e) {
      throw ParseError(op_path, -1, op_path + ": " + e.what());
    }
    arch.cells.push_back(c);
  }

  if (arch.family == Family::ResNetLike) {
    const json& r = field(doc, "resnet", "");
    arch.resnet.blocks = get_blocks<4>(r, "/resnet");
    arch.resnet.block = parse_kind(get_string(r, "block", "/resnet"), "/resnet/block");
    arch.resnet.groups = static_cast<int>(get_int(r, "groups", "/resnet"));
  } else if (arch.family == Family::MobileNetLike) {
    const json& m = field(doc, "mobilenet", "");
    arch.mobilenet.blocks = get_blocks<6>(m, "/mobilenet");
  }

  try {
    validate_arch(arch);
  } catch (const StructuralError& e) {
    throw ParseError("/cells", -1, std::string("/cells: ") + e.what());
  }
  return arch;
}

}  // namespace sslnas
