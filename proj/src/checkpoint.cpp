// Copyright (c) 2026, The mtlearn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint layout (all integers little-endian):
//   "MTLC" | u32 version (=1) | u64 header length | UTF-8 JSON header |
//   float64 payload | u64 FNV-1a of the payload bytes
// Header: {dims, seed, tasks, adapters, tensors: {name: {shape, offset}}},
// offsets in bytes from the start of the payload.

#include <bit>
#include <cstring>

#include "json.hpp"
#include "mtl/io.hpp"
#include "mtl/model.hpp"

namespace mtl {

namespace {

using json = nlohmann::json;

constexpr char kMagic[4] = {'M', 'T', 'L', 'C'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kPrefixBytes = 4 + 4 + 8;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(in[at + i]);
  return v;
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(in[at + i]);
  return v;
}

FormatError format_error(const std::string& what, std::size_t offset) {
  return FormatError("checkpoint: " + what + " at byte offset " + std::to_string(offset));
}

json task_to_json(const TaskSpec& t) {
  return json{{"id", t.id},
              {"name", t.name},
              {"kind", std::string(to_string(t.kind))},
              {"loss", std::string(to_string(t.loss))},
              {"alpha", t.alpha},
              {"lr", t.lr},
              {"num_classes", t.num_classes}};
}

TaskSpec task_from_json(const json& j) {
  TaskSpec t;
  t.id = j.at("id").get<int>();
  t.name = j.at("name").get<std::string>();
  t.kind = parse_task_kind(j.at("kind").get<std::string>());
  t.loss = parse_loss_kind(j.at("loss").get<std::string>());
  t.alpha = j.at("alpha").get<double>();
  t.lr = j.at("lr").get<double>();
  t.num_classes = j.at("num_classes").get<std::size_t>();
  return t;
}

}  // namespace

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  ModelParams p = params;
  json tensors = json::object();
  std::string payload;
  for (const NamedTensor& nt : p.named_tensors()) {
    tensors[nt.name] = json{{"shape", nt.tensor->shape()}, {"offset", payload.size()}};
    for (double v : nt.tensor->values()) put_u64(payload, std::bit_cast<std::uint64_t>(v));
  }
  json tasks = json::array();
  for (const TaskSpec& t : p.tasks) tasks.push_back(task_to_json(t));
  json adapters = json::object();
  for (const auto& [id, ad] : p.adapters) adapters[std::to_string(id)] = json{{"scale", ad.scale}, {"rank", ad.rank()}};
  const json header{{"dims", {{"vocab", p.dims.vocab}, {"d", p.dims.d}, {"d_hidden", p.dims.d_hidden}}},
                    {"seed", p.seed},
                    {"tasks", tasks},
                    {"adapters", adapters},
                    {"tensors", tensors}};
  const std::string header_text = header.dump();

  std::string bytes(kMagic, 4);
  put_u32(bytes, kVersion);
  put_u64(bytes, header_text.size());
  bytes += header_text;
  bytes += payload;
  put_u64(bytes, fnv1a64({reinterpret_cast<const unsigned char*>(payload.data()), payload.size()}));

  write_file_atomic(path, bytes);
}

ModelParams load_checkpoint(const std::filesystem::path& path, const std::optional<ModelDims>& expected) {
  const std::string bytes = read_file(path);

  if (bytes.size() < kPrefixBytes) throw format_error("truncated prefix", bytes.size());
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw format_error("bad magic", 0);
  if (get_u32(bytes, 4) != kVersion) throw format_error("unsupported version " + std::to_string(get_u32(bytes, 4)), 4);
  const std::uint64_t header_len = get_u64(bytes, 8);
  if (header_len > bytes.size() - kPrefixBytes) throw format_error("truncated header", bytes.size());
  const std::size_t payload_begin = kPrefixBytes + header_len;
  if (bytes.size() - payload_begin < 8) throw format_error("missing checksum", bytes.size());
  const std::size_t payload_len = bytes.size() - payload_begin - 8;
  if (payload_len % 8 != 0) throw format_error("payload is not a whole number of float64 values", payload_begin);

  const auto* payload = reinterpret_cast<const unsigned char*>(bytes.data() + payload_begin);
  if (fnv1a64({payload, payload_len}) != get_u64(bytes, payload_begin + payload_len)) {
    throw format_error("payload checksum mismatch", payload_begin + payload_len);
  }

  json header;
  try {
    header = json::parse(bytes.begin() + kPrefixBytes, bytes.begin() + static_cast<std::ptrdiff_t>(payload_begin));
  } catch (const json::exception& e) {
    throw format_error(std::string("malformed header: ") + e.what(), kPrefixBytes);
  }

  ModelParams p;
  try {
    const json& dims = header.at("dims");
    p.dims = ModelDims{dims.at("vocab").get<std::size_t>(), dims.at("d").get<std::size_t>(),
                       dims.at("d_hidden").get<std::size_t>()};
    p.seed = header.at("seed").get<std::uint64_t>();
    for (const json& t : header.at("tasks")) p.tasks.push_back(task_from_json(t));
    validate_tasks(p.tasks);

    // Skeleton with the right variant per task, then fill every tensor by name.
    const std::size_t V = p.dims.vocab, d = p.dims.d, dh = p.dims.d_hidden;
    p.encoder = EncoderParams{Tensor::zeros({V, d}), Tensor::zeros({d, dh}), Tensor::zeros({dh}),
                              Tensor::zeros({dh, d}), Tensor::zeros({d})};
    for (const TaskSpec& t : p.tasks) {
      switch (t.kind) {
        case TaskKind::Classification:
          p.heads[t.id] = ClassifierHead{Tensor::zeros({d, t.num_classes}), Tensor::zeros({t.num_classes})};
          break;
        case TaskKind::Generation:
          p.heads[t.id] = GeneratorHead{Tensor::zeros({V, d}), Tensor::zeros({2 * d, dh}), Tensor::zeros({dh}),
                                        Tensor::zeros({dh, V}), Tensor::zeros({V})};
          break;
        case TaskKind::Regression:
          p.heads[t.id] = RegressionHead{Tensor::zeros({d, 1}), Tensor::zeros({1})};
          break;
      }
    }
    for (const auto& [key, ad] : header.at("adapters").items()) {
      const std::size_t r = ad.at("rank").get<std::size_t>();
      p.adapters[std::stoi(key)] = LoraAdapter{Tensor::zeros({d, r}), Tensor::zeros({r, dh}), ad.at("scale").get<double>()};
    }

    const json& tensors = header.at("tensors");
    auto named = p.named_tensors();
    if (tensors.size() != named.size()) throw format_error("tensor table does not match the task table", kPrefixBytes);
    for (NamedTensor& nt : named) {
      const json& entry = tensors.at(nt.name);
      const Shape shape = entry.at("shape").get<Shape>();
      if (shape != nt.tensor->shape()) {
        throw format_error("tensor " + nt.name + " has shape " + shape_string(shape) + ", expected " +
                               shape_string(nt.tensor->shape()),
                           kPrefixBytes);
      }
      const std::size_t offset = entry.at("offset").get<std::size_t>();
      const std::size_t n = shape_size(shape);
      if (offset % 8 != 0 || offset > payload_len || n * 8 > payload_len - offset) {
        throw format_error("tensor " + nt.name + " exceeds the payload", payload_begin + offset);
      }
      std::vector<double> values(n);
      for (std::size_t i = 0; i < n; ++i) {
        values[i] = std::bit_cast<double>(get_u64(bytes, payload_begin + offset + 8 * i));
      }
      try {
        *nt.tensor = Tensor(shape, std::move(values));
      } catch (const NumericError&) {
        throw format_error("non-finite value in tensor " + nt.name, payload_begin + offset);
      }
    }
  } catch (const json::exception& e) {
    throw format_error(std::string("malformed header: ") + e.what(), kPrefixBytes);
  } catch (const ConfigError& e) {
    throw format_error(std::string("invalid task table: ") + e.what(), kPrefixBytes);
  }

  if (expected && !(*expected == p.dims)) {
    throw DimensionError("checkpoint dims " + to_string(p.dims) + " do not match expected " + to_string(*expected));
  }
  return p;
}

}  // namespace mtl
