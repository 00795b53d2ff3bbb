#include "gradmask/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "gradmask/errors.hpp"

namespace gradmask {

using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "GRADMASK-CKPT\n";

void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + b])) << (8 * b);
  return v;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

const CheckpointTensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw CheckpointError("checkpoint has no tensor named " + name);
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  json header = {{"format", "gradmask-checkpoint"},
                 {"format_version", kCheckpointVersion},
                 {"config_hash", ckpt.config_hash},
                 {"meta", ckpt.meta},
                 {"tensors", json::array()}};
  for (const auto& t : ckpt.tensors) {
    if (t.values.size() != shape_numel(t.shape)) throw CheckpointError("tensor " + t.name + " has inconsistent shape");
    header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}});
  }
  const std::string header_text = header.dump();
  std::string blob(kMagic);
  put_u64(blob, header_text.size());
  blob += header_text;
  for (const auto& t : ckpt.tensors)
    for (double v : t.values) put_u64(blob, std::bit_cast<std::uint64_t>(v));
  put_u64(blob, fnv1a(blob));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw CheckpointError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() < kMagic.size() + 16 || blob.compare(0, kMagic.size(), kMagic) != 0) {
    throw CheckpointError(path + " is not a gradmask checkpoint");
  }
  const std::size_t body = blob.size() - 8;
  if (fnv1a(std::string_view(blob).substr(0, body)) != get_u64(blob, body)) {
    throw CheckpointError(path + ": checksum mismatch (file corrupt or truncated)");
  }
  const std::size_t header_len = get_u64(blob, kMagic.size());
  const std::size_t header_pos = kMagic.size() + 8;
  if (header_pos + header_len > body) throw CheckpointError(path + ": header overruns file");
  json header;
  try {
    header = json::parse(blob.substr(header_pos, header_len));
  } catch (const json::exception& e) {
    throw CheckpointError(path + ": unreadable header: " + e.what());
  }
  const int version = header.value("format_version", -1);
  if (version != kCheckpointVersion) {
    throw IncompatibleCheckpointError(path + ": checkpoint format version " + std::to_string(version) +
                                      " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ckpt;
  try {
    ckpt.config_hash = header.at("config_hash").get<std::string>();
    ckpt.meta = header.at("meta");
    std::size_t pos = header_pos + header_len;
    for (const auto& jt : header.at("tensors")) {
      CheckpointTensor t;
      t.name = jt.at("name").get<std::string>();
      t.shape = jt.at("shape").get<Shape>();
      const std::size_t count = shape_numel(t.shape);
      if (pos + count * 8 > body) throw CheckpointError(path + ": payload truncated at " + t.name);
      t.values.resize(count);
      for (std::size_t i = 0; i < count; ++i, pos += 8) t.values[i] = std::bit_cast<double>(get_u64(blob, pos));
      ckpt.tensors.push_back(std::move(t));
    }
    if (pos != body) throw CheckpointError(path + ": trailing bytes after payload");
  } catch (const json::exception& e) {
    throw CheckpointError(path + ": malformed header: " + e.what());
  }
  return ckpt;
}

}  // namespace gradmask
