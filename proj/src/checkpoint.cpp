#include "bookalign/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bookalign/error.hpp"

namespace bookalign {

namespace {
constexpr char kMagic[] = "ALIGNCKPT";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;
}  // namespace

namespace wire {

void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

void Reader::need(std::size_t n) {
  if (bytes_.size() - pos_ < n) {
    throw DataError(source_ + ": truncated at byte " + std::to_string(pos_));
  }
}

std::uint32_t Reader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + k])) << (8 * k);
  pos_ += 4;
  return v;
}

std::uint64_t Reader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + k])) << (8 * k);
  pos_ += 8;
  return v;
}

float Reader::f32() { return std::bit_cast<float>(u32()); }
double Reader::f64() { return std::bit_cast<double>(u64()); }

std::string Reader::str() {
  const std::uint32_t n = u32();
  return raw(n);
}

std::string Reader::raw(std::size_t n) {
  need(n);
  std::string s = bytes_.substr(pos_, n);
  pos_ += n;
  return s;
}

}  // namespace wire

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw DataError("cannot rename '" + tmp + "' to '" + path + "'");
  }
}

void save_checkpoint(const std::string& path, const std::string& kind, std::uint64_t vocab_hash,
                     const ParamStore& params) {
  std::string out(kMagic, kMagicLen);
  wire::put_u32(out, Checkpoint::kVersion);
  wire::put_str(out, kind);
  wire::put_u64(out, vocab_hash);
  wire::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, e] : params) {
    wire::put_str(out, name);
    wire::put_u32(out, static_cast<std::uint32_t>(e.value.rank()));
    for (auto d : e.value.shape) wire::put_u64(out, d);
    for (Eigen::Index k = 0; k < e.value.data.size(); ++k) wire::put_f64(out, e.value.data[k]);
  }
  write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string bytes = read_file(path);
  wire::Reader in(bytes, path);
  if (in.raw(std::min(kMagicLen, bytes.size())) != std::string(kMagic, kMagicLen)) {
    throw DataError(path + ": not a checkpoint (bad magic)");
  }
  const std::uint32_t version = in.u32();
  if (version != Checkpoint::kVersion) {
    throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.kind = in.str();
  ck.vocab_hash = in.u64();
  const std::uint32_t n = in.u32();
  for (std::uint32_t r = 0; r < n; ++r) {
    std::string name = in.str();
    const std::uint32_t rank = in.u32();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = in.u64();
    DenseTensor t(shape);
    for (Eigen::Index k = 0; k < t.data.size(); ++k) t.data[k] = in.f64();
    ck.params.add(name, std::move(t));
  }
  if (!in.at_end()) throw DataError(path + ": trailing bytes after last record");
  return ck;
}

Checkpoint load_checkpoint(const std::string& path, const std::string& expected_kind) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.kind != expected_kind) {
    throw DataError(path + ": checkpoint kind '" + ck.kind + "', expected '" + expected_kind + "'");
  }
  return ck;
}

}  // namespace bookalign
