#pragma once

#include <cstdint>
#include <string>

#include "bookalign/numerics.hpp"

namespace bookalign {

/// On-disk layout (all integers little-endian):
///   "ALIGNCKPT"  u32 version  str kind  u64 vocab_hash  u32 n_records
///   n_records x { str name  u32 rank  u64 extent[rank]  f64 data[prod(extent)] }
/// where str = u32 byte length followed by the bytes.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string kind;
  std::uint64_t vocab_hash = 0;
  ParamStore params;
};

/// Writes to a temporary sibling and renames into place.
void save_checkpoint(const std::string& path, const std::string& kind, std::uint64_t vocab_hash,
                     const ParamStore& params);

/// Throws DataError on a bad magic, version, or truncated record.
Checkpoint load_checkpoint(const std::string& path);

/// Checks the kind tag, throws DataError on mismatch.
Checkpoint load_checkpoint(const std::string& path, const std::string& expected_kind);

std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, const std::string& bytes);

/// Little-endian primitive encoding shared by the binary formats.
namespace wire {
void put_u32(std::string& out, std::uint32_t v);
void put_u64(std::string& out, std::uint64_t v);
void put_f32(std::string& out, float v);
void put_f64(std::string& out, double v);
void put_str(std::string& out, const std::string& s);

class Reader {
 public:
  Reader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string str();
  std::string raw(std::size_t n);
  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n);
  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};
}  // namespace wire

}  // namespace bookalign
