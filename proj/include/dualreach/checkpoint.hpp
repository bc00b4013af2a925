// Binary checkpoint primitives. All integers and floats are little-endian;
// the full file layout is described in docs/checkpoint.md.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualreach/nnet.hpp"

namespace dualreach::nn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}
  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v);
  void bytes(std::string_view s);  // u64 length + raw bytes
  void array(std::span<const double> values);  // u64 length + f64 values

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& in) : in_(in) {}
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64();
  std::string bytes();
  std::vector<double> array();
  // Reads an array that must have exactly `out.size()` entries.
  void array_into(std::span<double> out);

 private:
  void raw(char* dst, std::size_t n);
  std::istream& in_;
};

void write_network(BinaryWriter& w, const Network& net);
Network read_network(BinaryReader& r);

void write_adam(BinaryWriter& w, const AdamState& adam);
AdamState read_adam(BinaryReader& r);

}  // namespace dualreach::nn
