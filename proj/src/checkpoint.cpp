#include "dualreach/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

namespace dualreach::nn {

// Refuse absurd lengths from corrupt files before allocating.
constexpr std::uint64_t kMaxArray = std::uint64_t{1} << 31;

void BinaryWriter::u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }

void BinaryWriter::u32(std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out_.write(buf, 4);
}

void BinaryWriter::u64(std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out_.write(buf, 8);
}

void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::bytes(std::string_view s) {
  u64(s.size());
  out_.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void BinaryWriter::array(std::span<const double> values) {
  u64(values.size());
  for (double v : values) f64(v);
}

void BinaryReader::raw(char* dst, std::size_t n) {
  in_.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) throw CheckpointError("checkpoint truncated");
}

std::uint8_t BinaryReader::u8() {
  char c;
  raw(&c, 1);
  return static_cast<std::uint8_t>(c);
}

std::uint32_t BinaryReader::u32() {
  unsigned char buf[4];
  raw(reinterpret_cast<char*>(buf), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

std::uint64_t BinaryReader::u64() {
  unsigned char buf[8];
  raw(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

std::string BinaryReader::bytes() {
  const auto n = u64();
  if (n > kMaxArray) throw CheckpointError("checkpoint string too long");
  std::string s(n, '\0');
  raw(s.data(), n);
  return s;
}

std::vector<double> BinaryReader::array() {
  const auto n = u64();
  if (n > kMaxArray) throw CheckpointError("checkpoint array too long");
  std::vector<double> out(n);
  for (auto& v : out) v = f64();
  return out;
}

void BinaryReader::array_into(std::span<double> out) {
  const auto n = u64();
  if (n != out.size())
    throw CheckpointError("checkpoint array has " + std::to_string(n) + " values, expected " +
                          std::to_string(out.size()));
  for (auto& v : out) v = f64();
}

void write_network(BinaryWriter& w, const Network& net) {
  w.u32(static_cast<std::uint32_t>(net.input_dim()));
  w.u32(static_cast<std::uint32_t>(net.specs().size()));
  for (const auto& s : net.specs()) {
    w.u8(static_cast<std::uint8_t>(s.kind));
    w.u32(static_cast<std::uint32_t>(s.width));
    w.u8(static_cast<std::uint8_t>(s.init));
    w.f64(s.init_range);
    w.f64(s.keep_prob);
  }
  const auto arrays = net.state_arrays();
  w.u32(static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) w.array(a);
}

Network read_network(BinaryReader& r) {
  const auto input_dim = r.u32();
  const auto nspecs = r.u32();
  if (input_dim == 0 || input_dim > (1u << 20) || nspecs > 4096)
    throw CheckpointError("implausible network header");
  std::vector<LayerSpec> specs(nspecs);
  for (auto& s : specs) {
    const auto kind = r.u8();
    if (kind > static_cast<std::uint8_t>(LayerKind::kTanh)) throw CheckpointError("unknown layer kind");
    s.kind = static_cast<LayerKind>(kind);
    s.width = static_cast<int>(r.u32());
    const auto init = r.u8();
    if (init > static_cast<std::uint8_t>(Init::kUniformRange)) throw CheckpointError("unknown init scheme");
    s.init = static_cast<Init>(init);
    s.init_range = r.f64();
    s.keep_prob = r.f64();
  }
  Rng scratch(0);
  Network net;
  try {
    net = Network(static_cast<int>(input_dim), std::move(specs), scratch);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("invalid layer specs: ") + e.what());
  }
  auto arrays = net.state_arrays();
  if (r.u32() != arrays.size()) throw CheckpointError("network array count mismatch");
  for (auto& a : arrays) r.array_into(a);
  return net;
}

void write_adam(BinaryWriter& w, const AdamState& adam) {
  w.f64(adam.config.learning_rate);
  w.f64(adam.config.beta1);
  w.f64(adam.config.beta2);
  w.f64(adam.config.eps);
  w.i64(adam.step);
  w.u32(static_cast<std::uint32_t>(adam.m.size()));
  for (std::size_t i = 0; i < adam.m.size(); ++i) {
    w.array({adam.m[i].data(), static_cast<std::size_t>(adam.m[i].size())});
    w.array({adam.v[i].data(), static_cast<std::size_t>(adam.v[i].size())});
  }
}

AdamState read_adam(BinaryReader& r) {
  AdamState a;
  a.config.learning_rate = r.f64();
  a.config.beta1 = r.f64();
  a.config.beta2 = r.f64();
  a.config.eps = r.f64();
  a.step = r.i64();
  if (a.step < 0) throw CheckpointError("negative Adam step counter");
  const auto n = r.u32();
  if (n > 4096) throw CheckpointError("implausible Adam state");
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto m = r.array();
    const auto v = r.array();
    if (m.size() != v.size()) throw CheckpointError("Adam moment shape mismatch");
    a.m.push_back(Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(m.size())));
    a.v.push_back(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  return a;
}

}  // namespace dualreach::nn
