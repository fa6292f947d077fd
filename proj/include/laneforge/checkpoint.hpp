#pragma once

// LFCK checkpoint files.
//
//   magic "LFCK", u32 version = 1, u32 tensor count
//   per tensor: u16 name length, UTF-8 name, u8 rank, u32 dims...,
//               u8 dtype (0 = f32, 1 = f64), raw little-endian elements
//   UTF-8 JSON trailer {spec, phase, seed, epoch}, u64 trailer length footer
//
// All integers little-endian.

#include <cstring>
#include <fstream>
#include <string>

#include <json.hpp>

#include "laneforge/model.hpp"

namespace laneforge {

namespace detail {

template <class T>
void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));  // build targets are little-endian
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw IoError("checkpoint truncated");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

inline nlohmann::json spec_to_json(const ModelSpec& s) {
  return nlohmann::json{{"variant", variant_name(s.variant)},
                        {"input_height", s.input_height},
                        {"input_width", s.input_width},
                        {"sequence_length", s.sequence_length},
                        {"base_channels", s.base_channels},
                        {"head_channels", s.head_channels},
                        {"scnn_kernel_len", s.scnn_kernel_len},
                        {"convlstm_layers", s.convlstm_layers},
                        {"convlstm_hidden", s.convlstm_hidden}};
}

inline ModelSpec spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.variant = variant_from(j.at("variant").get<std::string>());
  s.input_height = j.at("input_height").get<int>();
  s.input_width = j.at("input_width").get<int>();
  s.sequence_length = j.at("sequence_length").get<int>();
  s.base_channels = j.at("base_channels").get<int>();
  s.head_channels = j.at("head_channels").get<int>();
  s.scnn_kernel_len = j.at("scnn_kernel_len").get<int>();
  s.convlstm_layers = j.at("convlstm_layers").get<int>();
  s.convlstm_hidden = j.at("convlstm_hidden").get<int>();
  return s;
}

}  // namespace detail

template <class Real>
void save_checkpoint(const Checkpoint<Real>& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write("LFCK", 4);
  detail::write_le<std::uint32_t>(os, 1u);
  detail::write_le<std::uint32_t>(os, (std::uint32_t)ck.params.count());
  for (std::size_t i = 0; i < ck.params.count(); ++i) {
    const std::string& name = ck.params.names()[i];
    const Tensor<Real>& t = ck.params.tensor(i);
    detail::write_le<std::uint16_t>(os, (std::uint16_t)name.size());
    os.write(name.data(), (std::streamsize)name.size());
    detail::write_le<std::uint8_t>(os, (std::uint8_t)t.rank());
    for (int d = 0; d < t.rank(); ++d) detail::write_le<std::uint32_t>(os, (std::uint32_t)t.dim(d));
    detail::write_le<std::uint8_t>(os, sizeof(Real) == 4 ? 0 : 1);
    os.write(reinterpret_cast<const char*>(t.data()), (std::streamsize)(t.size() * (long long)sizeof(Real)));
  }
  nlohmann::json trailer{{"spec", detail::spec_to_json(ck.spec)},
                         {"phase", phase_name(ck.phase)},
                         {"seed", ck.rng_seed},
                         {"epoch", ck.epoch}};
  std::string tj = trailer.dump();
  os.write(tj.data(), (std::streamsize)tj.size());
  detail::write_le<std::uint64_t>(os, (std::uint64_t)tj.size());
  if (!os) throw IoError("failed writing checkpoint '" + path + "'");
}

template <class Real>
Checkpoint<Real> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "LFCK", 4) != 0) throw IoError("bad checkpoint magic in '" + path + "'");
  auto version = detail::read_le<std::uint32_t>(is);
  if (version != 1) throw IoError("unsupported checkpoint version " + std::to_string(version));
  auto count = detail::read_le<std::uint32_t>(is);

  Checkpoint<Real> ck;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto nlen = detail::read_le<std::uint16_t>(is);
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    auto rank = detail::read_le<std::uint8_t>(is);
    Shape shape;
    for (int d = 0; d < (int)rank; ++d) shape.push_back((int)detail::read_le<std::uint32_t>(is));
    auto dtype = detail::read_le<std::uint8_t>(is);
    if (dtype > 1) throw IoError("unknown dtype code in checkpoint");
    long long n = numel(shape);
    Tensor<Real> t(shape);
    if ((dtype == 0 && sizeof(Real) == 4) || (dtype == 1 && sizeof(Real) == 8)) {
      is.read(reinterpret_cast<char*>(t.data()), (std::streamsize)(n * (long long)sizeof(Real)));
    } else if (dtype == 0) {
      std::vector<float> buf((std::size_t)n);
      is.read(reinterpret_cast<char*>(buf.data()), (std::streamsize)(n * 4));
      for (long long k = 0; k < n; ++k) t.data()[k] = (Real)buf[(std::size_t)k];
    } else {
      std::vector<double> buf((std::size_t)n);
      is.read(reinterpret_cast<char*>(buf.data()), (std::streamsize)(n * 8));
      for (long long k = 0; k < n; ++k) t.data()[k] = (Real)buf[(std::size_t)k];
    }
    if (!is) throw IoError("checkpoint tensor payload truncated");
    t.set_requires_grad(true);
    ck.params.add(name, std::move(t));
  }

  std::string tj;
  {
    auto pos = is.tellg();
    is.seekg(0, std::ios::end);
    auto end = is.tellg();
    if (end - pos < 8) throw IoError("checkpoint trailer missing");
    is.seekg(end - std::streamoff(8));
    auto tlen = detail::read_le<std::uint64_t>(is);
    if ((std::uint64_t)(end - pos) != tlen + 8) throw IoError("checkpoint trailer length mismatch");
    tj.resize(tlen);
    is.seekg(pos);
    is.read(tj.data(), (std::streamsize)tlen);
    if (!is) throw IoError("checkpoint trailer truncated");
  }
  nlohmann::json trailer = nlohmann::json::parse(tj);
  ck.spec = detail::spec_from_json(trailer.at("spec"));
  ck.phase = phase_from(trailer.at("phase").get<std::string>());
  ck.rng_seed = trailer.at("seed").get<std::uint64_t>();
  ck.epoch = trailer.at("epoch").get<int>();
  ck.spec.validate();
  return ck;
}

}  // namespace laneforge
