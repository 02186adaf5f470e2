#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "otss/model.hpp"

namespace otss {

// Checkpoint format: magic "OTSS", u32 LE version, u32 LE array count; per
// array: u16 LE name length + UTF-8 name, u8 rank, u32 LE dims, then
// row-major little-endian f32 data. Model configuration travels as rank-1
// "cfg.*" arrays so a checkpoint is self-describing.

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void write_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i)
    buf[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return static_cast<T>(v);
}

inline void write_f32(std::ostream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  write_le<std::uint32_t>(out, bits);
}

inline float read_f32(std::istream& in) {
  std::uint32_t bits = read_le<std::uint32_t>(in);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out,
                             const std::map<std::string, Mat>& arrays) {
  out.write("OTSS", 4);
  detail::write_le<std::uint32_t>(out, kCheckpointVersion);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, m] : arrays) {
    detail::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    bool vec = m.cols() == 1;
    detail::write_le<std::uint8_t>(out, vec ? 1 : 2);
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
    if (!vec) detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j)
        detail::write_f32(out, static_cast<float>(m(i, j)));
  }
}

inline std::map<std::string, Mat> read_checkpoint(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "OTSS", 4) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  std::uint32_t version = detail::read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported format version " +
                             std::to_string(version));
  std::uint32_t count = detail::read_le<std::uint32_t>(in);
  std::map<std::string, Mat> arrays;
  for (std::uint32_t k = 0; k < count; ++k) {
    std::uint16_t len = detail::read_le<std::uint16_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    std::uint8_t rank = detail::read_le<std::uint8_t>(in);
    if (rank < 1 || rank > 2)
      throw std::runtime_error("checkpoint: unsupported rank for " + name);
    std::uint32_t rows = detail::read_le<std::uint32_t>(in);
    std::uint32_t cols = rank == 2 ? detail::read_le<std::uint32_t>(in) : 1;
    Mat m(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i)
      for (std::uint32_t j = 0; j < cols; ++j)
        m(i, j) = static_cast<double>(detail::read_f32(in));
    arrays[name] = std::move(m);
  }
  return arrays;
}

inline std::map<std::string, Mat> config_arrays(const ModelConfig& cfg) {
  std::map<std::string, Mat> a;
  auto scalar = [](double v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return m;
  };
  a["cfg.input_vocab"] = scalar(cfg.input_vocab);
  a["cfg.num_labels"] = scalar(cfg.num_labels);
  a["cfg.embed_dim"] = scalar(cfg.embed_dim);
  a["cfg.label_embed_dim"] = scalar(cfg.label_embed_dim);
  a["cfg.hidden"] = scalar(cfg.hidden);
  a["cfg.enc_layers"] = scalar(cfg.enc_layers);
  a["cfg.dec_layers"] = scalar(cfg.dec_layers);
  a["cfg.bottleneck"] = scalar(cfg.bottleneck);
  a["cfg.conv_stride"] = scalar(cfg.conv_stride);
  a["cfg.max_gen_len"] = scalar(cfg.max_gen_len);
  a["cfg.max_input_len"] = scalar(cfg.max_input_len);
  a["cfg.dropout"] = scalar(cfg.dropout);
  Mat ks(static_cast<int>(cfg.kernel_sizes.size()), 1);
  for (std::size_t i = 0; i < cfg.kernel_sizes.size(); ++i)
    ks(static_cast<int>(i), 0) = cfg.kernel_sizes[i];
  a["cfg.kernel_sizes"] = ks;
  return a;
}

inline ModelConfig config_from_arrays(const std::map<std::string, Mat>& a) {
  auto get = [&](const std::string& name) -> const Mat& {
    auto it = a.find(name);
    if (it == a.end())
      throw std::runtime_error("checkpoint: missing config array " + name);
    return it->second;
  };
  ModelConfig cfg;
  cfg.input_vocab = static_cast<int>(get("cfg.input_vocab")(0, 0));
  cfg.num_labels = static_cast<int>(get("cfg.num_labels")(0, 0));
  cfg.embed_dim = static_cast<int>(get("cfg.embed_dim")(0, 0));
  cfg.label_embed_dim = static_cast<int>(get("cfg.label_embed_dim")(0, 0));
  cfg.hidden = static_cast<int>(get("cfg.hidden")(0, 0));
  cfg.enc_layers = static_cast<int>(get("cfg.enc_layers")(0, 0));
  cfg.dec_layers = static_cast<int>(get("cfg.dec_layers")(0, 0));
  cfg.bottleneck = static_cast<int>(get("cfg.bottleneck")(0, 0));
  cfg.conv_stride = static_cast<int>(get("cfg.conv_stride")(0, 0));
  cfg.max_gen_len = static_cast<int>(get("cfg.max_gen_len")(0, 0));
  cfg.max_input_len = static_cast<int>(get("cfg.max_input_len")(0, 0));
  cfg.dropout = get("cfg.dropout")(0, 0);
  const Mat& ks = get("cfg.kernel_sizes");
  cfg.kernel_sizes.clear();
  for (int i = 0; i < ks.rows(); ++i)
    cfg.kernel_sizes.push_back(static_cast<int>(ks(i, 0)));
  return cfg;
}

inline void save_model(const Model& model, const std::string& path) {
  std::map<std::string, Mat> arrays = config_arrays(model.config());
  for (const auto& [name, m] : model.params()) arrays[name] = m;
  arrays["buf.label_anchor"] = model.label_anchor();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  write_checkpoint(out, arrays);
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  auto arrays = read_checkpoint(in);
  ModelConfig cfg = config_from_arrays(arrays);
  ParamMap expected = init_parameters(cfg, 0);
  ParamMap params;
  for (const auto& [name, m] : arrays) {
    if (name.rfind("cfg.", 0) == 0 || name.rfind("buf.", 0) == 0) continue;
    auto it = expected.find(name);
    if (it == expected.end())
      throw std::runtime_error("checkpoint: unknown array name: " + name);
    if (it->second.rows() != m.rows() || it->second.cols() != m.cols())
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    params[name] = m;
  }
  for (const auto& [name, m] : expected) {
    (void)m;
    if (!params.count(name))
      throw std::runtime_error("checkpoint: missing array: " + name);
  }
  Model model(cfg, std::move(params));
  auto anchor = arrays.find("buf.label_anchor");
  if (anchor == arrays.end())
    throw std::runtime_error("checkpoint: missing array: buf.label_anchor");
  model.set_label_anchor(anchor->second);
  return model;
}

}  // namespace otss
