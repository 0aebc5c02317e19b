// Self-describing binary container used for model checkpoints and saved
// classifiers: a string/integer metadata section plus named tensors with
// explicit shapes and 32-bit little-endian float payloads. Loaders reject
// unknown magic numbers and versions.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "chatemg/core.hpp"

namespace chatemg {

constexpr std::uint32_t kContainerMagic = 0x43454D47;  // "CEMG"
constexpr std::uint32_t kContainerVersion = 1;

struct TensorBlob {
  std::vector<std::int64_t> shape;
  std::vector<float> data;
};

struct Container {
  std::map<std::string, std::string> meta;
  std::map<std::string, TensorBlob> tensors;

  void set_meta_int(const std::string& key, std::int64_t v) { meta[key] = std::to_string(v); }
  std::int64_t meta_int(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw IoError("container: missing meta key '" + key + "'");
    return std::stoll(it->second);
  }
  const std::string& meta_str(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw IoError("container: missing meta key '" + key + "'");
    return it->second;
  }
  const TensorBlob& tensor(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw IoError("container: missing tensor '" + name + "'");
    return it->second;
  }
};

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

inline void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void put_i64(std::ostream& out, std::int64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void put_str(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::uint32_t get_u32(std::istream& in, const std::string& what) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) throw IoError("container: truncated " + what);
  return v;
}
inline std::int64_t get_i64(std::istream& in, const std::string& what) {
  std::int64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) throw IoError("container: truncated " + what);
  return v;
}
inline std::string get_str(std::istream& in, const std::string& what) {
  std::uint32_t len = get_u32(in, what + " length");
  if (len > (1u << 20)) throw IoError("container: implausible string length in " + what);
  std::string s(len, '\0');
  if (!in.read(s.data(), len)) throw IoError("container: truncated " + what);
  return s;
}

}  // namespace detail

inline void save_container(const Container& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  detail::put_u32(out, kContainerMagic);
  detail::put_u32(out, kContainerVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(c.meta.size()));
  for (const auto& [k, v] : c.meta) {
    detail::put_str(out, k);
    detail::put_str(out, v);
  }
  detail::put_u32(out, static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    detail::put_str(out, name);
    detail::put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    std::int64_t count = 1;
    for (auto d : t.shape) {
      detail::put_i64(out, d);
      count *= d;
    }
    if (count != static_cast<std::int64_t>(t.data.size())) {
      throw IoError("container: tensor '" + name + "' shape/data mismatch");
    }
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

inline Container load_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  if (detail::get_u32(in, "magic") != kContainerMagic) {
    throw IoError("not a checkpoint container: " + path.string());
  }
  std::uint32_t version = detail::get_u32(in, "version");
  if (version != kContainerVersion) {
    throw IoError("unsupported container version " + std::to_string(version) + " in " +
                  path.string());
  }
  Container c;
  std::uint32_t n_meta = detail::get_u32(in, "meta count");
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = detail::get_str(in, "meta key");
    c.meta[k] = detail::get_str(in, "meta value");
  }
  std::uint32_t n_tensors = detail::get_u32(in, "tensor count");
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = detail::get_str(in, "tensor name");
    TensorBlob t;
    std::uint32_t ndim = detail::get_u32(in, "tensor rank");
    if (ndim > 8) throw IoError("container: implausible tensor rank");
    std::int64_t count = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      std::int64_t dim = detail::get_i64(in, "tensor dim");
      if (dim < 0) throw IoError("container: negative tensor dim");
      t.shape.push_back(dim);
      count *= dim;
    }
    t.data.resize(static_cast<std::size_t>(count));
    if (!in.read(reinterpret_cast<char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(float)))) {
      throw IoError("container: truncated tensor payload for '" + name + "'");
    }
    c.tensors[name] = std::move(t);
  }
  return c;
}

// Matrix <-> blob helpers (row-major payload).
template <class S>
TensorBlob to_blob(const Mat<S>& m) {
  TensorBlob t;
  t.shape = {m.rows(), m.cols()};
  t.data.resize(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      t.data[static_cast<std::size_t>(i * m.cols() + j)] = static_cast<float>(m(i, j));
    }
  }
  return t;
}

template <class S>
Mat<S> from_blob(const TensorBlob& t) {
  if (t.shape.size() != 2) throw IoError("container: expected rank-2 tensor");
  Mat<S> m(t.shape[0], t.shape[1]);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = static_cast<S>(t.data[static_cast<std::size_t>(i * m.cols() + j)]);
    }
  }
  return m;
}

}  // namespace chatemg
