#pragma once

// Binary and JSON serialization.
//
// Tensor file ("SYT3"), little-endian:
//   bytes 0..3   magic "SYT3"
//   bytes 4..11  u64 dim
//   then dim^3 f64 entries, row-major (i, j, l) with l fastest
//
// Bundle file ("TLVB"), little-endian, for named arrays (matrices, vectors,
// tensors) stored together:
//   magic "TLVB", u32 version (1), u32 section count, then per section:
//   u32 name length, name bytes, u32 rank, rank x u64 extents,
//   prod(extents) f64 values in row-major order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tlvm/error.hpp"
#include "tlvm/linalg.hpp"
#include "tlvm/sym_tensor.hpp"

namespace tlvm::io {

namespace detail {

template <class T>
void put_le(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
      std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::istream& is, const char* what) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T)))
    fail(ErrorKind::kParse, std::string("truncated input while reading ") + what);
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
      std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline void expect_magic(std::istream& is, const char (&magic)[5]) {
  char got[4];
  if (!is.read(got, 4) || std::memcmp(got, magic, 4) != 0)
    fail(ErrorKind::kParse, std::string("bad magic, expected ") + magic);
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::kIo, "cannot open " + path);
  return is;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::kIo, "cannot write " + path);
  return os;
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace detail

inline void write_tensor(std::ostream& os, const SymTensor3& t) {
  os.write("SYT3", 4);
  detail::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(t.dim()));
  for (double x : t.entries()) detail::put_le<double>(os, x);
}

inline SymTensor3 read_tensor(std::istream& is) {
  detail::expect_magic(is, "SYT3");
  const auto dim = detail::get_le<std::uint64_t>(is, "dim");
  if (dim == 0 || dim > 4096) fail(ErrorKind::kParse, "implausible tensor dim");
  std::vector<double> cube(static_cast<std::size_t>(dim * dim * dim));
  for (double& x : cube) x = detail::get_le<double>(is, "tensor entries");
  return SymTensor3::from_cube(static_cast<Index>(dim), std::move(cube));
}

inline nlohmann::json tensor_to_json(const SymTensor3& t) {
  nlohmann::json j;
  j["dim"] = t.dim();
  j["entries"] = std::vector<double>(t.entries().begin(), t.entries().end());
  return j;
}

inline SymTensor3 tensor_from_json(const nlohmann::json& j) {
  try {
    const auto dim = j.at("dim").get<Index>();
    auto entries = j.at("entries").get<std::vector<double>>();
    return SymTensor3::from_cube(dim, std::move(entries));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, std::string("tensor json: ") + e.what());
  }
}

/// Writes JSON when the path ends in ".json", the SYT3 binary form otherwise.
inline void save_tensor(const std::string& path, const SymTensor3& t) {
  auto os = detail::open_out(path);
  if (detail::ends_with(path, ".json"))
    os << tensor_to_json(t).dump() << '\n';
  else
    write_tensor(os, t);
  if (!os) fail(ErrorKind::kIo, "write failed: " + path);
}

inline SymTensor3 load_tensor(const std::string& path) {
  auto is = detail::open_in(path);
  if (detail::ends_with(path, ".json")) {
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kParse, path + ": " + e.what());
    }
    return tensor_from_json(j);
  }
  return read_tensor(is);
}

/// Named dense arrays serialized together.
class Bundle {
 public:
  struct Section {
    std::vector<std::uint64_t> shape;
    std::vector<double> data;  // row-major
  };

  void put_vector(const std::string& name, const Vector& v) {
    sections_[name] = Section{{static_cast<std::uint64_t>(v.size())},
                              std::vector<double>(v.data(), v.data() + v.size())};
  }

  void put_matrix(const std::string& name, const Matrix& m) {
    Section s{{static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, {}};
    s.data.reserve(static_cast<std::size_t>(m.size()));
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) s.data.push_back(m(i, j));
    sections_[name] = std::move(s);
  }

  void put_tensor(const std::string& name, const SymTensor3& t) {
    const auto d = static_cast<std::uint64_t>(t.dim());
    sections_[name] = Section{{d, d, d}, std::vector<double>(t.entries().begin(), t.entries().end())};
  }

  bool has(const std::string& name) const { return sections_.count(name) != 0; }

  const Section& section(const std::string& name) const {
    auto it = sections_.find(name);
    if (it == sections_.end()) fail(ErrorKind::kParse, "bundle has no section '" + name + "'");
    return it->second;
  }

  Vector get_vector(const std::string& name) const {
    const auto& s = section(name);
    if (s.shape.size() != 1) fail(ErrorKind::kParse, "section '" + name + "' is not a vector");
    return Eigen::Map<const Vector>(s.data.data(), static_cast<Index>(s.data.size()));
  }

  Matrix get_matrix(const std::string& name) const {
    const auto& s = section(name);
    if (s.shape.size() != 2) fail(ErrorKind::kParse, "section '" + name + "' is not a matrix");
    Matrix m(static_cast<Index>(s.shape[0]), static_cast<Index>(s.shape[1]));
    std::size_t p = 0;
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) m(i, j) = s.data[p++];
    return m;
  }

  SymTensor3 get_tensor(const std::string& name) const {
    const auto& s = section(name);
    if (s.shape.size() != 3 || s.shape[0] != s.shape[1] || s.shape[1] != s.shape[2])
      fail(ErrorKind::kParse, "section '" + name + "' is not a cubic tensor");
    return SymTensor3::from_cube(static_cast<Index>(s.shape[0]), s.data);
  }

  void write(std::ostream& os) const {
    os.write("TLVB", 4);
    detail::put_le<std::uint32_t>(os, 1);
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(sections_.size()));
    for (const auto& [name, s] : sections_) {
      detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.shape.size()));
      for (auto e : s.shape) detail::put_le<std::uint64_t>(os, e);
      for (double x : s.data) detail::put_le<double>(os, x);
    }
  }

  static Bundle read(std::istream& is) {
    detail::expect_magic(is, "TLVB");
    const auto version = detail::get_le<std::uint32_t>(is, "version");
    if (version != 1) fail(ErrorKind::kParse, "unsupported bundle version");
    const auto count = detail::get_le<std::uint32_t>(is, "section count");
    Bundle b;
    for (std::uint32_t s = 0; s < count; ++s) {
      const auto len = detail::get_le<std::uint32_t>(is, "name length");
      if (len > 4096) fail(ErrorKind::kParse, "implausible section name length");
      std::string name(len, '\0');
      if (!is.read(name.data(), len)) fail(ErrorKind::kParse, "truncated section name");
      const auto rank = detail::get_le<std::uint32_t>(is, "rank");
      if (rank == 0 || rank > 4) fail(ErrorKind::kParse, "unsupported section rank");
      Section sec;
      std::uint64_t total = 1;
      for (std::uint32_t r = 0; r < rank; ++r) {
        sec.shape.push_back(detail::get_le<std::uint64_t>(is, "extent"));
        total *= sec.shape.back();
      }
      if (total > (1ULL << 32)) fail(ErrorKind::kParse, "implausible section size");
      sec.data.resize(static_cast<std::size_t>(total));
      for (double& x : sec.data) x = detail::get_le<double>(is, "section data");
      b.sections_[name] = std::move(sec);
    }
    return b;
  }

  void save(const std::string& path) const {
    auto os = detail::open_out(path);
    write(os);
    if (!os) fail(ErrorKind::kIo, "write failed: " + path);
  }

  static Bundle load(const std::string& path) {
    auto is = detail::open_in(path);
    return read(is);
  }

 private:
  std::map<std::string, Section> sections_;
};

}  // namespace tlvm::io
