#pragma once

// NLSFLD1 field snapshots:
//
//   "NLSFLD1\n"                      8 bytes, ASCII
//   header length                    uint32, little endian
//   header                           UTF-8 JSON {dimension, kind,
//                                    side_lengths, grid_points, time_stamp}
//   values                           row-major (re, im) pairs, float64 LE

#include "nlslab/error.hpp"
#include "nlslab/spectral_domain.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace nlslab {

inline constexpr char snapshot_magic[] = "NLSFLD1\n";

namespace detail {

inline void put_u32_le(std::string &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32_le(const unsigned char *p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_f64_le(std::string &out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

inline double get_f64_le(const unsigned char *p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

} // namespace detail

/// Writes to a sibling temporary and renames it into place.
inline void write_file_atomic(const std::filesystem::path &path,
                              const std::string &bytes) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(os), ErrorKind::io,
            "cannot open " + tmp.string() + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(os), ErrorKind::io,
            "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::io,
          "cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline nlohmann::json domain_to_json(const DomainSpec &dom) {
  nlohmann::json j;
  j["dimension"] = dom.dimension;
  j["kind"] = to_string(dom.kind);
  j["side_lengths"] = std::vector<double>(dom.side_lengths.begin(),
                                          dom.side_lengths.begin() +
                                              dom.dimension);
  j["grid_points"] = std::vector<int>(dom.grid_points.begin(),
                                      dom.grid_points.begin() + dom.dimension);
  return j;
}

inline DomainSpec domain_from_json(const nlohmann::json &j) {
  try {
    const int d = j.at("dimension").get<int>();
    const auto lengths = j.at("side_lengths").get<std::vector<double>>();
    const auto points = j.at("grid_points").get<std::vector<int>>();
    require(static_cast<int>(lengths.size()) == d &&
                static_cast<int>(points.size()) == d,
            ErrorKind::shape_mismatch,
            "side_lengths/grid_points do not match dimension");
    return DomainSpec::make(
        boundary_kind_from_string(j.at("kind").get<std::string>()), lengths,
        points);
  } catch (const nlohmann::json::exception &e) {
    fail(ErrorKind::config, std::string("bad domain description: ") + e.what());
  }
}

inline std::string encode_snapshot(const Field &f) {
  auto header = domain_to_json(f.domain);
  header["time_stamp"] = f.time_stamp;
  const std::string h = header.dump();
  std::string out(snapshot_magic, 8);
  detail::put_u32_le(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  out.reserve(out.size() + 16 * f.values.size());
  for (const auto &z : f.values) {
    detail::put_f64_le(out, z.real());
    detail::put_f64_le(out, z.imag());
  }
  return out;
}

inline Field decode_snapshot(const std::string &bytes) {
  const auto *p = reinterpret_cast<const unsigned char *>(bytes.data());
  require(bytes.size() >= 12 && std::memcmp(bytes.data(), snapshot_magic, 8) == 0,
          ErrorKind::io, "not an NLSFLD1 snapshot");
  const std::uint32_t hlen = detail::get_u32_le(p + 8);
  require(bytes.size() >= 12 + static_cast<std::size_t>(hlen), ErrorKind::io,
          "truncated snapshot header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(12, hlen));
  } catch (const nlohmann::json::exception &e) {
    fail(ErrorKind::io, std::string("snapshot header is not JSON: ") + e.what());
  }
  const DomainSpec dom = domain_from_json(header);
  const double t = header.at("time_stamp").get<double>();
  const std::size_t offset = 12 + hlen;
  require(bytes.size() == offset + 16 * dom.size(), ErrorKind::io,
          "snapshot payload size does not match its grid");
  std::vector<Complex> v(dom.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const unsigned char *q = p + offset + 16 * i;
    v[i] = Complex(detail::get_f64_le(q), detail::get_f64_le(q + 8));
  }
  return Field(dom, t, std::move(v));
}

inline void write_snapshot(const std::filesystem::path &path, const Field &f) {
  write_file_atomic(path, encode_snapshot(f));
}

inline Field read_snapshot(const std::filesystem::path &path) {
  return decode_snapshot(read_file(path));
}

} // namespace nlslab
