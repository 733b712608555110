#pragma once

// Field serialization. Flat binary: magic, mode, dims, then raw 64-bit
// little-endian doubles. CSV: node coordinates + value per row. Readers
// validate against the mesh they are given; the mask itself is not
// serialized, so grid files only round-trip onto a matching mesh.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mf4d/domain.hpp"
#include "mf4d/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "field files are little-endian; big-endian hosts unsupported");

namespace mf4d {

inline constexpr char field_magic[4] = {'M', 'F', '4', 'B'};

inline void write_field(const Field& u, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::invalid_argument("write_field: cannot open " + path);
  os.write(field_magic, 4);
  const uint32_t version = 1;
  os.write(reinterpret_cast<const char*>(&version), 4);
  const uint8_t mode = u.mesh->mode == MeshMode::radial ? 0 : 1;
  os.write(reinterpret_cast<const char*>(&mode), 1);
  if (u.mesh->mode == MeshMode::radial) {
    const uint64_t n = static_cast<uint64_t>(u.mesh->n);
    os.write(reinterpret_cast<const char*>(&n), 8);
    os.write(reinterpret_cast<const char*>(&u.mesh->a), 8);
    os.write(reinterpret_cast<const char*>(&u.mesh->b), 8);
  } else {
    for (int i = 0; i < 4; ++i) {
      const uint64_t d = static_cast<uint64_t>(u.mesh->dims[i]);
      os.write(reinterpret_cast<const char*>(&d), 8);
    }
    for (int i = 0; i < 4; ++i)
      os.write(reinterpret_cast<const char*>(&u.mesh->hx[i]), 8);
  }
  const uint64_t count = u.v.size();
  os.write(reinterpret_cast<const char*>(&count), 8);
  os.write(reinterpret_cast<const char*>(u.v.data()),
           static_cast<std::streamsize>(count * 8));
  if (!os) throw SolverError("write_field: short write to " + path);
}

inline Field read_field(const MeshPtr& mesh, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::invalid_argument("read_field: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, field_magic, 4) != 0)
    throw std::invalid_argument("read_field: bad magic in " + path);
  uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), 4);
  if (version != 1) throw std::invalid_argument("read_field: unsupported version");
  uint8_t mode = 0;
  is.read(reinterpret_cast<char*>(&mode), 1);
  const uint8_t want = mesh->mode == MeshMode::radial ? 0 : 1;
  if (mode != want) throw std::invalid_argument("read_field: mesh mode mismatch");
  if (mesh->mode == MeshMode::radial) {
    uint64_t n = 0;
    double a = 0, b = 0;
    is.read(reinterpret_cast<char*>(&n), 8);
    is.read(reinterpret_cast<char*>(&a), 8);
    is.read(reinterpret_cast<char*>(&b), 8);
    if (n != static_cast<uint64_t>(mesh->n) || a != mesh->a || b != mesh->b)
      throw std::invalid_argument("read_field: radial geometry mismatch");
  } else {
    for (int i = 0; i < 4; ++i) {
      uint64_t d = 0;
      is.read(reinterpret_cast<char*>(&d), 8);
      if (d != static_cast<uint64_t>(mesh->dims[i]))
        throw std::invalid_argument("read_field: grid dims mismatch");
    }
    for (int i = 0; i < 4; ++i) {
      double h = 0;
      is.read(reinterpret_cast<char*>(&h), 8);
      if (h != mesh->hx[i])
        throw std::invalid_argument("read_field: grid spacing mismatch");
    }
  }
  uint64_t count = 0;
  is.read(reinterpret_cast<char*>(&count), 8);
  if (count != mesh->size())
    throw std::invalid_argument("read_field: value count mismatch");
  Field u = make_field(mesh);
  is.read(reinterpret_cast<char*>(u.v.data()),
          static_cast<std::streamsize>(count * 8));
  if (!is) throw std::invalid_argument("read_field: truncated file " + path);
  return u;
}

inline void write_field_csv(const Field& u, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::invalid_argument("write_field_csv: cannot open " + path);
  os.precision(17);
  if (u.mesh->mode == MeshMode::radial) {
    os << "r,value\n";
    for (size_t i = 0; i < u.v.size(); ++i)
      os << u.mesh->r[i] << ',' << u.v[i] << '\n';
  } else {
    os << "x0,x1,x2,x3,value\n";
    for (size_t i = 0; i < u.v.size(); ++i) {
      const Vec4 p = node_point(*u.mesh, i);
      os << p[0] << ',' << p[1] << ',' << p[2] << ',' << p[3] << ',' << u.v[i]
         << '\n';
    }
  }
  if (!os) throw SolverError("write_field_csv: short write to " + path);
}

}  // namespace mf4d
