#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace monodense {

struct Mesh {
  std::vector<Eigen::Vector3f> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::vector<std::array<std::uint8_t, 3>> colors;  // optional, per vertex

  bool has_colors() const { return !colors.empty(); }

  void validate() const {
    if (has_colors() && colors.size() != vertices.size())
      throw std::invalid_argument("mesh: color count does not match vertex count");
    for (const auto& t : triangles)
      for (std::uint32_t idx : t)
        if (idx >= vertices.size()) throw std::invalid_argument("mesh: triangle index out of range");
    for (const auto& v : vertices)
      if (!v.allFinite()) throw std::invalid_argument("mesh: non-finite vertex");
  }
};

/// Maps vertex height (y up is not assumed; this ramps world z) onto a simple
/// blue-to-red ramp. Used for visual inspection only.
inline void colorize_by_height(Mesh& mesh) {
  if (mesh.vertices.empty()) return;
  float lo = mesh.vertices.front().z();
  float hi = lo;
  for (const auto& v : mesh.vertices) {
    lo = std::min(lo, v.z());
    hi = std::max(hi, v.z());
  }
  const float range = hi > lo ? hi - lo : 1.0f;
  mesh.colors.resize(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const float t = (mesh.vertices[i].z() - lo) / range;
    mesh.colors[i] = {static_cast<std::uint8_t>(255.0f * t), static_cast<std::uint8_t>(64),
                      static_cast<std::uint8_t>(255.0f * (1.0f - t))};
  }
}

/// ASCII PLY writer. Formatting is fixed ("%.9g", round-trip exact for
/// float32), so identical meshes produce identical bytes.
inline void export_ply(const Mesh& mesh, const std::string& path) {
  mesh.validate();
  std::string buf;
  buf += "ply\nformat ascii 1.0\n";
  buf += "element vertex " + std::to_string(mesh.vertices.size()) + "\n";
  buf += "property float x\nproperty float y\nproperty float z\n";
  if (mesh.has_colors()) buf += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  buf += "element face " + std::to_string(mesh.triangles.size()) + "\n";
  buf += "property list uchar int vertex_indices\nend_header\n";

  char line[160];
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const auto& v = mesh.vertices[i];
    if (mesh.has_colors()) {
      const auto& c = mesh.colors[i];
      std::snprintf(line, sizeof(line), "%.9g %.9g %.9g %d %d %d\n", v.x(), v.y(), v.z(), c[0], c[1], c[2]);
    } else {
      std::snprintf(line, sizeof(line), "%.9g %.9g %.9g\n", v.x(), v.y(), v.z());
    }
    buf += line;
  }
  for (const auto& t : mesh.triangles) {
    std::snprintf(line, sizeof(line), "3 %u %u %u\n", t[0], t[1], t[2]);
    buf += line;
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("export_ply: cannot open " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("export_ply: write failed for " + path);
}

/// Minimal ASCII PLY reader for the files export_ply produces.
inline Mesh load_ply(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_ply: cannot open " + path);
  std::string line;
  std::size_t vertex_count = 0;
  std::size_t face_count = 0;
  bool has_color = false;
  if (!std::getline(in, line) || line != "ply") throw std::runtime_error("load_ply: not a PLY file: " + path);
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok == "element") {
      std::string what;
      std::size_t count;
      ss >> what >> count;
      if (what == "vertex") vertex_count = count;
      if (what == "face") face_count = count;
    } else if (tok == "property") {
      std::string type, name;
      ss >> type >> name;
      if (name == "red") has_color = true;
    } else if (tok == "end_header") {
      break;
    }
  }
  Mesh mesh;
  mesh.vertices.reserve(vertex_count);
  if (has_color) mesh.colors.reserve(vertex_count);
  for (std::size_t i = 0; i < vertex_count; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("load_ply: truncated vertex list in " + path);
    std::istringstream ss(line);
    Eigen::Vector3f v;
    ss >> v.x() >> v.y() >> v.z();
    mesh.vertices.push_back(v);
    if (has_color) {
      int r, g, b;
      ss >> r >> g >> b;
      mesh.colors.push_back({static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                             static_cast<std::uint8_t>(b)});
    }
  }
  for (std::size_t i = 0; i < face_count; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("load_ply: truncated face list in " + path);
    std::istringstream ss(line);
    int n;
    std::array<std::uint32_t, 3> t;
    ss >> n >> t[0] >> t[1] >> t[2];
    if (n != 3) throw std::runtime_error("load_ply: only triangle faces are supported");
    mesh.triangles.push_back(t);
  }
  return mesh;
}

}  // namespace monodense
