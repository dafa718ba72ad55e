#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "monodense/geometry.hpp"
#include "monodense/parallel.hpp"
#include "monodense/png_io.hpp"

namespace monodense {

struct ScenePlane {
  Vector3d center = Vector3d::Zero();
  Vector3d normal = Vector3d::UnitZ();
  double half_extent = 1.0;
  std::uint32_t texture_id = 0;
  double texture_scale = 0.05;  // meters per texture feature
};

struct SceneSphere {
  Vector3d center = Vector3d::Zero();
  double radius = 1.0;
  std::uint32_t texture_id = 0;
  double texture_scale = 0.05;
};

struct SyntheticScene {
  Intrinsics intrinsics;
  std::vector<ScenePlane> planes;
  std::vector<SceneSphere> spheres;
  std::vector<Pose> trajectory;
  std::uint32_t seed = 0;
};

namespace detail {

inline std::uint32_t hash_u32(std::uint32_t x) {
  x ^= x >> 16;
  x *= 0x7feb352du;
  x ^= x >> 15;
  x *= 0x846ca68bu;
  x ^= x >> 16;
  return x;
}

inline double lattice_value(std::int32_t ix, std::int32_t iy, std::uint32_t seed) {
  std::uint32_t h = hash_u32(static_cast<std::uint32_t>(ix) * 0x9e3779b9u ^
                             static_cast<std::uint32_t>(iy) * 0x85ebca6bu ^ seed);
  return h * (1.0 / 4294967296.0);
}

// Smooth band-limited value noise in [0, 1]: bilinear lattice interpolation
// with a quintic fade.
inline double value_noise(double x, double y, std::uint32_t seed) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const auto ix = static_cast<std::int32_t>(fx);
  const auto iy = static_cast<std::int32_t>(fy);
  const double tx = x - fx;
  const double ty = y - fy;
  const double sx = tx * tx * tx * (tx * (tx * 6.0 - 15.0) + 10.0);
  const double sy = ty * ty * ty * (ty * (ty * 6.0 - 15.0) + 10.0);
  const double v00 = lattice_value(ix, iy, seed);
  const double v10 = lattice_value(ix + 1, iy, seed);
  const double v01 = lattice_value(ix, iy + 1, seed);
  const double v11 = lattice_value(ix + 1, iy + 1, seed);
  const double top = v00 + sx * (v10 - v00);
  const double bot = v01 + sx * (v11 - v01);
  return top + sy * (bot - top);
}

}  // namespace detail

/// Procedural surface intensity at local coordinates (s, t) in meters. Three
/// band-limited noise octaves at incommensurate frequencies plus a diagonal
/// sinusoid; the octaves rarely flatten simultaneously, so small matching
/// patches stay discriminative everywhere on the surface.
inline double texture_intensity(double s, double t, std::uint32_t texture_id, double scale,
                                std::uint32_t scene_seed = 0) {
  const std::uint32_t seed = detail::hash_u32(texture_id * 0x27d4eb2fu + scene_seed);
  const double n1 = detail::value_noise(s / scale, t / scale, seed);
  const double n2 = detail::value_noise(2.3 * s / scale + 17.0, 2.3 * t / scale + 11.0, seed ^ 0x5bd1e995u);
  const double n3 =
      detail::value_noise(4.1 * s / scale + 5.0, 4.1 * t / scale + 29.0, seed ^ 0x27220a95u);
  const double wave = std::sin(2.0 * M_PI * (s + 0.61 * t) / (3.1 * scale));
  const double v = 127.5 + 48.0 * (2.0 * n1 - 1.0) + 34.0 * (2.0 * n2 - 1.0) + 24.0 * (2.0 * n3 - 1.0) +
                   14.0 * wave;
  return std::clamp(v, 0.0, 255.0);
}

struct SyntheticRender {
  CameraFrame frame;
  ImageF gt_depth;  // meters along the optical axis, 0 = background
};

namespace detail {

struct Hit {
  double depth = std::numeric_limits<double>::infinity();  // camera-z parameter
  double intensity = 0.0;
};

inline void plane_basis(const Vector3d& normal, Vector3d& u, Vector3d& v) {
  const Vector3d up = std::abs(normal.y()) < 0.9 ? Vector3d::UnitY() : Vector3d::UnitX();
  u = normal.cross(up).normalized();
  v = normal.cross(u);
}

}  // namespace detail

/// Ray-casts one trajectory frame against all primitives; the nearest hit
/// wins. Rays are parameterized by camera depth, so the depth image holds
/// exact optical-axis distances.
inline SyntheticRender render_synthetic(const SyntheticScene& scene, std::size_t frame_idx, int num_threads = 1) {
  if (frame_idx >= scene.trajectory.size())
    throw std::out_of_range("render_synthetic: frame index beyond trajectory");
  const Intrinsics& intr = scene.intrinsics;
  const Pose& pose = scene.trajectory[frame_idx];

  SyntheticRender out;
  out.frame.intrinsics = intr;
  out.frame.pose = pose;
  out.frame.timestamp = 0.1 * static_cast<double>(frame_idx);
  out.frame.image = ImageU8(intr.width, intr.height, 8);  // dark textureless background
  out.gt_depth = ImageF(intr.width, intr.height, 0.0f);

  struct PlaneBasis {
    Vector3d u, v;
  };
  std::vector<PlaneBasis> bases(scene.planes.size());
  for (std::size_t i = 0; i < scene.planes.size(); ++i)
    detail::plane_basis(scene.planes[i].normal.normalized(), bases[i].u, bases[i].v);

  const Vector3d origin = pose.translation;
  parallel_for(0, intr.height, num_threads, [&](int y) {
    for (int x = 0; x < intr.width; ++x) {
      const Vector3d dir = pose.rotation * intr.unproject({double(x), double(y)});
      detail::Hit best;
      for (std::size_t i = 0; i < scene.planes.size(); ++i) {
        const ScenePlane& pl = scene.planes[i];
        const Vector3d n = pl.normal.normalized();
        const double denom = n.dot(dir);
        if (std::abs(denom) < 1e-12) continue;
        const double u_depth = n.dot(pl.center - origin) / denom;
        if (!(u_depth > 1e-6) || u_depth >= best.depth) continue;
        const Vector3d p = origin + u_depth * dir;
        const Vector3d local = p - pl.center;
        const double s = bases[i].u.dot(local);
        const double t = bases[i].v.dot(local);
        if (std::abs(s) > pl.half_extent || std::abs(t) > pl.half_extent) continue;
        best.depth = u_depth;
        best.intensity = texture_intensity(s, t, pl.texture_id, pl.texture_scale, scene.seed);
      }
      for (const SceneSphere& sp : scene.spheres) {
        const Vector3d oc = origin - sp.center;
        const double a = dir.squaredNorm();
        const double b = 2.0 * dir.dot(oc);
        const double c = oc.squaredNorm() - sp.radius * sp.radius;
        const double disc = b * b - 4.0 * a * c;
        if (disc < 0.0) continue;
        const double sq = std::sqrt(disc);
        double u_depth = (-b - sq) / (2.0 * a);
        if (!(u_depth > 1e-6)) u_depth = (-b + sq) / (2.0 * a);
        if (!(u_depth > 1e-6) || u_depth >= best.depth) continue;
        const Vector3d local = (origin + u_depth * dir - sp.center) / sp.radius;
        const double s = std::atan2(local.y(), local.x()) * sp.radius;
        const double t = std::acos(std::clamp(local.z(), -1.0, 1.0)) * sp.radius;
        best.depth = u_depth;
        best.intensity = texture_intensity(s, t, sp.texture_id, sp.texture_scale, scene.seed);
      }
      if (std::isfinite(best.depth)) {
        out.gt_depth.at(x, y) = static_cast<float>(best.depth);
        out.frame.image.at(x, y) = static_cast<std::uint8_t>(std::lround(best.intensity));
      }
    }
  });
  return out;
}

/// Declarative scene file, one directive per line:
///   intrinsics fx fy cx cy width height
///   seed <n>
///   plane cx cy cz nx ny nz half_extent texture_id texture_scale
///   sphere cx cy cz radius texture_id texture_scale
///   pose tx ty tz qx qy qz qw
inline SyntheticScene parse_scene_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing scene file: " + path.string());
  SyntheticScene scene;
  bool have_intrinsics = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    const auto fail = [&](const std::string& what) {
      throw std::runtime_error(path.filename().string() + ":" + std::to_string(line_no) + ": " + what);
    };
    if (tok == "intrinsics") {
      if (!(ss >> scene.intrinsics.fx >> scene.intrinsics.fy >> scene.intrinsics.cx >> scene.intrinsics.cy >>
            scene.intrinsics.width >> scene.intrinsics.height))
        fail("malformed intrinsics");
      scene.intrinsics.validate();
      have_intrinsics = true;
    } else if (tok == "seed") {
      if (!(ss >> scene.seed)) fail("malformed seed");
    } else if (tok == "plane") {
      ScenePlane p;
      if (!(ss >> p.center.x() >> p.center.y() >> p.center.z() >> p.normal.x() >> p.normal.y() >> p.normal.z() >>
            p.half_extent >> p.texture_id >> p.texture_scale))
        fail("malformed plane");
      if (!(p.normal.norm() > 0.0) || !(p.half_extent > 0.0)) fail("degenerate plane");
      scene.planes.push_back(p);
    } else if (tok == "sphere") {
      SceneSphere s;
      if (!(ss >> s.center.x() >> s.center.y() >> s.center.z() >> s.radius >> s.texture_id >> s.texture_scale))
        fail("malformed sphere");
      if (!(s.radius > 0.0)) fail("degenerate sphere");
      scene.spheres.push_back(s);
    } else if (tok == "pose") {
      double tx, ty, tz, qx, qy, qz, qw;
      if (!(ss >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) fail("malformed pose");
      scene.trajectory.push_back(Pose::from_quaternion({tx, ty, tz}, qx, qy, qz, qw));
    } else {
      fail("unknown directive '" + tok + "'");
    }
  }
  if (!have_intrinsics) throw std::runtime_error(path.string() + ": missing intrinsics line");
  if (scene.trajectory.empty()) throw std::runtime_error(path.string() + ": no poses");
  if (scene.planes.empty() && scene.spheres.empty()) throw std::runtime_error(path.string() + ": no primitives");
  return scene;
}

/// Every pose must see at least one primitive (checked on a sparse pixel grid).
inline void validate_scene(const SyntheticScene& scene) {
  for (std::size_t i = 0; i < scene.trajectory.size(); ++i) {
    const Pose& pose = scene.trajectory[i];
    bool any_hit = false;
    for (int gy = 0; gy < 5 && !any_hit; ++gy) {
      for (int gx = 0; gx < 5 && !any_hit; ++gx) {
        const Vector2d px((gx + 0.5) * scene.intrinsics.width / 5.0, (gy + 0.5) * scene.intrinsics.height / 5.0);
        const Vector3d dir = pose.rotation * scene.intrinsics.unproject(px);
        for (const ScenePlane& pl : scene.planes) {
          const Vector3d n = pl.normal.normalized();
          const double denom = n.dot(dir);
          if (std::abs(denom) < 1e-12) continue;
          const double u = n.dot(pl.center - pose.translation) / denom;
          if (u > 1e-6) {
            const Vector3d local = pose.translation + u * dir - pl.center;
            Vector3d bu, bv;
            detail::plane_basis(n, bu, bv);
            if (std::abs(bu.dot(local)) <= pl.half_extent && std::abs(bv.dot(local)) <= pl.half_extent)
              any_hit = true;
          }
        }
        for (const SceneSphere& sp : scene.spheres) {
          const Vector3d oc = pose.translation - sp.center;
          const double b = 2.0 * dir.dot(oc);
          const double c = oc.squaredNorm() - sp.radius * sp.radius;
          if (b * b - 4.0 * dir.squaredNorm() * c >= 0.0 && (c < 0.0 || b < 0.0)) any_hit = true;
        }
      }
    }
    if (!any_hit)
      throw std::runtime_error("scene: trajectory pose " + std::to_string(i) + " views no primitive");
  }
}

/// Renders the first `n_frames` trajectory poses into a TUM-layout dataset:
/// rgb/, depth/ (ground truth), rgb.txt, depth.txt, groundtruth.txt and a
/// camera.txt intrinsics file.
inline void write_synthetic_dataset(const SyntheticScene& scene, std::size_t n_frames,
                                    const std::filesystem::path& out_dir, int num_threads = 1,
                                    double depth_scale = kDefaultDepthScale) {
  if (n_frames > scene.trajectory.size())
    throw std::invalid_argument("write_synthetic_dataset: more frames requested than trajectory poses");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "rgb");
  fs::create_directories(out_dir / "depth");

  std::ofstream rgb_list(out_dir / "rgb.txt");
  std::ofstream depth_list(out_dir / "depth.txt");
  std::ofstream gt_list(out_dir / "groundtruth.txt");
  rgb_list << "# timestamp filename\n";
  depth_list << "# timestamp filename\n";
  gt_list << "# timestamp tx ty tz qx qy qz qw\n";

  char name[64], line[512];
  for (std::size_t i = 0; i < n_frames; ++i) {
    const SyntheticRender r = render_synthetic(scene, i, num_threads);
    std::snprintf(name, sizeof(name), "%06zu.png", i);
    write_png_gray8(r.frame.image, (out_dir / "rgb" / name).string());
    write_png_gray16(encode_depth(r.gt_depth, depth_scale), (out_dir / "depth" / name).string());
    const double t = r.frame.timestamp;
    std::snprintf(line, sizeof(line), "%.6f rgb/%s\n", t, name);
    rgb_list << line;
    std::snprintf(line, sizeof(line), "%.6f depth/%s\n", t, name);
    depth_list << line;
    const Eigen::Quaterniond q(scene.trajectory[i].rotation);
    const Vector3d& tr = scene.trajectory[i].translation;
    std::snprintf(line, sizeof(line), "%.6f %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n", t, tr.x(), tr.y(), tr.z(),
                  q.x(), q.y(), q.z(), q.w());
    gt_list << line;
  }

  std::ofstream cam(out_dir / "camera.txt");
  cam << "fx=" << scene.intrinsics.fx << "\nfy=" << scene.intrinsics.fy << "\ncx=" << scene.intrinsics.cx
      << "\ncy=" << scene.intrinsics.cy << "\nwidth=" << scene.intrinsics.width
      << "\nheight=" << scene.intrinsics.height << "\n";
}

}  // namespace monodense
