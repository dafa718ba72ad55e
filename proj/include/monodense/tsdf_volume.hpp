#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "monodense/depth_filter.hpp"
#include "monodense/geometry.hpp"

namespace monodense {

inline constexpr double kCarveGate = 0.8;

struct VoxelKey {
  std::int32_t ix = 0;
  std::int32_t iy = 0;
  std::int32_t iz = 0;

  bool operator==(const VoxelKey&) const = default;
};

struct Voxel {
  float phi = 0.0f;     // truncated signed distance, camera side positive
  float weight = 0.0f;  // accumulated confidence; 0 means undefined
};

namespace detail {

// 21 bits per signed coordinate; injective for |coord| < 2^20.
inline constexpr std::int32_t kKeyBias = 1 << 20;
inline constexpr std::uint64_t kKeyMask = (1ull << 21) - 1;

inline std::uint64_t pack_key(const VoxelKey& k) {
  const std::uint64_t x = static_cast<std::uint64_t>(k.ix + kKeyBias) & kKeyMask;
  const std::uint64_t y = static_cast<std::uint64_t>(k.iy + kKeyBias) & kKeyMask;
  const std::uint64_t z = static_cast<std::uint64_t>(k.iz + kKeyBias) & kKeyMask;
  return x | (y << 21) | (z << 42);
}

inline VoxelKey unpack_key(std::uint64_t packed) {
  return VoxelKey{static_cast<std::int32_t>(packed & kKeyMask) - kKeyBias,
                  static_cast<std::int32_t>((packed >> 21) & kKeyMask) - kKeyBias,
                  static_cast<std::int32_t>((packed >> 42) & kKeyMask) - kKeyBias};
}

inline std::uint64_t mix_key(std::uint64_t k) {
  k ^= k >> 33;
  k *= 0xff51afd7ed558ccdull;
  k ^= k >> 33;
  k *= 0xc4ceb9fe1a85ec53ull;
  k ^= k >> 33;
  return k;
}

}  // namespace detail

/// Open-addressing hash map from packed voxel keys to voxels. Linear probing,
/// tombstone deletion, rehash at 50% occupancy.
class VoxelHashMap {
 public:
  VoxelHashMap() { rehash(1024); }

  std::size_t size() const { return size_; }

  Voxel* find(const VoxelKey& key) {
    const std::size_t slot = find_slot(detail::pack_key(key));
    return slot == kNone ? nullptr : &values_[slot];
  }
  const Voxel* find(const VoxelKey& key) const {
    const std::size_t slot = find_slot(detail::pack_key(key));
    return slot == kNone ? nullptr : &values_[slot];
  }

  Voxel& insert_or_get(const VoxelKey& key, const Voxel& initial) {
    if ((size_ + tombstones_ + 1) * 2 > keys_.size()) rehash(keys_.size() * 2);
    const std::uint64_t packed = detail::pack_key(key);
    const std::size_t mask = keys_.size() - 1;
    std::size_t slot = detail::mix_key(packed) & mask;
    std::size_t first_tombstone = kNone;
    while (true) {
      if (states_[slot] == State::kFull && keys_[slot] == packed) return values_[slot];
      if (states_[slot] == State::kEmpty) {
        const std::size_t target = first_tombstone != kNone ? first_tombstone : slot;
        if (states_[target] == State::kTombstone) --tombstones_;
        states_[target] = State::kFull;
        keys_[target] = packed;
        values_[target] = initial;
        ++size_;
        return values_[target];
      }
      if (states_[slot] == State::kTombstone && first_tombstone == kNone) first_tombstone = slot;
      slot = (slot + 1) & mask;
    }
  }

  bool erase(const VoxelKey& key) {
    const std::size_t slot = find_slot(detail::pack_key(key));
    if (slot == kNone) return false;
    states_[slot] = State::kTombstone;
    --size_;
    ++tombstones_;
    if (tombstones_ * 4 > keys_.size()) rehash(keys_.size());
    return true;
  }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (std::size_t i = 0; i < keys_.size(); ++i)
      if (states_[i] == State::kFull) fn(detail::unpack_key(keys_[i]), values_[i]);
  }

 private:
  enum class State : std::uint8_t { kEmpty = 0, kFull = 1, kTombstone = 2 };
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  std::size_t find_slot(std::uint64_t packed) const {
    const std::size_t mask = keys_.size() - 1;
    std::size_t slot = detail::mix_key(packed) & mask;
    while (states_[slot] != State::kEmpty) {
      if (states_[slot] == State::kFull && keys_[slot] == packed) return slot;
      slot = (slot + 1) & mask;
    }
    return kNone;
  }

  void rehash(std::size_t capacity) {
    std::vector<std::uint64_t> old_keys = std::move(keys_);
    std::vector<Voxel> old_values = std::move(values_);
    std::vector<State> old_states = std::move(states_);
    keys_.assign(capacity, 0);
    values_.assign(capacity, Voxel{});
    states_.assign(capacity, State::kEmpty);
    size_ = 0;
    tombstones_ = 0;
    const std::size_t mask = capacity - 1;
    for (std::size_t i = 0; i < old_keys.size(); ++i) {
      if (old_states[i] != State::kFull) continue;
      std::size_t slot = detail::mix_key(old_keys[i]) & mask;
      while (states_[slot] == State::kFull) slot = (slot + 1) & mask;
      states_[slot] = State::kFull;
      keys_[slot] = old_keys[i];
      values_[slot] = old_values[i];
      ++size_;
    }
  }

  std::vector<std::uint64_t> keys_;
  std::vector<Voxel> values_;
  std::vector<State> states_;
  std::size_t size_ = 0;
  std::size_t tombstones_ = 0;
};

enum class RayRegion : std::uint8_t { kHit, kCarve, kUndefined };

/// Region of a sample at depth `u_dist` along a ray whose surface measurement
/// is `d`. The band boundary u = d - r satisfies both clauses; hit wins.
inline RayRegion classify_ray_sample(double u_dist, double d, double truncation) {
  if (std::abs(u_dist - d) <= truncation) return RayRegion::kHit;
  if (u_dist <= d - truncation) return RayRegion::kCarve;
  return RayRegion::kUndefined;
}

/// Running weighted mean of signed distance samples.
inline Voxel update_hit_voxel(const Voxel& v, double signed_distance, double alpha) {
  if (v.weight == 0.0f) return Voxel{static_cast<float>(signed_distance), static_cast<float>(alpha)};
  const double w = v.weight;
  const double phi = (v.phi * w + signed_distance * alpha) / (w + alpha);
  return Voxel{static_cast<float>(phi), static_cast<float>(w + alpha)};
}

enum class TsdfWeightMode : std::uint8_t {
  kInverseVariance,  // alpha = 1 / sigma^2: confident estimates weigh more
  kRawVariance,      // alpha = sigma^2: literal compatibility mode
};

struct IntegrateOptions {
  double carve_gate = kCarveGate;      // inlier expectation above which rays carve free space
  TsdfWeightMode weight_mode = TsdfWeightMode::kInverseVariance;
};

/// Sparse truncated signed distance field over hashed cubic voxels. Only
/// voxels with positive weight are stored; carving erases storage outright.
class TsdfVolume {
 public:
  explicit TsdfVolume(double voxel_size = 0.1, double truncation = -1.0)
      : voxel_size_(voxel_size), truncation_(truncation > 0.0 ? truncation : 3.0 * voxel_size) {
    if (!(voxel_size_ > 0.0)) throw std::invalid_argument("tsdf: voxel size must be positive");
    if (!(truncation_ > 0.0)) throw std::invalid_argument("tsdf: truncation must be positive");
  }

  double voxel_size() const { return voxel_size_; }
  double truncation() const { return truncation_; }
  std::size_t voxel_count() const { return map_.size(); }

  VoxelKey key_for(const Vector3d& p_world) const {
    return VoxelKey{static_cast<std::int32_t>(std::floor(p_world.x() / voxel_size_)),
                    static_cast<std::int32_t>(std::floor(p_world.y() / voxel_size_)),
                    static_cast<std::int32_t>(std::floor(p_world.z() / voxel_size_))};
  }

  Vector3d voxel_center(const VoxelKey& k) const {
    return {(k.ix + 0.5) * voxel_size_, (k.iy + 0.5) * voxel_size_, (k.iz + 0.5) * voxel_size_};
  }

  const Voxel* find(const VoxelKey& key) const { return map_.find(key); }

  void apply_hit(const VoxelKey& key, double signed_distance, double alpha) {
    Voxel& v = map_.insert_or_get(key, Voxel{static_cast<float>(truncation_), 0.0f});
    v = update_hit_voxel(v, signed_distance, alpha);
  }

  void carve(const VoxelKey& key) { map_.erase(key); }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    map_.for_each(fn);
  }

  std::vector<VoxelKey> sorted_keys() const {
    std::vector<VoxelKey> keys;
    keys.reserve(map_.size());
    map_.for_each([&](const VoxelKey& k, const Voxel&) { keys.push_back(k); });
    std::sort(keys.begin(), keys.end(), [](const VoxelKey& l, const VoxelKey& r) {
      if (l.iz != r.iz) return l.iz < r.iz;
      if (l.iy != r.iy) return l.iy < r.iy;
      return l.ix < r.ix;
    });
    return keys;
  }

 private:
  double voxel_size_;
  double truncation_;
  VoxelHashMap map_;
};

/// Fuses one gated filter output into the volume. Rays are parameterized by
/// camera depth (the sample position u and the measurement d are both optical
/// axis depths), marched in voxel_size/2 steps; each voxel visited by a ray is
/// classified and updated once, with the signed distance evaluated at its
/// center's camera depth. Rays whose inlier expectation exceeds the carve gate
/// also erase free-space voxels between the camera and d - truncation. Rays
/// are applied in row-major pixel order, so the result does not depend on any
/// worker count.
inline void integrate(TsdfVolume& vol, const FilterOutput& output, const CameraFrame& frame,
                      const IntegrateOptions& opts = {}) {
  const double r = vol.truncation();
  const double step = vol.voxel_size() / 2.0;
  for (int y = 0; y < output.height; ++y) {
    for (int x = 0; x < output.width; ++x) {
      if (!output.has(x, y)) continue;
      const double d = output.depth.at(x, y);
      const double sigma2 = output.variance.at(x, y);
      if (!(d > 0.0) || !(sigma2 > 0.0)) continue;
      const double alpha =
          opts.weight_mode == TsdfWeightMode::kInverseVariance ? 1.0 / sigma2 : sigma2;
      const bool do_carve = output.inlier_expectation.at(x, y) > opts.carve_gate;

      const Vector3d dir = frame.intrinsics.unproject({double(x), double(y)});
      const double u_begin = do_carve ? 0.0 : std::max(0.0, d - r);
      const double u_end = d + r;
      bool have_prev = false;
      VoxelKey prev{};
      for (double u = u_begin; u <= u_end; u += step) {
        const VoxelKey key = vol.key_for(frame.pose.to_world(u * dir));
        if (have_prev && key == prev) continue;
        prev = key;
        have_prev = true;
        const double center_depth = frame.pose.to_camera(vol.voxel_center(key)).z();
        switch (classify_ray_sample(center_depth, d, r)) {
          case RayRegion::kHit:
            vol.apply_hit(key, std::clamp(d - center_depth, -r, r), alpha);
            break;
          case RayRegion::kCarve:
            vol.carve(key);
            break;
          case RayRegion::kUndefined:
            break;
        }
      }
    }
  }
}

// --- binary volume dump ----------------------------------------------------
//
//   bytes 0..7   magic "TSDFVOL1"
//   bytes 8..11  uint32 version (1)
//   bytes 12..19 float64 voxel size (LE bits)
//   bytes 20..27 float64 truncation
//   bytes 28..35 uint64 record count
//   records, sorted by (iz, iy, ix): int32 ix, iy, iz; float32 phi, weight

inline void save_volume(const TsdfVolume& vol, const std::string& path) {
  std::string buf;
  buf.append("TSDFVOL1");
  detail::put_u32(buf, 1);
  const auto put_f64 = [&](double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    detail::put_u64(buf, bits);
  };
  put_f64(vol.voxel_size());
  put_f64(vol.truncation());
  const auto keys = vol.sorted_keys();
  detail::put_u64(buf, keys.size());
  for (const VoxelKey& k : keys) {
    const Voxel* v = vol.find(k);
    detail::put_u32(buf, static_cast<std::uint32_t>(k.ix));
    detail::put_u32(buf, static_cast<std::uint32_t>(k.iy));
    detail::put_u32(buf, static_cast<std::uint32_t>(k.iz));
    detail::put_f32(buf, v->phi);
    detail::put_f32(buf, v->weight);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_volume: cannot open " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("save_volume: write failed for " + path);
}

inline TsdfVolume load_volume(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_volume: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 36 || buf.compare(0, 8, "TSDFVOL1") != 0)
    throw std::runtime_error("load_volume: bad header in " + path);
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  const auto get_f64 = [&](std::size_t off) {
    const std::uint64_t bits = detail::get_u64(p + off);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  };
  const double voxel_size = get_f64(12);
  const double truncation = get_f64(20);
  const std::uint64_t count = detail::get_u64(p + 28);
  if (buf.size() != 36 + count * 20) throw std::runtime_error("load_volume: truncated file " + path);
  TsdfVolume vol(voxel_size, truncation);
  std::size_t off = 36;
  for (std::uint64_t i = 0; i < count; ++i) {
    VoxelKey k{static_cast<std::int32_t>(detail::get_u32(p + off)),
               static_cast<std::int32_t>(detail::get_u32(p + off + 4)),
               static_cast<std::int32_t>(detail::get_u32(p + off + 8))};
    const float phi = detail::get_f32(p + off + 12);
    const float weight = detail::get_f32(p + off + 16);
    off += 20;
    if (weight > 0.0f) vol.apply_hit(k, phi, weight);
  }
  return vol;
}

}  // namespace monodense
