#pragma once

#include "pat/forward_model.hpp"
#include "pat/image_grid.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <random>
#include <string>

namespace pat::test {

inline Eigen::VectorXd random_vector(Eigen::Index n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = dist(gen);
  return v;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("pat-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Phantom of any size >= 8, downsampled from a 32 x 32 one when smaller.
inline ImageGrid small_phantom(PhantomKind kind, int size, std::uint64_t seed = 0, double fov_mm = 12.8) {
  PhantomSpec spec;
  spec.kind = kind;
  spec.size = std::max(size, 32);
  spec.seed = seed;
  spec.fov_mm = fov_mm;
  ImageGrid img = generate_phantom(spec);
  if (size < 32) {
    img = resample(img, size, fov_mm / size);
    normalize_peak(img);
  }
  return img;
}

/// Unit-scale operator for a size x size grid covering 12.8 mm.
inline ForwardOperator small_operator(int size, int transducers = 16, int samples = 128, bool normalize = true) {
  const GridMeta grid{size, size, 12.8 / size};
  TransducerGeometry geo;
  geo.count = transducers;
  const TimeSampling ts = TimeSampling::covering(grid, geo.radius_mm, samples);
  return normalize ? build_normalized_operator(grid, geo, ts) : build_operator(grid, geo, ts);
}

}  // namespace pat::test
