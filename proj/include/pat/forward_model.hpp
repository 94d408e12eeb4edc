#pragma once

#include "pat/image_grid.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

namespace pat {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Pixel layout of the image the operator acts on.
struct GridMeta {
  int nx = 128;
  int ny = 128;
  double spacing_mm = 0.1;

  static GridMeta of(const ImageGrid& img) { return {img.nx, img.ny, img.spacing_mm}; }
  double half_diagonal_mm() const;
  Eigen::Index pixels() const { return static_cast<Eigen::Index>(nx) * ny; }
  bool operator==(const GridMeta&) const = default;
};

/// L point detectors equispaced on a circle around the grid centre.
struct TransducerGeometry {
  int count = 16;
  double radius_mm = 9.5;
  double center_x_mm = 0.0;
  double center_y_mm = 0.0;

  double angle(int i) const;
  bool operator==(const TransducerGeometry&) const = default;
};

struct TimeSampling {
  int mt = 512;
  double dt_us = 0.0;
  double t0_us = 0.0;
  double c0_mm_per_us = 1.5;

  double time(int j) const { return t0_us + j * dt_us; }
  /// Sampling window just covering every source-detector distance for the
  /// given grid and detector radius.
  static TimeSampling covering(const GridMeta& grid, double radius_mm, int mt, double c0_mm_per_us = 1.5);
  bool operator==(const TimeSampling&) const = default;
};

/// Discrete PAT forward operator H. Row l = mt * i + j holds the weights of
/// the pressure sample of transducer i at time t_j.
struct ForwardOperator {
  GridMeta grid;
  TransducerGeometry geometry;
  TimeSampling sampling;
  double gamma = 1.0;
  SparseRowMatrix matrix;
  /// Content hash of the stored weights; identical matrices share it.
  std::uint64_t fingerprint = 0;

  Eigen::Index rows() const { return matrix.rows(); }
  Eigen::Index cols() const { return matrix.cols(); }
};

/// Hashes everything that determines the assembled weights.
std::uint64_t operator_key(const GridMeta& grid, const TransducerGeometry& geometry, const TimeSampling& sampling,
                           double gamma);

/// Arc quadrature (bilinear interpolation, step <= half a pixel) of E/|r - r'|
/// over |r_i - r'| = c0 t_j, followed by a central difference in time, all
/// scaled by gamma / (4 pi c0).
ForwardOperator build_operator(const GridMeta& grid, const TransducerGeometry& geometry, const TimeSampling& sampling,
                               double gamma = 1.0, int threads = 1);

Eigen::VectorXd apply(const ForwardOperator& op, const Eigen::Ref<const Eigen::VectorXd>& x);
Eigen::VectorXd apply(const ForwardOperator& op, const ImageGrid& img);
Eigen::VectorXd adjoint_vector(const ForwardOperator& op, const Eigen::Ref<const Eigen::VectorXd>& y);
ImageGrid adjoint(const ForwardOperator& op, const Eigen::Ref<const Eigen::VectorXd>& y);

/// Spectral norm estimate via power iteration on H^t H (deterministic start).
double spectral_norm(const ForwardOperator& op, int iterations = 100);

/// build_operator with gamma chosen so that ||H||_2^2 / n = 1, which puts the
/// (1/n) data term on the same footing as the regularizer. The chosen scale is
/// stored in the returned operator's gamma.
ForwardOperator build_normalized_operator(const GridMeta& grid, const TransducerGeometry& geometry,
                                          const TimeSampling& sampling, int threads = 1);

enum class SplitScheme {
  /// Removed samples spread evenly through each transducer's time block.
  UniformStride,
  /// Seeded uniform-random row subset.
  Random,
  /// The last samples of each transducer's time block.
  TailBlock,
};

SplitScheme parse_split_scheme(const std::string& name);

/// Full operator H_f and the reduced H obtained by deleting round(delta * n_f)
/// rows. Reduced rows are exact copies of the corresponding full rows.
struct OperatorSplit {
  ForwardOperator full;
  ForwardOperator reduced;
  std::vector<Eigen::Index> kept_rows;
  std::vector<Eigen::Index> removed_rows;
  double delta = 0.1;
  SplitScheme scheme = SplitScheme::UniformStride;

  /// Restricts a full-length measurement to the kept rows.
  Eigen::VectorXd reduce(const Eigen::Ref<const Eigen::VectorXd>& full_vector) const;
};

OperatorSplit split_rows(const ForwardOperator& op, double delta, SplitScheme scheme = SplitScheme::UniformStride,
                         std::uint64_t seed = 0);

/// Selects rows (in the given order) into a new operator.
ForwardOperator select_rows(const ForwardOperator& op, const std::vector<Eigen::Index>& rows);

struct Measurement {
  Eigen::VectorXd values;
  double snr_db = std::numeric_limits<double>::infinity();
  std::uint64_t noise_seed = 0;
  GridMeta grid;
  TransducerGeometry geometry;
  TimeSampling sampling;
  double gamma = 1.0;
};

/// m = H p0 + eta, eta ~ N(0, sigma^2) i.i.d. with
/// sigma = ||H p0|| / (sqrt(n) 10^(snr/20)). An infinite SNR adds no noise.
Measurement simulate_measurement(const ForwardOperator& op, const ImageGrid& img, double snr_db, std::uint64_t seed);

// Operator cache: "PATH" u32 version u64 key u32 nx u32 ny f64 spacing, then
// geometry, sampling and gamma, u64 rows u64 cols u64 nnz, u64 row offsets
// (rows + 1), u32 column indices, f64 weights.
void write_operator(const ForwardOperator& op, const std::filesystem::path& file);
ForwardOperator read_operator(const std::filesystem::path& file);

// Measurement: "PATM" u32 version, grid, geometry, sampling, gamma, snr,
// noise seed, u64 count, f64 samples.
void write_measurement(const Measurement& m, const std::filesystem::path& file);
Measurement read_measurement(const std::filesystem::path& file);

}  // namespace pat
