#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pat {

/// Square-pixel 2D scalar field stored row-major: value(row, col) lives at
/// values[row * nx + col]. Rows run along y, columns along x.
struct ImageGrid {
  int nx = 0;
  int ny = 0;
  double spacing_mm = 0.1;
  Eigen::VectorXd values;

  ImageGrid() = default;
  ImageGrid(int nx_, int ny_, double spacing, Eigen::VectorXd v);
  static ImageGrid zeros(int nx, int ny, double spacing);

  Eigen::Index size() const { return values.size(); }
  double& at(int row, int col) { return values[static_cast<Eigen::Index>(row) * nx + col]; }
  double at(int row, int col) const { return values[static_cast<Eigen::Index>(row) * nx + col]; }

  /// Physical x coordinate (mm) of a column centre, origin at the grid centre.
  double x_mm(int col) const { return (col - 0.5 * (nx - 1)) * spacing_mm; }
  double y_mm(int row) const { return (row - 0.5 * (ny - 1)) * spacing_mm; }
  double half_diagonal_mm() const;

  bool same_shape(const ImageGrid& other) const { return nx == other.nx && ny == other.ny; }
};

enum class PhantomKind { BloodVessel, Derenzo, PatText, FromFile };

PhantomKind parse_phantom_kind(const std::string& name);
std::string to_string(PhantomKind kind);

struct PhantomSpec {
  PhantomKind kind = PhantomKind::Derenzo;
  int size = 128;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> path;
  /// Physical field of view; the pixel pitch is fov_mm / size.
  double fov_mm = 12.8;
};

/// Deterministic phantom in [0, 1] with peak exactly 1 (unless all-zero).
ImageGrid generate_phantom(const PhantomSpec& spec);

/// (x position in mm, value) pairs along one image row, left to right.
std::vector<std::pair<double, double>> scanline(const ImageGrid& img, int row);

/// Divides by the maximum so the peak is exactly 1.0; negatives clamp to 0.
void normalize_peak(ImageGrid& img);

// 16-bit binary PGM (P5, maxval 65535, sample = round(65535 * clamp(v, 0, 1))).
void write_pgm16(const ImageGrid& img, const std::filesystem::path& file);
// Reads P2/P5 PGM with any maxval; samples are scaled to [0, 1].
ImageGrid read_pgm(const std::filesystem::path& file, double spacing_mm = 0.1);

// Raw float64 grid: "PATG" u32 nx u32 ny u32 reserved, then nx*ny LE doubles.
void write_raw_grid(const ImageGrid& img, const std::filesystem::path& file);
ImageGrid read_raw_grid(const std::filesystem::path& file, double spacing_mm = 0.1);

/// Loads either format, dispatching on the magic bytes.
ImageGrid read_image(const std::filesystem::path& file, double spacing_mm = 0.1);

/// Bilinear resampling onto a size x size grid (used by FromFile phantoms).
ImageGrid resample(const ImageGrid& img, int size, double spacing_mm);

}  // namespace pat
