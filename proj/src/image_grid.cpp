#include "pat/image_grid.hpp"

#include "binary_io.hpp"
#include "pat/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace pat {

ImageGrid::ImageGrid(int nx_, int ny_, double spacing, Eigen::VectorXd v)
    : nx(nx_), ny(ny_), spacing_mm(spacing), values(std::move(v)) {
  require(nx >= 1 && ny >= 1, ErrorKind::UnsupportedSize, "grid dimensions must be positive");
  require(values.size() == static_cast<Eigen::Index>(nx) * ny, ErrorKind::DimensionMismatch,
          "value count does not match nx*ny");
}

ImageGrid ImageGrid::zeros(int nx, int ny, double spacing) {
  return ImageGrid(nx, ny, spacing, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nx) * ny));
}

double ImageGrid::half_diagonal_mm() const {
  return 0.5 * spacing_mm * std::hypot(static_cast<double>(nx), static_cast<double>(ny));
}

std::vector<std::pair<double, double>> scanline(const ImageGrid& img, int row) {
  if (row < 0 || row >= img.ny)
    throw Error(ErrorKind::RowOutOfRange,
                "row " + std::to_string(row) + " outside [0, " + std::to_string(img.ny) + ")");
  std::vector<std::pair<double, double>> out;
  out.reserve(static_cast<std::size_t>(img.nx));
  for (int col = 0; col < img.nx; ++col) out.emplace_back(img.x_mm(col), img.at(row, col));
  return out;
}

void normalize_peak(ImageGrid& img) {
  img.values = img.values.cwiseMax(0.0);
  const double peak = img.values.size() ? img.values.maxCoeff() : 0.0;
  if (peak > 0.0) {
    for (auto& v : img.values) v = v / peak;
  }
}

void write_pgm16(const ImageGrid& img, const std::filesystem::path& file) {
  auto os = io::open_out(file);
  os << "P5\n" << img.nx << ' ' << img.ny << "\n65535\n";
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    const double v = std::clamp(img.values[i], 0.0, 1.0);
    const auto s = static_cast<std::uint16_t>(std::lround(65535.0 * v));
    const char be[2] = {static_cast<char>(s >> 8), static_cast<char>(s & 0xff)};
    os.write(be, 2);
  }
  if (!os) throw Error(ErrorKind::Io, "write failed: " + file.string());
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string pgm_token(std::istream& is) {
  std::string tok;
  char c;
  while (is.get(c)) {
    if (c == '#') {
      std::string ignored;
      std::getline(is, ignored);
      if (!tok.empty()) break;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  if (tok.empty()) throw Error(ErrorKind::UnreadableFile, "truncated PGM header");
  return tok;
}

}  // namespace

ImageGrid read_pgm(const std::filesystem::path& file, double spacing_mm) {
  auto is = io::open_in(file, ErrorKind::UnreadableFile);
  const std::string magic = pgm_token(is);
  if (magic != "P5" && magic != "P2") throw Error(ErrorKind::UnreadableFile, file.string() + ": not a PGM");
  int nx = 0, ny = 0, maxval = 0;
  try {
    nx = std::stoi(pgm_token(is));
    ny = std::stoi(pgm_token(is));
    maxval = std::stoi(pgm_token(is));
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::UnreadableFile, file.string() + ": malformed PGM header");
  }
  if (nx <= 0 || ny <= 0 || maxval <= 0 || maxval > 65535)
    throw Error(ErrorKind::UnreadableFile, file.string() + ": unsupported PGM dimensions");
  Eigen::VectorXd v(static_cast<Eigen::Index>(nx) * ny);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    unsigned sample = 0;
    if (magic == "P2") {
      if (!(is >> sample)) throw Error(ErrorKind::UnreadableFile, file.string() + ": truncated data");
    } else if (maxval < 256) {
      const int c = is.get();
      if (c == EOF) throw Error(ErrorKind::UnreadableFile, file.string() + ": truncated data");
      sample = static_cast<unsigned>(c);
    } else {
      const int hi = is.get();
      const int lo = is.get();
      if (lo == EOF) throw Error(ErrorKind::UnreadableFile, file.string() + ": truncated data");
      sample = (static_cast<unsigned>(hi) << 8) | static_cast<unsigned>(lo);
    }
    v[i] = static_cast<double>(sample) / maxval;
  }
  return ImageGrid(nx, ny, spacing_mm, std::move(v));
}

void write_raw_grid(const ImageGrid& img, const std::filesystem::path& file) {
  auto os = io::open_out(file);
  io::put_magic(os, "PATG");
  io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(img.nx));
  io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(img.ny));
  io::put_le<std::uint32_t>(os, 0);
  for (double v : img.values) io::put_le<double>(os, v);
  if (!os) throw Error(ErrorKind::Io, "write failed: " + file.string());
}

ImageGrid read_raw_grid(const std::filesystem::path& file, double spacing_mm) {
  auto is = io::open_in(file, ErrorKind::UnreadableFile);
  io::expect_magic(is, "PATG", file);
  const auto nx = io::get_le<std::uint32_t>(is);
  const auto ny = io::get_le<std::uint32_t>(is);
  (void)io::get_le<std::uint32_t>(is);
  if (nx == 0 || ny == 0 || nx > 65536 || ny > 65536)
    throw Error(ErrorKind::UnreadableFile, file.string() + ": implausible grid size");
  Eigen::VectorXd v(static_cast<Eigen::Index>(nx) * ny);
  for (auto& x : v) x = io::get_le<double>(is);
  return ImageGrid(static_cast<int>(nx), static_cast<int>(ny), spacing_mm, std::move(v));
}

ImageGrid read_image(const std::filesystem::path& file, double spacing_mm) {
  auto is = io::open_in(file, ErrorKind::UnreadableFile);
  char magic[4] = {};
  is.read(magic, 4);
  if (is && std::string(magic, 4) == "PATG") return read_raw_grid(file, spacing_mm);
  return read_pgm(file, spacing_mm);
}

ImageGrid resample(const ImageGrid& img, int size, double spacing_mm) {
  if (img.nx == size && img.ny == size) {
    ImageGrid out = img;
    out.spacing_mm = spacing_mm;
    return out;
  }
  ImageGrid out = ImageGrid::zeros(size, size, spacing_mm);
  const double sx = static_cast<double>(img.nx) / size;
  const double sy = static_cast<double>(img.ny) / size;
  for (int r = 0; r < size; ++r) {
    const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, img.ny - 1.0);
    const int y0 = std::min(static_cast<int>(fy), img.ny - 1);
    const int y1 = std::min(y0 + 1, img.ny - 1);
    const double wy = fy - y0;
    for (int c = 0; c < size; ++c) {
      const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, img.nx - 1.0);
      const int x0 = std::min(static_cast<int>(fx), img.nx - 1);
      const int x1 = std::min(x0 + 1, img.nx - 1);
      const double wx = fx - x0;
      // Difference form keeps constant regions exactly constant.
      const double top = img.at(y0, x0) + wx * (img.at(y0, x1) - img.at(y0, x0));
      const double bottom = img.at(y1, x0) + wx * (img.at(y1, x1) - img.at(y1, x0));
      out.at(r, c) = top + wy * (bottom - top);
    }
  }
  return out;
}

}  // namespace pat
