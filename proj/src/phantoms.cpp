#include "pat/error.hpp"
#include "pat/image_grid.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

namespace pat {

PhantomKind parse_phantom_kind(const std::string& name) {
  std::string n;
  for (char c : name) n.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (n == "bloodvessel" || n == "vessel") return PhantomKind::BloodVessel;
  if (n == "derenzo") return PhantomKind::Derenzo;
  if (n == "pattext" || n == "pat") return PhantomKind::PatText;
  if (n == "fromfile" || n == "file") return PhantomKind::FromFile;
  throw Error(ErrorKind::Config, "unknown phantom kind '" + name + "'");
}

std::string to_string(PhantomKind kind) {
  switch (kind) {
    case PhantomKind::BloodVessel: return "BloodVessel";
    case PhantomKind::Derenzo: return "Derenzo";
    case PhantomKind::PatText: return "PatText";
    case PhantomKind::FromFile: return "FromFile";
  }
  return "?";
}

namespace {

constexpr int kSupersample = 4;

// Uniform in [0, 1) straight from the engine's bits so the phantoms do not
// depend on the standard library's distribution implementations.
double unit_uniform(std::mt19937_64& gen) { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

// Area coverage of an inside() predicate over each pixel, using a regular
// kSupersample x kSupersample sub-grid. Coordinates are in pixels, origin at
// the grid centre.
template <typename Inside>
void rasterize_coverage(ImageGrid& img, Inside&& inside) {
  const double cx = 0.5 * (img.nx - 1);
  const double cy = 0.5 * (img.ny - 1);
  constexpr double w = 1.0 / (kSupersample * kSupersample);
  for (int r = 0; r < img.ny; ++r) {
    for (int c = 0; c < img.nx; ++c) {
      int hits = 0;
      for (int sy = 0; sy < kSupersample; ++sy) {
        const double y = r - cy + (sy + 0.5) / kSupersample - 0.5;
        for (int sx = 0; sx < kSupersample; ++sx) {
          const double x = c - cx + (sx + 0.5) / kSupersample - 0.5;
          hits += inside(x, y) ? 1 : 0;
        }
      }
      img.at(r, c) = std::max(img.at(r, c), hits * w);
    }
  }
}

struct Disk {
  double x, y, r;
};

ImageGrid derenzo(int size, std::uint64_t seed, double spacing) {
  ImageGrid img = ImageGrid::zeros(size, size, spacing);
  std::mt19937_64 gen(seed);
  const double f = size / 128.0;
  const double rotation = unit_uniform(gen) * std::numbers::pi / 3.0;
  const double outer = 0.46 * size;
  const double inner = 0.06 * size;
  constexpr std::array<double, 6> radii{2, 3, 4, 6, 8, 10};

  std::vector<Disk> disks;
  for (int sector = 0; sector < 6; ++sector) {
    const double r = radii[static_cast<std::size_t>(sector)] * f;
    const double pitch = 4.0 * r;
    const double bisector = rotation + (sector + 0.5) * std::numbers::pi / 3.0;
    const double ux = std::cos(bisector), uy = std::sin(bisector);
    const double vx = -uy, vy = ux;
    const double half_wedge = std::numbers::pi / 6.0;
    for (int row = 0;; ++row) {
      const double d = inner + r + row * pitch * std::sqrt(3.0) / 2.0;
      if (d + r > outer) break;
      // Triangular lattice: alternate rows are offset by half a pitch.
      const double offset = (row % 2) ? 0.5 * pitch : 0.0;
      for (int k = -64; k <= 64; ++k) {
        const double s = k * pitch + offset;
        const double px = d * ux + s * vx;
        const double py = d * uy + s * vy;
        const double rho = std::hypot(px, py);
        if (rho + r > outer) continue;
        const double ang = std::abs(std::remainder(std::atan2(py, px) - bisector, 2 * std::numbers::pi));
        // Keep a margin of one radius from both wedge edges.
        if (rho * std::sin(half_wedge - ang) < r * 1.5 || ang >= half_wedge) continue;
        disks.push_back({px, py, r});
      }
    }
  }
  rasterize_coverage(img, [&](double x, double y) {
    for (const auto& dk : disks) {
      const double dx = x - dk.x, dy = y - dk.y;
      if (dx * dx + dy * dy <= dk.r * dk.r) return true;
    }
    return false;
  });
  return img;
}

struct Segment {
  double x0, y0, x1, y1;
};

struct Branch {
  std::vector<Segment> segments;
  double sigma;
};

void grow_branch(std::mt19937_64& gen, double x, double y, double heading, double length, int depth,
                 double f, double limit, std::vector<Branch>& out) {
  constexpr int kMaxDepth = 4;
  constexpr int kSegments = 6;
  Branch br;
  br.sigma = std::max(0.75, (3.0 - 0.5 * depth) * f);
  const double step = length / kSegments;
  for (int s = 0; s < kSegments; ++s) {
    heading += (unit_uniform(gen) - 0.5) * 0.6;
    const double nx = x + step * std::cos(heading);
    const double ny = y + step * std::sin(heading);
    if (std::hypot(nx, ny) > limit) break;
    br.segments.push_back({x, y, nx, ny});
    x = nx;
    y = ny;
  }
  const bool complete = br.segments.size() == static_cast<std::size_t>(kSegments);
  if (!br.segments.empty()) out.push_back(std::move(br));
  if (!complete || depth >= kMaxDepth) return;
  const double spread = 0.35 + 0.35 * unit_uniform(gen);
  grow_branch(gen, x, y, heading + spread, length * 0.72, depth + 1, f, limit, out);
  grow_branch(gen, x, y, heading - spread, length * 0.72, depth + 1, f, limit, out);
}

double distance_sq(const Segment& s, double px, double py) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = s.x0 + t * dx - px, ey = s.y0 + t * dy - py;
  return ex * ex + ey * ey;
}

ImageGrid blood_vessel(int size, std::uint64_t seed, double spacing) {
  ImageGrid img = ImageGrid::zeros(size, size, spacing);
  std::mt19937_64 gen(seed);
  const double f = size / 128.0;
  const double limit = 0.47 * size;
  std::vector<Branch> branches;
  constexpr int kTrunks = 3;
  const double base = unit_uniform(gen) * 2 * std::numbers::pi;
  for (int t = 0; t < kTrunks; ++t) {
    const double a = base + t * 2 * std::numbers::pi / kTrunks + (unit_uniform(gen) - 0.5) * 0.5;
    const double sx = 0.42 * size * std::cos(a);
    const double sy = 0.42 * size * std::sin(a);
    const double heading = a + std::numbers::pi + (unit_uniform(gen) - 0.5) * 0.6;
    grow_branch(gen, sx, sy, heading, 0.3 * size, 0, f, limit, branches);
  }

  const double cx = 0.5 * (size - 1), cy = 0.5 * (size - 1);
  for (const auto& br : branches) {
    const double reach = 4.0 * br.sigma;
    const double inv2s2 = 1.0 / (2.0 * br.sigma * br.sigma);
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : br.segments) {
      xmin = std::min({xmin, s.x0, s.x1});
      xmax = std::max({xmax, s.x0, s.x1});
      ymin = std::min({ymin, s.y0, s.y1});
      ymax = std::max({ymax, s.y0, s.y1});
    }
    const int c0 = std::max(0, static_cast<int>(std::floor(xmin - reach + cx)));
    const int c1 = std::min(size - 1, static_cast<int>(std::ceil(xmax + reach + cx)));
    const int r0 = std::max(0, static_cast<int>(std::floor(ymin - reach + cy)));
    const int r1 = std::min(size - 1, static_cast<int>(std::ceil(ymax + reach + cy)));
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        double best = 1e300;
        for (const auto& s : br.segments) best = std::min(best, distance_sq(s, c - cx, r - cy));
        if (best <= reach * reach) img.at(r, c) += std::exp(-best * inv2s2);
      }
    }
  }
  img.values = img.values.cwiseMin(1.0);
  return img;
}

// 5x7 block glyphs, top row first.
constexpr std::array<const char*, 7> kGlyphP{"11110", "10001", "10001", "11110", "10000", "10000", "10000"};
constexpr std::array<const char*, 7> kGlyphA{"01110", "10001", "10001", "11111", "10001", "10001", "10001"};
constexpr std::array<const char*, 7> kGlyphT{"11111", "00100", "00100", "00100", "00100", "00100", "00100"};

ImageGrid pat_text(int size, double spacing) {
  ImageGrid img = ImageGrid::zeros(size, size, spacing);
  const std::array<const std::array<const char*, 7>*, 3> word{&kGlyphP, &kGlyphA, &kGlyphT};
  constexpr int kCols = 3 * 5 + 2;
  const double cell = 0.8 * size / kCols;
  const double left = -0.5 * kCols * cell;
  const double top = -3.5 * cell;
  rasterize_coverage(img, [&](double x, double y) {
    const double gx = (x - left) / cell;
    const double gy = (y - top) / cell;
    if (gx < 0 || gy < 0) return false;
    const int col = static_cast<int>(gx);
    const int row = static_cast<int>(gy);
    if (col >= kCols || row >= 7) return false;
    const int letter = col / 6;
    const int within = col % 6;
    if (within == 5) return false;
    return (*word[static_cast<std::size_t>(letter)])[static_cast<std::size_t>(row)][within] == '1';
  });
  return img;
}

}  // namespace

ImageGrid generate_phantom(const PhantomSpec& spec) {
  if (spec.size < 32 || spec.size > 1024)
    throw Error(ErrorKind::UnsupportedSize, "phantom size must lie in [32, 1024], got " + std::to_string(spec.size));
  const double spacing = spec.fov_mm / spec.size;
  ImageGrid img;
  switch (spec.kind) {
    case PhantomKind::Derenzo: img = derenzo(spec.size, spec.seed, spacing); break;
    case PhantomKind::BloodVessel: img = blood_vessel(spec.size, spec.seed, spacing); break;
    case PhantomKind::PatText: img = pat_text(spec.size, spacing); break;
    case PhantomKind::FromFile: {
      if (!spec.path) throw Error(ErrorKind::UnreadableFile, "FromFile phantom needs a path");
      img = resample(read_image(*spec.path, spacing), spec.size, spacing);
      break;
    }
  }
  normalize_peak(img);
  return img;
}

}  // namespace pat
