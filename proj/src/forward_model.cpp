#include "pat/forward_model.hpp"

#include "binary_io.hpp"
#include "pat/error.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <thread>

namespace pat {

double GridMeta::half_diagonal_mm() const {
  return 0.5 * spacing_mm * std::hypot(static_cast<double>(nx), static_cast<double>(ny));
}

double TransducerGeometry::angle(int i) const { return 2.0 * std::numbers::pi * i / count; }

TimeSampling TimeSampling::covering(const GridMeta& grid, double radius_mm, int mt, double c0_mm_per_us) {
  require(mt >= 4, ErrorKind::WindowTooShort, "need at least 4 time samples");
  const double hd = grid.half_diagonal_mm();
  TimeSampling s;
  s.mt = mt;
  s.c0_mm_per_us = c0_mm_per_us;
  s.t0_us = (radius_mm - hd) / c0_mm_per_us;
  s.dt_us = 2.0 * hd / (c0_mm_per_us * (mt - 1));
  return s;
}

std::uint64_t operator_key(const GridMeta& grid, const TransducerGeometry& geometry, const TimeSampling& sampling,
                           double gamma) {
  io::Fnv1a h;
  h.value(grid.nx);
  h.value(grid.ny);
  h.value(grid.spacing_mm);
  h.value(geometry.count);
  h.value(geometry.radius_mm);
  h.value(geometry.center_x_mm);
  h.value(geometry.center_y_mm);
  h.value(sampling.mt);
  h.value(sampling.dt_us);
  h.value(sampling.t0_us);
  h.value(sampling.c0_mm_per_us);
  h.value(gamma);
  return h.digest();
}

namespace {

using SparseEntries = std::vector<std::pair<int, double>>;

std::uint64_t matrix_fingerprint(const SparseRowMatrix& m) {
  io::Fnv1a h;
  const auto rows = m.rows(), cols = m.cols(), nnz = m.nonZeros();
  h.value(rows);
  h.value(cols);
  h.value(nnz);
  h.bytes(m.outerIndexPtr(), sizeof(int) * static_cast<std::size_t>(rows + 1));
  h.bytes(m.innerIndexPtr(), sizeof(int) * static_cast<std::size_t>(nnz));
  h.bytes(m.valuePtr(), sizeof(double) * static_cast<std::size_t>(nnz));
  return h.digest();
}

SparseRowMatrix assemble_csr(Eigen::Index rows, Eigen::Index cols, const std::vector<SparseEntries>& row_entries) {
  SparseRowMatrix m(rows, cols);
  std::size_t nnz = 0;
  for (const auto& r : row_entries) nnz += r.size();
  Eigen::VectorXi per_row(rows);
  for (Eigen::Index r = 0; r < rows; ++r) per_row[r] = static_cast<int>(row_entries[static_cast<std::size_t>(r)].size());
  m.reserve(per_row);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (const auto& [c, w] : row_entries[static_cast<std::size_t>(r)]) m.insert(r, c) = w;
  }
  m.makeCompressed();
  (void)nnz;
  return m;
}

// Integral of E over the arc of radius rho around the detector, parameterized
// by angle (the 1/|r - r'| factor cancels the arc-length element rho dphi).
void arc_integral(const GridMeta& grid, double tx, double ty, double inward, double rho, double detector_radius,
                  std::vector<double>& scratch, std::vector<int>& touched, SparseEntries& out) {
  out.clear();
  const double hd = grid.half_diagonal_mm();
  if (rho <= 0.0 || rho < detector_radius - hd || rho > detector_radius + hd) return;
  const double cosw = (rho * rho + detector_radius * detector_radius - hd * hd) / (2.0 * rho * detector_radius);
  const double half_width = std::acos(std::clamp(cosw, -1.0, 1.0));
  if (half_width <= 0.0) return;
  const double h = grid.spacing_mm;
  const int samples = std::max(1, static_cast<int>(std::ceil(2.0 * half_width * rho / (0.5 * h))));
  const double dphi = 2.0 * half_width / samples;
  const double cx = 0.5 * (grid.nx - 1), cy = 0.5 * (grid.ny - 1);

  auto deposit = [&](int r, int c, double w) {
    if (r < 0 || r >= grid.ny || c < 0 || c >= grid.nx || w == 0.0) return;
    const int idx = r * grid.nx + c;
    if (scratch[static_cast<std::size_t>(idx)] == 0.0) touched.push_back(idx);
    scratch[static_cast<std::size_t>(idx)] += w;
  };

  for (int k = 0; k < samples; ++k) {
    const double phi = inward - half_width + (k + 0.5) * dphi;
    const double px = tx + rho * std::cos(phi);
    const double py = ty + rho * std::sin(phi);
    const double fc = px / h + cx;
    const double fr = py / h + cy;
    const double c0 = std::floor(fc), r0 = std::floor(fr);
    const double wx = fc - c0, wy = fr - r0;
    const int ic = static_cast<int>(c0), ir = static_cast<int>(r0);
    deposit(ir, ic, (1 - wx) * (1 - wy) * dphi);
    deposit(ir, ic + 1, wx * (1 - wy) * dphi);
    deposit(ir + 1, ic, (1 - wx) * wy * dphi);
    deposit(ir + 1, ic + 1, wx * wy * dphi);
  }
  std::sort(touched.begin(), touched.end());
  out.reserve(touched.size());
  for (int idx : touched) {
    out.emplace_back(idx, scratch[static_cast<std::size_t>(idx)]);
    scratch[static_cast<std::size_t>(idx)] = 0.0;
  }
  touched.clear();
}

// scale * (a - b) over the union of supports; both inputs sorted by column.
void scaled_difference(const SparseEntries& a, const SparseEntries& b, double scale, SparseEntries& out) {
  out.clear();
  out.reserve(a.size() + b.size());
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    double v;
    int c;
    if (j == b.size() || (i < a.size() && a[i].first < b[j].first)) {
      c = a[i].first;
      v = a[i++].second;
    } else if (i == a.size() || b[j].first < a[i].first) {
      c = b[j].first;
      v = -b[j++].second;
    } else {
      c = a[i].first;
      v = a[i++].second - b[j++].second;
    }
    if (v != 0.0) out.emplace_back(c, scale * v);
  }
}

void check_geometry(const GridMeta& grid, const TransducerGeometry& geometry, const TimeSampling& sampling) {
  require(grid.nx >= 2 && grid.ny >= 2 && grid.spacing_mm > 0, ErrorKind::UnsupportedSize, "degenerate grid");
  require(geometry.count >= 1, ErrorKind::InvalidArgument, "need at least one transducer");
  const double hd = grid.half_diagonal_mm();
  const double offset = std::hypot(geometry.center_x_mm, geometry.center_y_mm);
  if (geometry.radius_mm - offset <= hd)
    throw Error(ErrorKind::GeometryInsideGrid, "detection radius " + std::to_string(geometry.radius_mm) +
                                                   " mm does not clear the grid half-diagonal " + std::to_string(hd));
  require(sampling.mt >= 4 && sampling.dt_us > 0 && sampling.c0_mm_per_us > 0, ErrorKind::WindowTooShort,
          "invalid time sampling");
  const double first = sampling.t0_us * sampling.c0_mm_per_us;
  const double last = sampling.time(sampling.mt - 1) * sampling.c0_mm_per_us;
  // Allow a hair of rounding slack on the window ends.
  const double slack = 1e-9 * geometry.radius_mm;
  if (first > geometry.radius_mm - offset - hd + slack || last < geometry.radius_mm + offset + hd - slack)
    throw Error(ErrorKind::WindowTooShort, "time window does not cover all source-detector distances");
}

}  // namespace

ForwardOperator build_operator(const GridMeta& grid, const TransducerGeometry& geometry, const TimeSampling& sampling,
                               double gamma, int threads) {
  check_geometry(grid, geometry, sampling);
  const int L = geometry.count;
  const int mt = sampling.mt;
  const double c0 = sampling.c0_mm_per_us;
  const double scale = gamma / (4.0 * std::numbers::pi * c0) / (2.0 * sampling.dt_us);
  std::vector<SparseEntries> rows(static_cast<std::size_t>(L) * static_cast<std::size_t>(mt));

  auto work = [&](int first, int last) {
    std::vector<double> scratch(static_cast<std::size_t>(grid.pixels()), 0.0);
    std::vector<int> touched;
    // Arc integrals at radii j = -1 .. mt feed the central differences.
    std::vector<SparseEntries> arcs(static_cast<std::size_t>(mt) + 2);
    for (int i = first; i < last; ++i) {
      const double theta = geometry.angle(i);
      const double tx = geometry.center_x_mm + geometry.radius_mm * std::cos(theta);
      const double ty = geometry.center_y_mm + geometry.radius_mm * std::sin(theta);
      const double inward = std::atan2(geometry.center_y_mm - ty, geometry.center_x_mm - tx);
      for (int j = -1; j <= mt; ++j) {
        const double rho = c0 * sampling.time(j);
        arc_integral(grid, tx, ty, inward, rho, geometry.radius_mm, scratch, touched,
                     arcs[static_cast<std::size_t>(j + 1)]);
      }
      for (int j = 0; j < mt; ++j) {
        scaled_difference(arcs[static_cast<std::size_t>(j + 2)], arcs[static_cast<std::size_t>(j)], scale,
                          rows[static_cast<std::size_t>(i) * mt + static_cast<std::size_t>(j)]);
      }
    }
  };

  threads = std::clamp(threads, 1, L);
  if (threads == 1) {
    work(0, L);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work, t * L / threads, (t + 1) * L / threads);
    for (auto& th : pool) th.join();
  }

  ForwardOperator op;
  op.grid = grid;
  op.geometry = geometry;
  op.sampling = sampling;
  op.gamma = gamma;
  op.matrix = assemble_csr(static_cast<Eigen::Index>(L) * mt, grid.pixels(), rows);
  op.fingerprint = matrix_fingerprint(op.matrix);
  return op;
}

Eigen::VectorXd apply(const ForwardOperator& op, const Eigen::Ref<const Eigen::VectorXd>& x) {
  require(x.size() == op.cols(), ErrorKind::DimensionMismatch,
          "image has " + std::to_string(x.size()) + " pixels, operator expects " + std::to_string(op.cols()));
  return op.matrix * x;
}

Eigen::VectorXd apply(const ForwardOperator& op, const ImageGrid& img) {
  require(img.nx == op.grid.nx && img.ny == op.grid.ny, ErrorKind::DimensionMismatch, "image shape mismatch");
  return apply(op, img.values);
}

Eigen::VectorXd adjoint_vector(const ForwardOperator& op, const Eigen::Ref<const Eigen::VectorXd>& y) {
  require(y.size() == op.rows(), ErrorKind::DimensionMismatch,
          "vector has " + std::to_string(y.size()) + " samples, operator has " + std::to_string(op.rows()) + " rows");
  return op.matrix.transpose() * y;
}

ImageGrid adjoint(const ForwardOperator& op, const Eigen::Ref<const Eigen::VectorXd>& y) {
  return ImageGrid(op.grid.nx, op.grid.ny, op.grid.spacing_mm, adjoint_vector(op, y));
}

double spectral_norm(const ForwardOperator& op, int iterations) {
  // Block power iteration with a Rayleigh-Ritz step: the leading singular
  // values of H are clustered, which stalls the single-vector method. The
  // pseudo-random start avoids symmetric vectors orthogonal to the leading
  // singular subspace.
  const Eigen::Index block = std::min<Eigen::Index>(8, op.cols());
  if (block == 0) return 0.0;
  std::mt19937_64 gen(0x5eed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Eigen::MatrixXd v(op.cols(), block);
  for (auto& e : v.reshaped()) e = dist(gen);
  double sigma2 = 0.0;
  for (int it = 0; it < iterations; ++it) {
    v = Eigen::HouseholderQR<Eigen::MatrixXd>(v).householderQ() * Eigen::MatrixXd::Identity(op.cols(), block);
    const Eigen::MatrixXd w = op.matrix.transpose() * (op.matrix * v);
    const Eigen::MatrixXd small = v.transpose() * w;
    sigma2 = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(small, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
    if (sigma2 <= 0.0) return 0.0;
    v = w;
  }
  return std::sqrt(sigma2);
}

ForwardOperator build_normalized_operator(const GridMeta& grid, const TransducerGeometry& geometry,
                                          const TimeSampling& sampling, int threads) {
  ForwardOperator op = build_operator(grid, geometry, sampling, 1.0, threads);
  const double norm = spectral_norm(op);
  if (norm == 0.0) return op;
  const double scale = std::sqrt(static_cast<double>(op.rows())) / norm;
  op.matrix *= scale;
  op.gamma = scale;
  op.fingerprint = matrix_fingerprint(op.matrix);
  return op;
}

SplitScheme parse_split_scheme(const std::string& name) {
  if (name == "stride" || name == "uniform-stride") return SplitScheme::UniformStride;
  if (name == "random") return SplitScheme::Random;
  if (name == "tail" || name == "tail-block") return SplitScheme::TailBlock;
  throw Error(ErrorKind::Config, "unknown split scheme '" + name + "'");
}

ForwardOperator select_rows(const ForwardOperator& op, const std::vector<Eigen::Index>& rows) {
  std::vector<SparseEntries> entries(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Eigen::Index r = rows[k];
    require(r >= 0 && r < op.rows(), ErrorKind::DimensionMismatch, "row index out of range");
    for (SparseRowMatrix::InnerIterator it(op.matrix, r); it; ++it) entries[k].emplace_back(it.col(), it.value());
  }
  ForwardOperator out;
  out.grid = op.grid;
  out.geometry = op.geometry;
  out.sampling = op.sampling;
  out.gamma = op.gamma;
  out.matrix = assemble_csr(static_cast<Eigen::Index>(rows.size()), op.cols(), entries);
  out.fingerprint = matrix_fingerprint(out.matrix);
  return out;
}

OperatorSplit split_rows(const ForwardOperator& op, double delta, SplitScheme scheme, std::uint64_t seed) {
  if (!(delta > 0.0 && delta < 0.5))
    throw Error(ErrorKind::DeltaOutOfRange, "delta must lie in (0, 0.5), got " + std::to_string(delta));
  const Eigen::Index nf = op.rows();
  const auto total = static_cast<Eigen::Index>(std::llround(delta * static_cast<double>(nf)));
  // Rows are grouped per transducer when the operator has the canonical layout.
  const Eigen::Index block = (op.geometry.count * static_cast<Eigen::Index>(op.sampling.mt) == nf) ? op.sampling.mt : nf;
  const Eigen::Index blocks = nf / block;

  std::vector<char> removed(static_cast<std::size_t>(nf), 0);
  if (scheme == SplitScheme::Random) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(nf));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::mt19937_64 gen(seed);
    std::shuffle(order.begin(), order.end(), gen);
    for (Eigen::Index k = 0; k < total; ++k) removed[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = 1;
  } else {
    const Eigen::Index base = total / blocks, extra = total % blocks;
    for (Eigen::Index b = 0; b < blocks; ++b) {
      const Eigen::Index count = base + (b < extra ? 1 : 0);
      for (Eigen::Index k = 0; k < count; ++k) {
        Eigen::Index j;
        if (scheme == SplitScheme::UniformStride)
          j = static_cast<Eigen::Index>(std::floor((static_cast<double>(k) + 0.5) * static_cast<double>(block) /
                                                   static_cast<double>(count)));
        else
          j = block - count + k;
        removed[static_cast<std::size_t>(b * block + j)] = 1;
      }
    }
  }

  OperatorSplit split;
  split.delta = delta;
  split.scheme = scheme;
  for (Eigen::Index r = 0; r < nf; ++r) (removed[static_cast<std::size_t>(r)] ? split.removed_rows : split.kept_rows).push_back(r);
  split.full = op;
  split.reduced = select_rows(op, split.kept_rows);
  return split;
}

Eigen::VectorXd OperatorSplit::reduce(const Eigen::Ref<const Eigen::VectorXd>& full_vector) const {
  require(full_vector.size() == full.rows(), ErrorKind::DimensionMismatch, "full measurement length mismatch");
  Eigen::VectorXd out(static_cast<Eigen::Index>(kept_rows.size()));
  for (std::size_t k = 0; k < kept_rows.size(); ++k) out[static_cast<Eigen::Index>(k)] = full_vector[kept_rows[k]];
  return out;
}

Measurement simulate_measurement(const ForwardOperator& op, const ImageGrid& img, double snr_db, std::uint64_t seed) {
  require(!std::isnan(snr_db) && snr_db != -std::numeric_limits<double>::infinity(), ErrorKind::InvalidArgument,
          "SNR must be finite or +inf");
  Measurement m;
  m.values = apply(op, img);
  m.snr_db = snr_db;
  m.noise_seed = seed;
  m.grid = op.grid;
  m.geometry = op.geometry;
  m.sampling = op.sampling;
  m.gamma = op.gamma;
  if (std::isfinite(snr_db) && m.values.size() > 0) {
    const double sigma =
        m.values.norm() / (std::sqrt(static_cast<double>(m.values.size())) * std::pow(10.0, snr_db / 20.0));
    if (sigma > 0.0) {
      std::mt19937_64 gen(seed);
      std::normal_distribution<double> noise(0.0, sigma);
      for (auto& v : m.values) v += noise(gen);
    }
  }
  return m;
}

namespace {

constexpr std::uint32_t kOperatorVersion = 1;
constexpr std::uint32_t kMeasurementVersion = 1;

void put_grid(std::ostream& os, const GridMeta& g) {
  io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.nx));
  io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.ny));
  io::put_le<double>(os, g.spacing_mm);
}

GridMeta get_grid(std::istream& is) {
  GridMeta g;
  g.nx = static_cast<int>(io::get_le<std::uint32_t>(is));
  g.ny = static_cast<int>(io::get_le<std::uint32_t>(is));
  g.spacing_mm = io::get_le<double>(is);
  return g;
}

void put_geometry(std::ostream& os, const TransducerGeometry& g, const TimeSampling& s, double gamma) {
  io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.count));
  io::put_le<double>(os, g.radius_mm);
  io::put_le<double>(os, g.center_x_mm);
  io::put_le<double>(os, g.center_y_mm);
  io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.mt));
  io::put_le<double>(os, s.dt_us);
  io::put_le<double>(os, s.t0_us);
  io::put_le<double>(os, s.c0_mm_per_us);
  io::put_le<double>(os, gamma);
}

void get_geometry(std::istream& is, TransducerGeometry& g, TimeSampling& s, double& gamma) {
  g.count = static_cast<int>(io::get_le<std::uint32_t>(is));
  g.radius_mm = io::get_le<double>(is);
  g.center_x_mm = io::get_le<double>(is);
  g.center_y_mm = io::get_le<double>(is);
  s.mt = static_cast<int>(io::get_le<std::uint32_t>(is));
  s.dt_us = io::get_le<double>(is);
  s.t0_us = io::get_le<double>(is);
  s.c0_mm_per_us = io::get_le<double>(is);
  gamma = io::get_le<double>(is);
}

}  // namespace

void write_operator(const ForwardOperator& op, const std::filesystem::path& file) {
  auto os = io::open_out(file);
  io::put_magic(os, "PATH");
  io::put_le<std::uint32_t>(os, kOperatorVersion);
  io::put_le<std::uint64_t>(os, operator_key(op.grid, op.geometry, op.sampling, op.gamma));
  put_grid(os, op.grid);
  put_geometry(os, op.geometry, op.sampling, op.gamma);
  const SparseRowMatrix& m = op.matrix;
  io::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
  io::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
  io::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.nonZeros()));
  for (Eigen::Index r = 0; r <= m.rows(); ++r) io::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.outerIndexPtr()[r]));
  for (Eigen::Index k = 0; k < m.nonZeros(); ++k) io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(m.innerIndexPtr()[k]));
  for (Eigen::Index k = 0; k < m.nonZeros(); ++k) io::put_le<double>(os, m.valuePtr()[k]);
  if (!os) throw Error(ErrorKind::Io, "write failed: " + file.string());
}

ForwardOperator read_operator(const std::filesystem::path& file) {
  auto is = io::open_in(file);
  io::expect_magic(is, "PATH", file);
  const auto version = io::get_le<std::uint32_t>(is);
  if (version != kOperatorVersion) throw Error(ErrorKind::Io, file.string() + ": unsupported operator version");
  const auto key = io::get_le<std::uint64_t>(is);
  ForwardOperator op;
  op.grid = get_grid(is);
  get_geometry(is, op.geometry, op.sampling, op.gamma);
  if (key != operator_key(op.grid, op.geometry, op.sampling, op.gamma))
    throw Error(ErrorKind::Io, file.string() + ": operator key does not match its header");
  const auto rows = io::get_le<std::uint64_t>(is);
  const auto cols = io::get_le<std::uint64_t>(is);
  const auto nnz = io::get_le<std::uint64_t>(is);
  if (cols != static_cast<std::uint64_t>(op.grid.pixels()) || nnz > (1ULL << 31))
    throw Error(ErrorKind::Io, file.string() + ": inconsistent operator dimensions");
  std::vector<int> outer(rows + 1), inner(nnz);
  std::vector<double> values(nnz);
  for (auto& v : outer) v = static_cast<int>(io::get_le<std::uint64_t>(is));
  for (auto& v : inner) v = static_cast<int>(io::get_le<std::uint32_t>(is));
  for (auto& v : values) v = io::get_le<double>(is);
  if (outer.front() != 0 || static_cast<std::uint64_t>(outer.back()) != nnz)
    throw Error(ErrorKind::Io, file.string() + ": corrupt row offsets");
  op.matrix = Eigen::Map<const SparseRowMatrix>(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols),
                                               static_cast<Eigen::Index>(nnz), outer.data(), inner.data(),
                                               values.data());
  op.fingerprint = matrix_fingerprint(op.matrix);
  return op;
}

void write_measurement(const Measurement& m, const std::filesystem::path& file) {
  auto os = io::open_out(file);
  io::put_magic(os, "PATM");
  io::put_le<std::uint32_t>(os, kMeasurementVersion);
  put_grid(os, m.grid);
  put_geometry(os, m.geometry, m.sampling, m.gamma);
  io::put_le<double>(os, m.snr_db);
  io::put_le<std::uint64_t>(os, m.noise_seed);
  io::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.values.size()));
  for (double v : m.values) io::put_le<double>(os, v);
  if (!os) throw Error(ErrorKind::Io, "write failed: " + file.string());
}

Measurement read_measurement(const std::filesystem::path& file) {
  auto is = io::open_in(file);
  io::expect_magic(is, "PATM", file);
  if (io::get_le<std::uint32_t>(is) != kMeasurementVersion)
    throw Error(ErrorKind::Io, file.string() + ": unsupported measurement version");
  Measurement m;
  m.grid = get_grid(is);
  get_geometry(is, m.geometry, m.sampling, m.gamma);
  m.snr_db = io::get_le<double>(is);
  m.noise_seed = io::get_le<std::uint64_t>(is);
  const auto n = io::get_le<std::uint64_t>(is);
  if (n != static_cast<std::uint64_t>(m.geometry.count) * static_cast<std::uint64_t>(m.sampling.mt))
    throw Error(ErrorKind::Io, file.string() + ": sample count does not match geometry");
  m.values.resize(static_cast<Eigen::Index>(n));
  for (auto& v : m.values) v = io::get_le<double>(is);
  return m;
}

}  // namespace pat
