#include "compose3d/voxel_grid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "compose3d/errors.hpp"

namespace compose3d {

VoxelGrid::VoxelGrid(int resolution, double extent_lo, double extent_hi, double density_raw,
                     double color_raw)
    : n_(resolution), lo_(extent_lo), hi_(extent_hi) {
  if (resolution < 1) throw ConfigError("voxel_resolution", "must be at least 1");
  if (!(extent_hi > extent_lo)) throw ConfigError("extent", "must have positive volume");
  const std::size_t count = static_cast<std::size_t>(resolution) * resolution * resolution;
  density_.assign(count, density_raw);
  color_.assign(count * 3, color_raw);
}

Vec3 VoxelGrid::voxel_center(int x, int y, int z) const {
  const double h = cell_size();
  return {lo_ + (x + 0.5) * h, lo_ + (y + 0.5) * h, lo_ + (z + 0.5) * h};
}

bool VoxelGrid::contains(const Vec3& p) const noexcept {
  return p.x() >= lo_ && p.x() <= hi_ && p.y() >= lo_ && p.y() <= hi_ && p.z() >= lo_ &&
         p.z() <= hi_;
}

bool VoxelGrid::all_finite() const noexcept {
  auto finite = [](double v) { return std::isfinite(v); };
  return std::all_of(density_.begin(), density_.end(), finite) &&
         std::all_of(color_.begin(), color_.end(), finite);
}

void GridGradient::zero() {
  std::fill(density.begin(), density.end(), 0.0);
  std::fill(color.begin(), color.end(), 0.0);
}

void GridGradient::add(const GridGradient& other, double scale) {
  for (std::size_t i = 0; i < density.size(); ++i) density[i] += scale * other.density[i];
  for (std::size_t i = 0; i < color.size(); ++i) color[i] += scale * other.color[i];
}

double GridGradient::dot(const GridGradient& other) const {
  double s = 0.0;
  for (std::size_t i = 0; i < density.size(); ++i) s += density[i] * other.density[i];
  for (std::size_t i = 0; i < color.size(); ++i) s += color[i] * other.color[i];
  return s;
}

double GridGradient::norm() const { return std::sqrt(dot(*this)); }

bool GridGradient::all_finite() const {
  auto finite = [](double v) { return std::isfinite(v); };
  return std::all_of(density.begin(), density.end(), finite) &&
         std::all_of(color.begin(), color.end(), finite);
}

std::optional<TrilinearStencil> trilinear_stencil(const VoxelGrid& grid, const Vec3& p) {
  if (!grid.contains(p)) return std::nullopt;
  const int n = grid.resolution();
  const double h = grid.cell_size();
  std::array<int, 3> i0{};
  std::array<int, 3> i1{};
  std::array<double, 3> frac{};
  for (int a = 0; a < 3; ++a) {
    double u = (p[a] - grid.extent_lo()) / h - 0.5;
    u = std::clamp(u, 0.0, static_cast<double>(n - 1));
    int lo = static_cast<int>(std::floor(u));
    if (lo > n - 2) lo = std::max(n - 2, 0);
    i0[a] = lo;
    i1[a] = std::min(lo + 1, n - 1);
    frac[a] = n == 1 ? 0.0 : u - lo;
  }
  TrilinearStencil s{};
  for (int k = 0; k < 8; ++k) {
    const int bx = k & 1, by = (k >> 1) & 1, bz = (k >> 2) & 1;
    s.index[k] = grid.index(bx ? i1[0] : i0[0], by ? i1[1] : i0[1], bz ? i1[2] : i0[2]);
    s.weight[k] = (bx ? frac[0] : 1.0 - frac[0]) * (by ? frac[1] : 1.0 - frac[1]) *
                  (bz ? frac[2] : 1.0 - frac[2]);
  }
  return s;
}

std::optional<RawSample> trilinear_sample(const VoxelGrid& grid, const Vec3& p) {
  const auto s = trilinear_stencil(grid, p);
  if (!s) return std::nullopt;
  RawSample out;
  const auto& d = grid.density();
  const auto& c = grid.color();
  for (int k = 0; k < 8; ++k) {
    const double w = s->weight[k];
    const std::size_t v = s->index[k];
    out.density += w * d[v];
    out.color += w * Vec3(c[3 * v], c[3 * v + 1], c[3 * v + 2]);
  }
  return out;
}

bool grid_gradient_scatter(const VoxelGrid& grid, const Vec3& p, double d_density,
                           const Vec3& d_color, GridGradient& grad) {
  const auto s = trilinear_stencil(grid, p);
  if (!s) return false;
  for (int k = 0; k < 8; ++k) {
    const double w = s->weight[k];
    const std::size_t v = s->index[k];
    grad.density[v] += w * d_density;
    grad.color[3 * v] += w * d_color.x();
    grad.color[3 * v + 1] += w * d_color.y();
    grad.color[3 * v + 2] += w * d_color.z();
  }
  return true;
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw std::domain_error("softplus_inverse needs a positive argument");
  // log(exp(y) - 1) = y + log(1 - exp(-y))
  return y + std::log(-std::expm1(-y));
}

Activated activate(double density_raw, const Vec3& color_raw, const Activation& act) {
  return {softplus(density_raw + act.density_bias),
          Vec3(logistic(color_raw.x()), logistic(color_raw.y()), logistic(color_raw.z()))};
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr char kMagic[4] = {'V', 'O', 'X', 'G'};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

void put_f32(std::vector<unsigned char>& out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    if (pos_ + 4 > bytes_.size()) throw IoError("checkpoint truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_checkpoint(const VoxelGrid& grid) {
  std::vector<unsigned char> out;
  out.reserve(20 + grid.parameter_count() * 4);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(grid.resolution()));
  put_f32(out, grid.extent_lo());
  put_f32(out, grid.extent_hi());
  for (double v : grid.density()) put_f32(out, v);
  for (double v : grid.color()) put_f32(out, v);
  return out;
}

VoxelGrid decode_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw IoError("not a voxel grid checkpoint (bad magic)");
  }
  std::vector<unsigned char> body(bytes.begin() + 4, bytes.end());
  Reader r(body);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t n = r.u32();
  if (n == 0 || n > 2048) throw IoError("implausible checkpoint resolution " + std::to_string(n));
  const double lo = r.f32();
  const double hi = r.f32();
  const std::size_t count = static_cast<std::size_t>(n) * n * n;
  if (body.size() != 16 + count * 16) {
    throw IoError("checkpoint size does not match its resolution");
  }
  VoxelGrid grid(static_cast<int>(n), lo, hi);
  for (double& v : grid.density()) v = r.f32();
  for (double& v : grid.color()) v = r.f32();
  if (!grid.all_finite()) throw IoError("checkpoint contains non-finite values");
  return grid;
}

void write_checkpoint(const VoxelGrid& grid, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(grid);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing " + path.string());
}

VoxelGrid read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace compose3d
