#ifndef ROMIMG_MEDIA_HPP
#define ROMIMG_MEDIA_HPP

#include <algorithm>
#include <cmath>
#include <compare>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "romimg/core.hpp"

namespace romimg {

/// Uniform tensor-product grid. Node (ix, iy) sits at (ox + ix*h, oy + iy*h);
/// iy grows with depth and iy = 0 is the top edge. Fields are stored
/// row-major: index = iy*nx + ix.
struct Grid2D {
  int nx = 0;
  int ny = 0;
  double h = 0.0;
  double ox = 0.0;
  double oy = 0.0;

  int size() const noexcept { return nx * ny; }
  int index(int ix, int iy) const noexcept { return iy * nx + ix; }
  double x(int ix) const noexcept { return ox + ix * h; }
  double y(int iy) const noexcept { return oy + iy * h; }
  bool contains(int ix, int iy) const noexcept { return ix >= 0 && iy >= 0 && ix < nx && iy < ny; }

  void validate() const {
    require(nx >= 3 && ny >= 3, "grid must have at least 3x3 nodes");
    require(h > 0.0 && std::isfinite(h), "grid spacing must be positive");
  }

  friend bool operator==(const Grid2D&, const Grid2D&) = default;
};

enum class EdgeLabel { accessible, inaccessible };

struct BoundaryLabels {
  EdgeLabel top = EdgeLabel::accessible;
  EdgeLabel bottom = EdgeLabel::inaccessible;
  EdgeLabel left = EdgeLabel::inaccessible;
  EdgeLabel right = EdgeLabel::inaccessible;

  friend bool operator==(const BoundaryLabels&, const BoundaryLabels&) = default;
};

struct Node {
  int ix = 0;
  int iy = 0;
  friend auto operator<=>(const Node&, const Node&) = default;
};

/// Acoustic velocity sampled on grid nodes, SI units (m/s).
struct VelocityModel {
  Grid2D grid;
  Vector c;
  BoundaryLabels boundary;

  void validate() const {
    grid.validate();
    require(c.size() == grid.size(), "velocity field size does not match grid");
    for (Eigen::Index i = 0; i < c.size(); ++i)
      require(std::isfinite(c[i]) && c[i] > 0.0, "velocity must be positive everywhere");
  }

  double at(int ix, int iy) const { return c[grid.index(ix, iy)]; }
  double& at(int ix, int iy) { return c[grid.index(ix, iy)]; }

  static VelocityModel constant(const Grid2D& g, double value, BoundaryLabels b = {}) {
    VelocityModel m{g, Vector::Constant(g.size(), value), b};
    m.validate();
    return m;
  }

  std::uint64_t hash() const {
    Hasher hs;
    hs.add(static_cast<std::int64_t>(grid.nx));
    hs.add(static_cast<std::int64_t>(grid.ny));
    hs.add(grid.h);
    hs.add(Matrix(c));
    hs.add(static_cast<std::int64_t>(boundary.top == EdgeLabel::accessible) |
           static_cast<std::int64_t>(boundary.bottom == EdgeLabel::accessible) << 1 |
           static_cast<std::int64_t>(boundary.left == EdgeLabel::accessible) << 2 |
           static_cast<std::int64_t>(boundary.right == EdgeLabel::accessible) << 3);
    return hs.value();
  }
};

// A node is Dirichlet if it lies on any inaccessible edge (so corners shared
// with an inaccessible edge are Dirichlet).
inline bool is_dirichlet(const Grid2D& g, const BoundaryLabels& b, int ix, int iy) {
  return (iy == 0 && b.top == EdgeLabel::inaccessible) ||
         (iy == g.ny - 1 && b.bottom == EdgeLabel::inaccessible) ||
         (ix == 0 && b.left == EdgeLabel::inaccessible) ||
         (ix == g.nx - 1 && b.right == EdgeLabel::inaccessible);
}

inline bool on_accessible_boundary(const Grid2D& g, const BoundaryLabels& b, int ix, int iy) {
  if (is_dirichlet(g, b, ix, iy)) return false;
  return (iy == 0 && b.top == EdgeLabel::accessible) ||
         (iy == g.ny - 1 && b.bottom == EdgeLabel::accessible) ||
         (ix == 0 && b.left == EdgeLabel::accessible) ||
         (ix == g.nx - 1 && b.right == EdgeLabel::accessible);
}

/// Collocated point-like transducers with weights theta (default 1).
struct TransducerArray {
  std::vector<Node> positions;
  Vector theta;

  int m() const noexcept { return static_cast<int>(positions.size()); }

  void validate(const VelocityModel& model) const {
    require(!positions.empty(), "transducer array is empty");
    require(theta.size() == m(), "theta must have one weight per transducer");
    std::set<Node> seen;
    for (const auto& p : positions) {
      require(model.grid.contains(p.ix, p.iy), "transducer outside the grid");
      require(on_accessible_boundary(model.grid, model.boundary, p.ix, p.iy),
              "transducer (" + std::to_string(p.ix) + "," + std::to_string(p.iy) +
                  ") is not on an accessible boundary node");
      require(seen.insert(p).second, "transducer positions must be distinct");
    }
  }

  TransducerArray subset(int first, int last) const {
    require(first >= 0 && last < m() && first <= last, "sub-array range out of bounds");
    TransducerArray out;
    out.positions.assign(positions.begin() + first, positions.begin() + last + 1);
    out.theta = theta.segment(first, last - first + 1);
    return out;
  }

  /// m transducers spread evenly over columns [first_ix, last_ix] of row iy.
  static TransducerArray along_row(int m, int first_ix, int last_ix, int iy = 0) {
    require(m >= 1, "need at least one transducer");
    TransducerArray a;
    for (int j = 0; j < m; ++j) {
      const double t = m == 1 ? 0.5 : static_cast<double>(j) / (m - 1);
      a.positions.push_back({static_cast<int>(std::lround(first_ix + t * (last_ix - first_ix))), iy});
    }
    a.theta = Vector::Ones(m);
    return a;
  }

  /// m transducers distributed evenly along the perimeter of the accessible edges.
  static TransducerArray around_boundary(const VelocityModel& model, int m) {
    std::vector<Node> ring;
    const auto& g = model.grid;
    for (int ix = 0; ix < g.nx; ++ix) ring.push_back({ix, 0});
    for (int iy = 1; iy < g.ny; ++iy) ring.push_back({g.nx - 1, iy});
    for (int ix = g.nx - 2; ix >= 0; --ix) ring.push_back({ix, g.ny - 1});
    for (int iy = g.ny - 2; iy >= 1; --iy) ring.push_back({0, iy});
    std::vector<Node> usable;
    for (const auto& p : ring)
      if (on_accessible_boundary(g, model.boundary, p.ix, p.iy)) usable.push_back(p);
    require(static_cast<int>(usable.size()) >= m, "not enough accessible nodes for the array");
    TransducerArray a;
    for (int j = 0; j < m; ++j)
      a.positions.push_back(usable[static_cast<std::size_t>(j) * usable.size() / static_cast<std::size_t>(m)]);
    a.theta = Vector::Ones(m);
    return a;
  }
};

/// Gaussian source wavelet and uniform time sampling t_k = k*tau, k < n2.
struct WaveletSpec {
  double sigma = 0.0;
  double tau = 0.0;
  int n2 = 0;

  int n() const noexcept { return n2 / 2; }

  void validate() const {
    require(sigma >= 0.0 && std::isfinite(sigma), "sigma must be non-negative");
    require(tau > 0.0 && std::isfinite(tau), "tau must be positive");
    require(n2 >= 4 && n2 % 2 == 0, "number of time samples must be even and >= 4");
  }

  /// Sampling interval tied to the wavelet duration: tau = sqrt(3)/2 * sigma.
  static WaveletSpec from_sigma(double sigma, int n2) {
    return {sigma, std::sqrt(3.0) / 2.0 * sigma, n2};
  }
};

/// Sparse symmetric discretization of c * Laplacian * c.
struct SymmetrizedOperator {
  Grid2D grid;
  BoundaryLabels boundary;
  SparseMatrix A;
  /// Gershgorin bound on the spectral radius of -A.
  double lambda_max = 0.0;

  int size() const noexcept { return grid.size(); }
};

/// Five-point Laplacian scaled as C L C. Nodes on inaccessible edges are
/// eliminated (zero rows and columns). On accessible edges the outward ghost
/// mirrors the boundary node across the half-cell face, which drops the
/// outward coupling and keeps the matrix exactly symmetric.
inline SymmetrizedOperator build_symmetrized_operator(const VelocityModel& model) {
  model.validate();
  const auto& g = model.grid;
  const double inv_h2 = 1.0 / (g.h * g.h);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(g.size()) * 5);
  constexpr int dx[4] = {-1, 1, 0, 0};
  constexpr int dy[4] = {0, 0, -1, 1};
  for (int iy = 0; iy < g.ny; ++iy) {
    for (int ix = 0; ix < g.nx; ++ix) {
      if (is_dirichlet(g, model.boundary, ix, iy)) continue;
      const int i = g.index(ix, iy);
      const double ci = model.c[i];
      int neighbours = 0;
      for (int d = 0; d < 4; ++d) {
        const int jx = ix + dx[d], jy = iy + dy[d];
        if (!g.contains(jx, jy)) continue;  // mirrored ghost: no flux
        ++neighbours;
        if (is_dirichlet(g, model.boundary, jx, jy)) continue;
        const int j = g.index(jx, jy);
        trip.emplace_back(i, j, (ci * model.c[j]) * inv_h2);
      }
      trip.emplace_back(i, i, -static_cast<double>(neighbours) * (ci * ci) * inv_h2);
    }
  }
  SymmetrizedOperator op{g, model.boundary, SparseMatrix(g.size(), g.size()), 0.0};
  op.A.setFromTriplets(trip.begin(), trip.end());
  op.A.makeCompressed();
  for (int r = 0; r < op.A.outerSize(); ++r) {
    double row = 0.0;
    for (SparseMatrix::InnerIterator it(op.A, r); it; ++it) row += std::abs(it.value());
    op.lambda_max = std::max(op.lambda_max, row);
  }
  return op;
}

/// Chebyshev expansion of exp(t*lambda) on [-lambda_max, 0].
struct ExpExpansion {
  std::vector<double> coeffs;
  double tail = 0.0;  // bound on the scalar remainder
};

inline ExpExpansion chebyshev_exp_coefficients(double a, double tol = 1e-12) {
  // f(x) = exp(a (x - 1)) on [-1, 1]; coefficients by Chebyshev-Gauss quadrature.
  const int degree_guess = static_cast<int>(std::ceil(a + 12.0 * std::sqrt(a))) + 40;
  const int K = 2 * degree_guess;
  std::vector<double> fvals(static_cast<std::size_t>(K)), theta(static_cast<std::size_t>(K));
  for (int j = 0; j < K; ++j) {
    theta[j] = std::numbers::pi * (j + 0.5) / K;
    fvals[j] = std::exp(a * (std::cos(theta[j]) - 1.0));
  }
  std::vector<double> c(static_cast<std::size_t>(degree_guess) + 1);
  for (int k = 0; k <= degree_guess; ++k) {
    double s = 0.0;
    for (int j = 0; j < K; ++j) s += fvals[j] * std::cos(k * theta[j]);
    c[k] = (k == 0 ? 1.0 : 2.0) * s / K;
  }
  // Smallest degree whose neglected tail is below tol.
  double tail = 0.0;
  int cut = degree_guess;
  for (int k = degree_guess; k >= 0; --k) {
    if (tail + std::abs(c[k]) > tol) break;
    tail += std::abs(c[k]);
    cut = k - 1;
  }
  if (cut == degree_guess) throw NumericalError("Chebyshev exponential: coefficients did not decay below tolerance");
  ExpExpansion e;
  e.coeffs.assign(c.begin(), c.begin() + std::max(cut, 0) + 1);
  e.tail = tail;
  return e;
}

/// exp(t A) X for t >= 0, applied matrix-free with a Chebyshev series.
inline Matrix exp_action(const SymmetrizedOperator& op, double t, const Matrix& X, double tol = 1e-12) {
  require(t >= 0.0, "exponential time must be non-negative");
  if (t == 0.0 || op.lambda_max == 0.0) return X;
  const double a = t * op.lambda_max / 2.0;
  const ExpExpansion e = chebyshev_exp_coefficients(a, tol);
  if (e.tail > tol) throw NumericalError("exponential approximation residual above tolerance");
  const double scale = 2.0 / op.lambda_max;
  // Xhat = scale*A + I maps the spectrum to [-1, 1].
  auto apply = [&](const Matrix& Y) -> Matrix { return scale * (op.A * Y) + Y; };
  Matrix t_prev = X;
  Matrix result = e.coeffs[0] * X;
  if (e.coeffs.size() == 1) return result;
  Matrix t_cur = apply(X);
  result += e.coeffs[1] * t_cur;
  for (std::size_t k = 2; k < e.coeffs.size(); ++k) {
    Matrix t_next = 2.0 * apply(t_cur) - t_prev;
    result += e.coeffs[k] * t_next;
    t_prev = std::move(t_cur);
    t_cur = std::move(t_next);
  }
  return result;
}

/// Unsmoothed point transducers: column j is theta_j / h at the node of transducer j.
inline Matrix point_transducers(const Grid2D& g, const TransducerArray& array) {
  Matrix e = Matrix::Zero(g.size(), array.m());
  for (int j = 0; j < array.m(); ++j) {
    const auto& p = array.positions[static_cast<std::size_t>(j)];
    e(g.index(p.ix, p.iy), j) = array.theta[j] / g.h;
  }
  return e;
}

/// Transducer field b = exp(sigma^2 A / 4) (theta e), one column per transducer.
inline Matrix build_transducer_field(const SymmetrizedOperator& op, const VelocityModel& model,
                                     const TransducerArray& array, const WaveletSpec& w) {
  w.validate();
  array.validate(model);
  require(op.grid == model.grid, "operator and model grids differ");
  return exp_action(op, w.sigma * w.sigma / 4.0, point_transducers(model.grid, array));
}

}  // namespace romimg

#endif  // ROMIMG_MEDIA_HPP
