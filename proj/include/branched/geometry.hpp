#pragma once

// Atomic measures on a box, dyadic grids and the grid-based G_alpha estimator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "branched/errors.hpp"
#include "branched/point.hpp"

namespace branched {

/// Half-open box origin + [0, L)^d. The origin defaults to 0 so the box is
/// the usual Q_L; instances with negative coordinates shift it.
struct DomainBox {
  std::size_t dim = 2;
  double edge = 1.0;
  Point origin;

  DomainBox() : origin(2) {}
  DomainBox(std::size_t d, double L) : dim(d), edge(L), origin(d) { validate(); }
  DomainBox(std::size_t d, double L, Point o) : dim(d), edge(L), origin(std::move(o)) {
    validate();
  }

  void validate() const {
    if (dim < 1) throw DomainError("DomainBox: dim must be >= 1");
    if (!(edge > 0.0) || !std::isfinite(edge)) throw DomainError("DomainBox: edge must be > 0");
    if (origin.dim() != dim) throw DomainError("DomainBox: origin dimension mismatch");
  }

  bool contains(const Point& x) const {
    if (x.dim() != dim) return false;
    for (std::size_t i = 0; i < dim; ++i) {
      const double u = x[i] - origin[i];
      if (!(u >= 0.0 && u < edge)) return false;
    }
    return true;
  }

  double diameter() const { return edge * std::sqrt(static_cast<double>(dim)); }

  /// Radius under which two positions count as the same atom.
  double merge_radius() const { return 1e-12 * edge; }

  friend bool operator==(const DomainBox&, const DomainBox&) = default;
};

struct Atom {
  Point x;
  double mass = 0.0;
};

/// Finitely many positive point masses at distinct positions in a box.
class AtomicMeasure {
 public:
  AtomicMeasure() = default;

  /// Drops zero masses, merges positions within box.merge_radius() (the
  /// merged atom keeps the position of its first occurrence) and records the
  /// total. Atom order follows first occurrence in the input.
  static AtomicMeasure make(const std::vector<Atom>& points_masses, const DomainBox& box);

  const DomainBox& box() const noexcept { return box_; }
  std::size_t dim() const noexcept { return box_.dim; }
  const std::vector<Atom>& atoms() const noexcept { return atoms_; }
  std::size_t size() const noexcept { return atoms_.size(); }
  const Atom& operator[](std::size_t i) const { return atoms_[i]; }
  double total_mass() const noexcept { return total_; }

  bool is_probability(double tol = 1e-12) const { return std::abs(total_ - 1.0) <= tol; }

  /// Every mass multiplied by s > 0.
  AtomicMeasure scaled(double s) const;

 private:
  DomainBox box_;
  std::vector<Atom> atoms_;
  double total_ = 0.0;
};

inline AtomicMeasure make_measure(const std::vector<Atom>& points_masses, const DomainBox& box) {
  return AtomicMeasure::make(points_masses, box);
}

inline AtomicMeasure AtomicMeasure::make(const std::vector<Atom>& in, const DomainBox& box) {
  box.validate();
  const double snap = box.merge_radius();
  std::vector<std::size_t> keep;
  keep.reserve(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const Atom& a = in[i];
    if (!std::isfinite(a.mass) || a.mass < 0.0) {
      std::ostringstream os;
      os << "make_measure: atom " << i << " has invalid mass " << a.mass;
      throw PreconditionError(os.str());
    }
    if (!box.contains(a.x)) {
      std::ostringstream os;
      os << "make_measure: atom " << i << " lies outside the domain box";
      throw DomainError(os.str());
    }
    if (a.mass > 0.0) keep.push_back(i);
  }
  if (keep.empty()) throw DomainError("make_measure: empty measure (all masses zero)");

  // Sweep along the first coordinate; candidates for merging are within snap.
  std::vector<std::size_t> order = keep;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return in[a].x[0] < in[b].x[0]; });
  std::vector<std::size_t> rep(in.size());
  for (std::size_t i : keep) rep[i] = i;
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const std::size_t i = order[oi];
    for (std::size_t oj = oi; oj-- > 0;) {
      const std::size_t j = order[oj];
      if (in[i].x[0] - in[j].x[0] > snap) break;
      bool close = true;
      for (std::size_t c = 0; c < box.dim && close; ++c)
        close = std::abs(in[i].x[c] - in[j].x[c]) <= snap;
      if (close) {
        const std::size_t r = std::min(rep[i], rep[j]);
        rep[i] = r;
        rep[j] = r;
      }
    }
  }
  // Path-compress: representatives may themselves have been merged later.
  for (std::size_t i : keep) {
    std::size_t r = rep[i];
    while (rep[r] != r) r = rep[r];
    rep[i] = r;
  }

  AtomicMeasure m;
  m.box_ = box;
  std::map<std::size_t, std::size_t> slot;
  for (std::size_t i : keep) {
    auto [it, fresh] = slot.try_emplace(rep[i], m.atoms_.size());
    if (fresh) m.atoms_.push_back({in[rep[i]].x, 0.0});
    m.atoms_[it->second].mass += in[i].mass;
  }
  for (const Atom& a : m.atoms_) m.total_ += a.mass;
  return m;
}

inline AtomicMeasure AtomicMeasure::scaled(double s) const {
  if (!(s > 0.0)) throw PreconditionError("AtomicMeasure::scaled: factor must be > 0");
  AtomicMeasure m = *this;
  m.total_ = 0.0;
  for (Atom& a : m.atoms_) {
    a.mass *= s;
    m.total_ += a.mass;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Dyadic cells

/// Cell z at level j of the dyadic partition of the box: the cube
/// origin + (L/2^j)(z + [0,1)^d), with 0 <= z_i <= 2^j - 1.
struct DyadicIndex {
  int level = 0;
  std::vector<std::int64_t> cell;

  DyadicIndex() = default;
  DyadicIndex(int j, std::vector<std::int64_t> z) : level(j), cell(std::move(z)) {
    if (level < 0 || level > 62) throw PreconditionError("DyadicIndex: level out of range");
    const std::int64_t top = (std::int64_t{1} << level) - 1;
    for (std::int64_t c : cell)
      if (c < 0 || c > top) throw PreconditionError("DyadicIndex: cell component out of range");
  }

  std::int64_t side() const { return std::int64_t{1} << level; }

  /// The 2^d cells of the next level contained in this one.
  std::vector<DyadicIndex> children() const {
    const std::size_t d = cell.size();
    std::vector<DyadicIndex> out;
    out.reserve(std::size_t{1} << d);
    for (std::size_t mask = 0; mask < (std::size_t{1} << d); ++mask) {
      std::vector<std::int64_t> z(d);
      for (std::size_t i = 0; i < d; ++i) z[i] = 2 * cell[i] + ((mask >> i) & 1U);
      out.emplace_back(level + 1, std::move(z));
    }
    return out;
  }

  friend auto operator<=>(const DyadicIndex&, const DyadicIndex&) = default;
};

inline DyadicIndex cell_of(const DomainBox& box, const Point& x, int level) {
  const std::int64_t n = std::int64_t{1} << level;
  std::vector<std::int64_t> z(box.dim);
  for (std::size_t i = 0; i < box.dim; ++i) {
    const double u = (x[i] - box.origin[i]) / box.edge * static_cast<double>(n);
    z[i] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(u)), 0, n - 1);
  }
  return DyadicIndex(level, std::move(z));
}

inline Point cell_center(const DomainBox& box, const DyadicIndex& idx) {
  const double h = box.edge / static_cast<double>(idx.side());
  Point c(box.dim);
  for (std::size_t i = 0; i < box.dim; ++i)
    c[i] = box.origin[i] + (static_cast<double>(idx.cell[i]) + 0.5) * h;
  return c;
}

/// Visits every cell of level j in lexicographic order of z.
template <typename Fn>
void for_each_cell(std::size_t dim, int level, Fn&& fn) {
  const std::int64_t n = std::int64_t{1} << level;
  std::vector<std::int64_t> z(dim, 0);
  while (true) {
    fn(DyadicIndex(level, z));
    std::size_t i = dim;
    while (true) {
      if (i == 0) return;
      --i;
      if (++z[i] < n) break;
      z[i] = 0;
    }
  }
}

/// A diffuse measure given by its exact mass on every dyadic cell.
struct CellWeights {
  DomainBox box;
  std::function<double(const DyadicIndex&)> mass;
  std::string name;

  double total_mass() const { return mass(DyadicIndex(0, std::vector<std::int64_t>(box.dim, 0))); }

  /// Normalized Lebesgue measure of the box.
  static CellWeights lebesgue(const DomainBox& box) {
    const double d = static_cast<double>(box.dim);
    return {box, [d](const DyadicIndex& idx) { return std::exp2(-d * idx.level); }, "lebesgue"};
  }
};

/// a_j(mu): every nonempty level-j cell replaced by an atom at its center
/// carrying the cell's mass.
inline AtomicMeasure dyadic_approximation(const AtomicMeasure& mu, int level) {
  if (level < 0) throw PreconditionError("dyadic_approximation: negative level");
  std::map<DyadicIndex, double> cells;
  for (const Atom& a : mu.atoms()) cells[cell_of(mu.box(), a.x, level)] += a.mass;
  std::vector<Atom> atoms;
  atoms.reserve(cells.size());
  for (const auto& [idx, m] : cells) atoms.push_back({cell_center(mu.box(), idx), m});
  return AtomicMeasure::make(atoms, mu.box());
}

inline AtomicMeasure dyadic_approximation(const CellWeights& w, int level) {
  if (level < 0) throw PreconditionError("dyadic_approximation: negative level");
  std::vector<Atom> atoms;
  for_each_cell(w.box.dim, level, [&](const DyadicIndex& idx) {
    const double m = w.mass(idx);
    if (m > 0.0) atoms.push_back({cell_center(w.box, idx), m});
  });
  return AtomicMeasure::make(atoms, w.box);
}

namespace detail {
inline void check_alpha_open(double alpha, const char* who) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw PreconditionError(std::string(who) + ": alpha must lie in (0,1)");
}
}  // namespace detail

/// Sum over the cells of a regular k^d grid of (cell mass)^alpha.
inline double grid_galpha_estimate(const AtomicMeasure& mu, std::int64_t k, double alpha) {
  if (k < 1) throw PreconditionError("grid_galpha_estimate: k must be >= 1");
  detail::check_alpha_open(alpha, "grid_galpha_estimate");
  const DomainBox& box = mu.box();
  std::map<std::vector<std::int64_t>, double> cells;
  for (const Atom& a : mu.atoms()) {
    std::vector<std::int64_t> z(box.dim);
    for (std::size_t i = 0; i < box.dim; ++i) {
      const double u = (a.x[i] - box.origin[i]) / box.edge * static_cast<double>(k);
      z[i] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(u)), 0, k - 1);
    }
    cells[z] += a.mass;
  }
  double s = 0.0;
  for (const auto& [z, m] : cells) s += std::pow(m, alpha);
  return s;
}

/// Cell-weight version; k must be a power of two so grid cells are dyadic.
inline double grid_galpha_estimate(const CellWeights& w, std::int64_t k, double alpha) {
  if (k < 1 || (k & (k - 1)) != 0)
    throw PreconditionError("grid_galpha_estimate: k must be a power of two for cell weights");
  detail::check_alpha_open(alpha, "grid_galpha_estimate");
  int level = 0;
  while ((std::int64_t{1} << level) < k) ++level;
  double s = 0.0;
  for_each_cell(w.box.dim, level, [&](const DyadicIndex& idx) {
    const double m = w.mass(idx);
    if (m > 0.0) s += std::pow(m, alpha);
  });
  return s;
}

}  // namespace branched
