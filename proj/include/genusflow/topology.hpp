#pragma once

// Invariant-set estimation on a cell grid, component labeling across
// identified edges, fiber thickness, equilibrium indices and trapping checks.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "genusflow/error.hpp"
#include "genusflow/field.hpp"
#include "genusflow/geometry.hpp"
#include "genusflow/poincare.hpp"

namespace genusflow {

/// Worker count: GENUSFLOW_THREADS if set and positive, else hardware threads.
inline unsigned worker_count() {
  if (const char* env = std::getenv("GENUSFLOW_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(begin, end, worker) over contiguous chunks of [0, n).
template <class Fn>
void parallel_chunks(std::size_t n, unsigned workers, Fn fn) {
  workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, workers), std::max<std::size_t>(n, 1)));
  if (workers <= 1) {
    fn(std::size_t{0}, n, 0u);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::exception_ptr> errs(workers);
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t b = std::min(n, w * chunk), e = std::min(n, b + chunk);
    pool.emplace_back([&, b, e, w] {
      try {
        fn(b, e, w);
      } catch (...) {
        errs[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errs) {
    if (e) std::rethrow_exception(e);
  }
}

/// Occupancy bitmap over the domain rectangle (or a plane box).
struct Region {
  int nx = 0;
  int ny = 0;
  Box box;
  std::optional<RectDomain> domain;
  std::vector<std::uint8_t> cells;

  Region() = default;
  Region(int nx_, int ny_, Box b, std::optional<RectDomain> dom = std::nullopt)
      : nx(nx_), ny(ny_), box(b), domain(std::move(dom)), cells(static_cast<std::size_t>(nx_) * ny_, 0) {
    if (nx < 8 || ny < 8) throw Error(ErrorKind::input, "region grid must be at least 8x8");
  }

  static Region over(const RectDomain& dom, int nx, int ny) { return Region(nx, ny, dom.bounds(), dom); }

  double dx() const { return box.width() / nx; }
  double dy() const { return box.height() / ny; }
  std::size_t index(int ix, int iy) const { return static_cast<std::size_t>(iy) * nx + ix; }
  bool at(int ix, int iy) const { return cells[index(ix, iy)] != 0; }
  void set(int ix, int iy, bool v = true) { cells[index(ix, iy)] = v ? 1 : 0; }
  Vec2 center(int ix, int iy) const { return {box.x_min + (ix + 0.5) * dx(), box.y_min + (iy + 0.5) * dy()}; }
  Vec2 lattice(int i, int j) const { return {box.x_min + i * dx(), box.y_min + j * dy()}; }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), std::uint8_t{1}));
  }
  bool empty() const { return count() == 0; }

  /// Cell containing q (closed rectangle, upper edges go to the last cell).
  std::optional<std::pair<int, int>> cell_of(Vec2 q) const {
    if (!box.contains(q, 1e-12 * std::max(1.0, box.width()))) return std::nullopt;
    const int ix = std::clamp(static_cast<int>(std::floor((q.x - box.x_min) / dx())), 0, nx - 1);
    const int iy = std::clamp(static_cast<int>(std::floor((q.y - box.y_min) / dy())), 0, ny - 1);
    return std::make_pair(ix, iy);
  }

  void fill(bool v = true) { std::fill(cells.begin(), cells.end(), v ? 1 : 0); }

  /// Marks the cells whose centre satisfies e(x, y, 0) <= 0.
  void fill_where(const Expr& e) {
    const CompiledExpr c(e);
    for (int iy = 0; iy < ny; ++iy) {
      for (int ix = 0; ix < nx; ++ix) {
        const Vec2 q = center(ix, iy);
        set(ix, iy, c(q.x, q.y, 0.0) <= 0.0);
      }
    }
  }

  void fill_rect(int ix0, int iy0, int ix1, int iy1) {
    for (int iy = std::max(0, iy0); iy <= std::min(ny - 1, iy1); ++iy) {
      for (int ix = std::max(0, ix0); ix <= std::min(nx - 1, ix1); ++ix) set(ix, iy);
    }
  }
};

enum class Axis { x, y };

struct ComponentInfo {
  int label = 0;
  std::size_t cells = 0;
  std::vector<AffineMap> holonomy;  // nontrivial deck elements along loops of the component
  Axis section_axis = Axis::x;
  std::vector<int> thickness;  // transverse extent per section bin

  bool wraps() const { return !holonomy.empty(); }
};

struct AttractorEstimate {
  Region region;
  std::vector<int> labels;  // -1 for empty cells
  std::vector<ComponentInfo> components;
  int iterations = 0;   // iterates actually computed
  bool converged = false;  // occupancy stopped changing before n
  bool empty_warning = false;
  std::vector<std::size_t> occupancy;  // cell count after each iterate, starting with B0
};

namespace detail {

// Neighbours of a boundary cell across an identified edge: every cell met by
// the image of the cell's face, with the map carrying this chart onto theirs.
struct Crossing {
  int ix = -1, iy = -1;
  AffineMap map;
};

inline std::vector<Crossing> cross_edge(const Region& r, int ix, int iy, int dir) {
  std::vector<Crossing> out;
  if (!r.domain) return out;
  const RectDomain& dom = *r.domain;
  const double ex = 1e-9 * std::max(1.0, r.box.width()), ey = 1e-9 * std::max(1.0, r.box.height());
  const double x0 = r.box.x_min + ix * r.dx(), y0 = r.box.y_min + iy * r.dy();
  const double sx = 1e-6 * r.dx(), sy = 1e-6 * r.dy();
  Vec2 p, q;
  switch (dir) {
    case 0: p = {r.box.x_min - ex, y0 + sy}; q = {r.box.x_min - ex, y0 + r.dy() - sy}; break;
    case 1: p = {r.box.x_max + ex, y0 + sy}; q = {r.box.x_max + ex, y0 + r.dy() - sy}; break;
    case 2: p = {x0 + sx, r.box.y_min - ey}; q = {x0 + r.dx() - sx, r.box.y_min - ey}; break;
    default: p = {x0 + sx, r.box.y_max + ey}; q = {x0 + r.dx() - sx, r.box.y_max + ey}; break;
  }
  const Vec2 mid = 0.5 * (p + q);
  const AffineMap& tr = dom.transition(dom.exit_segment(mid));
  AffineMap m = tr;
  if (!dom.contains(tr(mid))) m = compose(reduce_to_domain(tr(mid), dom).map, m);
  const auto cp = r.cell_of(m(p)), cq = r.cell_of(m(q));
  if (!cp || !cq) return out;
  const int ax = std::min(cp->first, cq->first), bx = std::max(cp->first, cq->first);
  const int ay = std::min(cp->second, cq->second), by = std::max(cp->second, cq->second);
  for (int jy = ay; jy <= by; ++jy) {
    for (int jx = ax; jx <= bx; ++jx) out.push_back(Crossing{jx, jy, m});
  }
  return out;
}

inline bool is_identity(const AffineMap& m, double tol = 1e-6) {
  return m.distance_to(AffineMap::identity()) < tol;
}

inline void add_holonomy(std::vector<AffineMap>& hs, const AffineMap& h) {
  if (is_identity(h)) return;
  const AffineMap hi = h.inverse();
  for (const AffineMap& o : hs) {
    if (o.distance_to(h) < 1e-6 || o.distance_to(hi) < 1e-6) return;
  }
  hs.push_back(h);
}

// Span of occupied positions on a line of n cells, cyclic if requested.
inline int span_of(const std::vector<std::uint8_t>& occ, bool cyclic) {
  const int n = static_cast<int>(occ.size());
  int first = -1, last = -1, count = 0;
  for (int i = 0; i < n; ++i) {
    if (occ[i]) {
      if (first < 0) first = i;
      last = i;
      ++count;
    }
  }
  if (count == 0) return 0;
  int span = last - first + 1;
  if (cyclic) {
    int gap = 0, run = 0;
    for (int k = 0; k < 2 * n; ++k) {
      if (occ[k % n]) {
        run = 0;
      } else {
        gap = std::max(gap, ++run);
      }
    }
    span = std::min(span, n - std::min(gap, n));
  }
  return span;
}

}  // namespace detail

/// Thickness profile of component `label`: cells binned along `axis`, each
/// bin reporting the largest transverse extent over its grid lines.
inline std::vector<int> thickness_profile(const Region& r, const std::vector<int>& labels, int label,
                                          Axis axis, int bins) {
  if (bins < 1) throw Error(ErrorKind::input, "need at least one section bin");
  const bool cyclic = r.domain.has_value() && r.domain->genus() == 1;
  const int along = axis == Axis::x ? r.nx : r.ny;
  const int across = axis == Axis::x ? r.ny : r.nx;
  std::vector<int> prof(bins, 0);
  std::vector<std::uint8_t> line(across);
  for (int i = 0; i < along; ++i) {
    std::fill(line.begin(), line.end(), 0);
    for (int j = 0; j < across; ++j) {
      const int ix = axis == Axis::x ? i : j, iy = axis == Axis::x ? j : i;
      line[j] = labels[r.index(ix, iy)] == label ? 1 : 0;
    }
    const int bin = static_cast<int>(static_cast<long long>(i) * bins / along);
    prof[bin] = std::max(prof[bin], detail::span_of(line, cyclic));
  }
  return prof;
}

/// Labels occupied cells with 4-connectivity, treating cells on paired
/// segments as adjacent, and records deck holonomy of loops.
inline AttractorEstimate label_components(Region region, int bins = 64) {
  AttractorEstimate est;
  est.region = std::move(region);
  const Region& r = est.region;
  const std::size_t n = r.cells.size();
  est.labels.assign(n, -1);
  std::vector<AffineMap> lift(n);
  int next = 0;
  std::deque<std::pair<int, int>> queue;
  for (int sy = 0; sy < r.ny; ++sy) {
    for (int sx = 0; sx < r.nx; ++sx) {
      if (!r.at(sx, sy) || est.labels[r.index(sx, sy)] >= 0) continue;
      ComponentInfo info;
      info.label = next;
      est.labels[r.index(sx, sy)] = next;
      lift[r.index(sx, sy)] = AffineMap::identity();
      queue.emplace_back(sx, sy);
      while (!queue.empty()) {
        const auto [ix, iy] = queue.front();
        queue.pop_front();
        ++info.cells;
        const AffineMap& lc = lift[r.index(ix, iy)];
        const int nbx[4] = {ix - 1, ix + 1, ix, ix};
        const int nby[4] = {iy, iy, iy - 1, iy + 1};
        for (int d = 0; d < 4; ++d) {
          std::vector<detail::Crossing> nbs;
          if (nbx[d] < 0 || nbx[d] >= r.nx || nby[d] < 0 || nby[d] >= r.ny) {
            nbs = detail::cross_edge(r, ix, iy, d);
            for (auto& cr : nbs) cr.map = compose(lc, cr.map.inverse());
          } else {
            nbs.push_back(detail::Crossing{nbx[d], nby[d], lc});
          }
          for (const auto& cr : nbs) {
            if (!r.at(cr.ix, cr.iy)) continue;
            const std::size_t k = r.index(cr.ix, cr.iy);
            if (est.labels[k] < 0) {
              est.labels[k] = next;
              lift[k] = cr.map;
              queue.emplace_back(cr.ix, cr.iy);
            } else {
              detail::add_holonomy(info.holonomy, compose(cr.map, lift[k].inverse()));
            }
          }
        }
      }
      if (info.wraps()) {
        const AffineMap* best = &info.holonomy.front();
        for (const AffineMap& h : info.holonomy) {
          if (norm(h.offset) > norm(best->offset)) best = &h;
        }
        const Vec2 v = best->offset;
        info.section_axis = std::abs(v.x) / r.box.width() >= std::abs(v.y) / r.box.height() ? Axis::x : Axis::y;
      }
      info.thickness = thickness_profile(r, est.labels, next, info.section_axis, bins);
      est.components.push_back(std::move(info));
      ++next;
    }
  }
  est.empty_warning = est.components.empty();
  return est;
}

namespace detail {

// Separating-axis test between a triangle and an axis-aligned box.
inline bool triangle_meets_box(const std::array<Vec2, 3>& t, double x0, double y0, double x1, double y1) {
  if (std::max({t[0].x, t[1].x, t[2].x}) < x0 || std::min({t[0].x, t[1].x, t[2].x}) > x1) return false;
  if (std::max({t[0].y, t[1].y, t[2].y}) < y0 || std::min({t[0].y, t[1].y, t[2].y}) > y1) return false;
  const std::array<Vec2, 4> box{Vec2{x0, y0}, Vec2{x1, y0}, Vec2{x1, y1}, Vec2{x0, y1}};
  for (int i = 0; i < 3; ++i) {
    const Vec2 e = t[(i + 1) % 3] - t[i];
    const Vec2 nrm{-e.y, e.x};
    double tmin = 1e300, tmax = -1e300, bmin = 1e300, bmax = -1e300;
    for (const Vec2& v : t) {
      tmin = std::min(tmin, dot(nrm, v));
      tmax = std::max(tmax, dot(nrm, v));
    }
    for (const Vec2& v : box) {
      bmin = std::min(bmin, dot(nrm, v));
      bmax = std::max(bmax, dot(nrm, v));
    }
    if (tmax < bmin || bmax < tmin) return false;
  }
  return true;
}

// Marks every in-range cell of r that the triangle meets.
inline void mark_triangle(const Region& r, std::vector<std::uint8_t>& mk, const std::array<Vec2, 3>& t) {
  const double dx = r.dx(), dy = r.dy();
  const double fx0 = (std::min({t[0].x, t[1].x, t[2].x}) - r.box.x_min) / dx;
  const double fx1 = (std::max({t[0].x, t[1].x, t[2].x}) - r.box.x_min) / dx;
  const double fy0 = (std::min({t[0].y, t[1].y, t[2].y}) - r.box.y_min) / dy;
  const double fy1 = (std::max({t[0].y, t[1].y, t[2].y}) - r.box.y_min) / dy;
  if (!(fx1 >= 0.0 && fy1 >= 0.0 && fx0 <= r.nx && fy0 <= r.ny)) return;
  const int ix0 = std::max(0, static_cast<int>(std::floor(fx0))), ix1 = std::min(r.nx - 1, static_cast<int>(std::floor(fx1)));
  const int iy0 = std::max(0, static_cast<int>(std::floor(fy0))), iy1 = std::min(r.ny - 1, static_cast<int>(std::floor(fy1)));
  const bool single = ix0 == ix1 || iy0 == iy1;
  for (int iy = iy0; iy <= iy1; ++iy) {
    for (int ix = ix0; ix <= ix1; ++ix) {
      const double x0 = r.box.x_min + ix * dx, y0 = r.box.y_min + iy * dy;
      if (single || triangle_meets_box(t, x0, y0, x0 + dx, y0 + dy)) mk[r.index(ix, iy)] = 1;
    }
  }
}

}  // namespace detail

struct IterateOptions {
  int samples_per_cell = 4;  // m = round(sqrt(s)) - 1 refinements per cell side; 4 gives the cell corners
  double max_stretch = 256.0;  // image pieces stretched by more than this in one period cover nothing
  int max_refine = 6;          // halvings of a sub-cell where its image bends away from the bilinear quad
  unsigned threads = 0;      // 0: worker_count()
  int bins = 64;
};

/// Estimate of the attracting set inside B0: A_0 = B0 and A_k is A_(k-1)
/// intersected with the cells covered by the one-period image of A_(k-1).
/// Each cell is split into m x m sub-cells whose corners are the subsamples;
/// the image of a sub-cell is the bilinear quad through its mapped corners.
/// Images that bend away from the bilinear quad are refined by halving; a
/// refined piece stretched by more than max_stretch in one period lies on a
/// repelling set and covers nothing. Each lattice point is mapped at most once.
inline AttractorEstimate iterate_region(const PoincareMap& P, const Region& B0, int n,
                                        const IterateOptions& opt = {}) {
  if (n < 1) throw Error(ErrorKind::input, "iterate_region needs n >= 1");
  if (B0.empty()) throw Error(ErrorKind::input, "initial region is empty");
  if (opt.samples_per_cell < 4) throw Error(ErrorKind::input, "samples_per_cell must be at least 4");
  Region cur = B0;
  std::vector<std::size_t> occ{cur.count()};
  if (P.field.identically_zero()) {
    AttractorEstimate est = label_components(cur, opt.bins);
    est.iterations = n;
    est.converged = true;
    est.occupancy = occ;
    return est;
  }

  const int m = std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(opt.samples_per_cell)))) - 1);
  const int lx = B0.nx * m + 1, ly = B0.ny * m + 1;
  const double hx = B0.dx() / m, hy = B0.dy() / m;
  const std::size_t npts = static_cast<std::size_t>(lx) * ly;
  std::vector<std::uint8_t> state(npts, 0);  // 0 unmapped, 1 mapped, 2 failed
  std::vector<Vec2> img(npts);
  std::vector<AffineMap> deck(npts);
  auto lat = [&](std::size_t id) {
    return Vec2{B0.box.x_min + static_cast<double>(id % lx) * hx, B0.box.y_min + static_cast<double>(id / lx) * hy};
  };

  const unsigned workers = opt.threads > 0 ? opt.threads : worker_count();
  struct FinePoint {
    Vec2 img;
    AffineMap deck;
    bool ok = false;
  };
  const std::int64_t fine = std::int64_t{1} << opt.max_refine;
  std::vector<std::unordered_map<std::int64_t, FinePoint>> caches(workers);
  std::vector<std::vector<std::uint8_t>> marks(workers, std::vector<std::uint8_t>(cur.cells.size()));
  std::vector<std::size_t> active;
  std::vector<std::size_t> todo;

  int done = 0;
  bool stable = false;
  for (int k = 0; k < n; ++k) {
    active.clear();
    for (std::size_t c = 0; c < cur.cells.size(); ++c) {
      if (cur.cells[c]) active.push_back(c);
    }
    todo.clear();
    for (std::size_t c : active) {
      const int ix = static_cast<int>(c % cur.nx), iy = static_cast<int>(c / cur.nx);
      for (int a = 0; a <= m; ++a) {
        for (int b = 0; b <= m; ++b) {
          const std::size_t id = static_cast<std::size_t>(iy * m + a) * lx + (ix * m + b);
          if (state[id] == 0) {
            state[id] = 3;
            todo.push_back(id);
          }
        }
      }
    }
    parallel_chunks(todo.size(), workers, [&](std::size_t b, std::size_t e, unsigned) {
      for (std::size_t i = b; i < e; ++i) {
        const std::size_t id = todo[i];
        try {
          const PoincareResult r = poincare_apply(P, lat(id));
          img[id] = r.point;
          deck[id] = r.deck;
          state[id] = 1;
        } catch (const Error&) {
          state[id] = 2;
        }
      }
    });

    for (auto& mk : marks) std::fill(mk.begin(), mk.end(), 0);
    parallel_chunks(active.size(), workers, [&](std::size_t b, std::size_t e, unsigned w) {
      std::vector<std::uint8_t>& mk = marks[w];
      auto& cache = caches[w];
      if (cache.size() > (std::size_t{1} << 21)) cache.clear();
      auto mark_tri = [&](const std::array<Vec2, 3>& t) {
        std::vector<AffineMap> maps{AffineMap::identity()};
        if (cur.domain) {
          for (const Vec2& v : t) {
            if (cur.box.contains(v)) continue;
            try {
              const AffineMap mp = reduce_to_domain(v, *cur.domain).map;
              bool seen = false;
              for (const AffineMap& o : maps) seen = seen || o.distance_to(mp) < 1e-12;
              if (!seen) maps.push_back(mp);
            } catch (const Error&) {
            }
          }
        }
        for (const AffineMap& mp : maps) detail::mark_triangle(cur, mk, {mp(t[0]), mp(t[1]), mp(t[2])});
      };
      // image of fine lattice point (I, J) lifted into the chart whose deck is ref
      auto image = [&](std::int64_t I, std::int64_t J, const AffineMap& ref) -> std::optional<Vec2> {
        if (I % fine == 0 && J % fine == 0) {
          const std::size_t id = static_cast<std::size_t>(J / fine) * lx + static_cast<std::size_t>(I / fine);
          if (state[id] != 1) return std::nullopt;
          return ref(deck[id].inverse()(img[id]));
        }
        const std::int64_t key = J * (fine * (lx - 1) + 1) + I;
        auto it = cache.find(key);
        if (it == cache.end()) {
          FinePoint fp;
          try {
            const PoincareResult r = poincare_apply(P, {B0.box.x_min + static_cast<double>(I) * hx / fine,
                                                        B0.box.y_min + static_cast<double>(J) * hy / fine});
            fp.img = r.point;
            fp.deck = r.deck;
            fp.ok = true;
          } catch (const Error&) {
            fp.ok = false;
          }
          it = cache.emplace(key, fp).first;
        }
        if (!it->second.ok) return std::nullopt;
        return ref(it->second.deck.inverse()(it->second.img));
      };
      auto cells_apart = [&](Vec2 p, Vec2 q) {
        return std::max(std::abs(p.x - q.x) / cur.dx(), std::abs(p.y - q.y) / cur.dy());
      };
      // covers the image of the fine square with corner (I, J) and side sz
      auto cover = [&](auto&& self, std::int64_t I, std::int64_t J, std::int64_t sz, const std::array<Vec2, 4>& v,
                       const AffineMap& ref) -> void {
        const auto c = image(I + sz / 2, J + sz / 2, ref);
        if (!c) return;
        const Vec2 mean = 0.25 * (v[0] + v[1] + v[2] + v[3]);
        if (sz >= 2 && cells_apart(*c, mean) > 0.25) {
          const std::int64_t h = sz / 2;
          const auto e0 = image(I + h, J, ref), e1 = image(I + sz, J + h, ref);
          const auto e2 = image(I + h, J + sz, ref), e3 = image(I, J + h, ref);
          if (e0 && e1 && e2 && e3) {
            self(self, I, J, h, {v[0], *e0, *c, *e3}, ref);
            self(self, I + h, J, h, {*e0, v[1], *e1, *c}, ref);
            self(self, I + h, J + h, h, {*c, *e1, v[2], *e2}, ref);
            self(self, I, J + h, h, {*e3, *c, *e2, v[3]}, ref);
            return;
          }
        }
        const double ex = static_cast<double>(sz) / fine * hx, ey = static_cast<double>(sz) / fine * hy;
        const double stretch = std::max({distance(v[0], v[1]) / ex, distance(v[3], v[2]) / ex,
                                         distance(v[0], v[3]) / ey, distance(v[1], v[2]) / ey});
        if (!(stretch <= opt.max_stretch)) return;
        for (int j = 0; j < 4; ++j) mark_tri({v[j], v[(j + 1) % 4], *c});
      };
      for (std::size_t ai = b; ai < e; ++ai) {
        const std::size_t c = active[ai];
        const int ix = static_cast<int>(c % cur.nx), iy = static_cast<int>(c / cur.nx);
        for (int a = 0; a < m; ++a) {
          for (int bb = 0; bb < m; ++bb) {
            const std::size_t i0 = static_cast<std::size_t>(iy * m + a) * lx + (ix * m + bb);
            const std::array<std::size_t, 4> qd{i0, i0 + 1, i0 + 1 + lx, i0 + lx};
            bool ok = true;
            for (std::size_t id : qd) ok = ok && state[id] == 1;
            if (!ok) continue;
            // corners in the chart of the first corner's image
            const AffineMap& ref = deck[qd[0]];
            std::array<Vec2, 4> v;
            for (int j = 0; j < 4; ++j) v[j] = ref(deck[qd[j]].inverse()(img[qd[j]]));
            const std::int64_t I = static_cast<std::int64_t>(ix * m + bb) * fine, J = static_cast<std::int64_t>(iy * m + a) * fine;
            cover(cover, I, J, fine, v, ref);
          }
        }
      }
    });
    std::size_t changed = 0;
    for (std::size_t c : active) {
      bool hit = false;
      for (const auto& mk : marks) hit = hit || mk[c];
      if (!hit) {
        cur.cells[c] = 0;
        ++changed;
      }
    }
    occ.push_back(cur.count());
    done = k + 1;
    if (changed == 0) {
      stable = true;
      break;
    }
  }
  AttractorEstimate est = label_components(cur, opt.bins);
  est.iterations = done;
  est.converged = stable;
  est.empty_warning = cur.empty();
  est.occupancy = std::move(occ);
  return est;
}

inline int components(const AttractorEstimate& est) { return static_cast<int>(est.components.size()); }

inline bool attractor_count_check(int count, int p) {
  if (p < 1) throw Error(ErrorKind::input, "genus must be at least 1");
  return count <= 2 * p - 1;
}

enum class CircleVerdict { circle_like, band_like };

inline const char* to_string(CircleVerdict v) {
  return v == CircleVerdict::circle_like ? "circle-like" : "band-like";
}

struct CircleTest {
  CircleVerdict verdict = CircleVerdict::circle_like;
  int max_extent = 0;
  Axis axis = Axis::x;
  std::vector<int> profile;
};

/// Fiber-thickness test along the component's winding direction.
inline CircleTest circle_test(const AttractorEstimate& est, int component, int tol_cells = 3, int bins = 64) {
  if (component < 0 || component >= components(est)) {
    throw Error(ErrorKind::input, "component index out of range");
  }
  const ComponentInfo& info = est.components[component];
  if (!info.wraps()) throw Error(ErrorKind::no_winding, "component does not wind around a handle");
  CircleTest out;
  out.axis = info.section_axis;
  out.profile = bins == static_cast<int>(info.thickness.size())
                    ? info.thickness
                    : thickness_profile(est.region, est.labels, info.label, info.section_axis, bins);
  out.max_extent = *std::max_element(out.profile.begin(), out.profile.end());
  out.verdict = out.max_extent <= tol_cells ? CircleVerdict::circle_like : CircleVerdict::band_like;
  return out;
}

// ---------------------------------------------------------------------------
// Equilibria and indices

struct EquilibriumInfo {
  Vec2 location;
  int index = 0;
  std::string type;  // sink, source, saddle, center, degenerate, cusp
  std::complex<double> eig1, eig2;
  bool has_eigenvalues = false;
};

namespace detail {

inline double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  a = std::fmod(a + pi, 2 * pi);
  if (a < 0) a += 2 * pi;
  return a - pi;
}

inline double field_angle(const VectorField& w, Vec2 q, double t, double& min_mag) {
  const Vec2 v = w(q, t);
  const double m = norm(v);
  if (!std::isfinite(m)) throw Error(ErrorKind::evaluation, "non-finite field value on index circle");
  min_mag = std::min(min_mag, m);
  return std::atan2(v.y, v.x);
}

inline int round_winding(double turns) {
  const double r = std::round(turns);
  if (std::abs(turns - r) > 0.05) {
    throw Error(ErrorKind::non_integer_winding, "winding " + format_double(turns) + " is not near an integer");
  }
  return static_cast<int>(r);
}

}  // namespace detail

/// Winding number of the field direction around a circle of the given radius.
inline int index_of(const VectorField& w, Vec2 q, double radius, int n_samples = 360, double t = 0.0) {
  if (n_samples < 8 || !(radius > 0.0)) throw Error(ErrorKind::input, "index_of needs radius > 0 and >= 8 samples");
  constexpr double two_pi = 2 * std::numbers::pi;
  double min_mag = std::numeric_limits<double>::infinity();
  double prev = detail::field_angle(w, q + Vec2{radius, 0.0}, t, min_mag);
  const double first = prev;
  double total = 0.0;
  for (int k = 1; k <= n_samples; ++k) {
    const double th = two_pi * k / n_samples;
    const double a = k == n_samples ? first
                                    : detail::field_angle(w, q + radius * Vec2{std::cos(th), std::sin(th)}, t, min_mag);
    total += detail::wrap_angle(a - prev);
    prev = a;
  }
  if (min_mag <= 1e-9) throw Error(ErrorKind::equilibrium_on_circle, "field vanishes on the index circle");
  return detail::round_winding(total / two_pi);
}

/// Cone points of the domain: classes of segment endpoints under the
/// transitions, each with its total angle.
struct ConePoint {
  std::vector<Vec2> copies;
  double angle = 0.0;
};

inline std::vector<ConePoint> cone_points(const RectDomain& dom) {
  const int n = dom.segment_count();
  // Vertex copy k is start(k); end(k) is start(k+1) around the boundary.
  std::vector<int> parent(n);
  for (int i = 0; i < n; ++i) parent[i] = i;
  auto find = [&](int i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  auto start_of = [&](int seg) { return seg - 1; };
  auto end_of = [&](int seg) { return seg % n; };
  for (int s = 1; s <= n; ++s) {
    const int t = dom.partner(s);
    parent[find(start_of(s))] = find(end_of(t));
    parent[find(end_of(s))] = find(start_of(t));
  }
  std::vector<ConePoint> out;
  std::vector<int> rep;
  for (int k = 0; k < n; ++k) {
    const int root = find(k);
    auto it = std::find(rep.begin(), rep.end(), root);
    std::size_t idx;
    if (it == rep.end()) {
      rep.push_back(root);
      out.emplace_back();
      idx = out.size() - 1;
    } else {
      idx = static_cast<std::size_t>(it - rep.begin());
    }
    // Interior angle at start(k+1) between the incoming and outgoing segments.
    const Segment& out_seg = dom.segment(k + 1);
    const Segment& in_seg = dom.segment(k == 0 ? n : k);
    const Vec2 a = out_seg.direction(), b = -in_seg.direction();
    double ang = std::atan2(cross(a, b), dot(a, b));
    if (ang <= 0) ang += 2 * std::numbers::pi;
    out[idx].copies.push_back(out_seg.start);
    out[idx].angle += ang;
  }
  return out;
}

/// Index of a cone point: walk small arcs around each copy inside the
/// rectangle, crossing to the partner segment at the end of each arc.
/// index = 1 + (turning of the field + transition mismatch - cone angle) / 2pi.
inline int cone_index(const VectorField& w, const RectDomain& dom, Vec2 vertex, double radius,
                      int samples_per_turn = 360, double t = 0.0) {
  const int n = dom.segment_count();
  int seg_out = 0;
  for (int s = 1; s <= n; ++s) {
    if (distance(dom.segment(s).start, vertex) < 1e-12) seg_out = s;
  }
  if (seg_out == 0) throw Error(ErrorKind::input, "point is not a segment endpoint");
  const int first_out = seg_out;
  double min_mag = std::numeric_limits<double>::infinity();
  double turning = 0.0, cone = 0.0;
  for (int guard = 0; guard < 4 * n + 4; ++guard) {
    const Segment& so = dom.segment(seg_out);
    const int seg_in = seg_out == 1 ? n : seg_out - 1;
    const Segment& si = dom.segment(seg_in);
    const Vec2 v = so.start;
    const Vec2 a = so.direction(), b = -si.direction();
    double beta = std::atan2(cross(a, b), dot(a, b));
    if (beta <= 0) beta += 2 * std::numbers::pi;
    const double th0 = std::atan2(a.y, a.x);
    const int m = std::max(8, static_cast<int>(std::ceil(samples_per_turn * beta / (2 * std::numbers::pi))));
    double prev = detail::field_angle(w, v + radius * Vec2{std::cos(th0), std::sin(th0)}, t, min_mag);
    for (int k = 1; k <= m; ++k) {
      const double th = th0 + beta * k / m;
      const double ang = detail::field_angle(w, v + radius * Vec2{std::cos(th), std::sin(th)}, t, min_mag);
      turning += detail::wrap_angle(ang - prev);
      prev = ang;
    }
    cone += beta;
    // Cross through the incoming segment to its partner.
    const Vec2 p = v + radius * (b * (1.0 / norm(b)));
    const AffineMap& tr = dom.transition(seg_in);
    const double rot = std::atan2(tr.linear.c, tr.linear.a);
    const double after = detail::field_angle(w, tr(p), t, min_mag);
    turning += detail::wrap_angle(after - prev - rot);
    const Vec2 next_vertex = tr(v);
    seg_out = 0;
    for (int s = 1; s <= n; ++s) {
      if (distance(dom.segment(s).start, next_vertex) < 1e-9) seg_out = s;
    }
    if (seg_out == 0) throw Error(ErrorKind::input, "transition does not map vertices to vertices");
    if (seg_out == first_out) {
      if (min_mag <= 1e-9) throw Error(ErrorKind::equilibrium_on_circle, "field vanishes on the cone walk");
      return detail::round_winding(1.0 + (turning - cone) / (2 * std::numbers::pi));
    }
  }
  throw Error(ErrorKind::input, "cone walk did not close");
}

struct EquilibriaOptions {
  double t = 0.0;
  double newton_tol = 1e-10;
  int newton_max_iter = 50;
  double dedupe = 1e-6;
  int index_samples = 360;
};

namespace detail {

inline std::string local_type(const Mat2& J, std::complex<double>& l1, std::complex<double>& l2) {
  const Multipliers mu = multipliers(J);
  l1 = mu.first;
  l2 = mu.second;
  const double det = J.det(), tr = J.trace();
  const double scale = std::max(1e-300, J.max_abs() * J.max_abs());
  if (std::abs(det) < 1e-12 * scale) return "degenerate";
  if (det < 0) return "saddle";
  if (std::abs(tr) < 1e-12 * std::sqrt(scale)) return "center";
  return tr < 0 ? "sink" : "source";
}

}  // namespace detail

/// Grid scan for sign changes of both components, Newton refinement,
/// deduplication (also across identified segments) and index computation.
/// For domains whose cusps are equilibria, cells near cusps are skipped and
/// one entry per cone point is appended with its cone index.
inline std::vector<EquilibriumInfo> equilibria(const VectorField& w, const RectDomain* dom, const Box& box, int nx,
                                               int ny, const EquilibriaOptions& opt = {},
                                               std::vector<std::string>* failures = nullptr) {
  if (nx < 2 || ny < 2) throw Error(ErrorKind::input, "equilibrium grid must be at least 2x2");
  if (w.identically_zero()) throw Error(ErrorKind::input, "field vanishes identically");
  const double t = opt.t;
  const double dx = box.width() / nx, dy = box.height() / ny;
  const double cell = std::min(dx, dy);
  std::vector<Vec2> vals(static_cast<std::size_t>(nx + 1) * (ny + 1));
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) vals[static_cast<std::size_t>(j) * (nx + 1) + i] = w(box.x_min + i * dx, box.y_min + j * dy, t);
  }
  const bool cusp_eq = dom != nullptr && dom->cusps_are_equilibria();
  const double cusp_excl = std::max(2.0 * w.cusp_epsilon, 2.0 * std::hypot(dx, dy));

  std::vector<Vec2> found;
  auto duplicate = [&](Vec2 q) {
    std::vector<Vec2> images{q};
    if (dom != nullptr) {
      for (int s = 1; s <= dom->segment_count(); ++s) {
        const Segment& sg = dom->segment(s);
        const Vec2 d = sg.direction();
        const double u = std::clamp(dot(q - sg.start, d) / dot(d, d), 0.0, 1.0);
        if (distance(sg.start + u * d, q) < opt.dedupe) images.push_back(dom->transition(s)(q));
      }
    }
    for (const Vec2& f : found) {
      for (const Vec2& im : images) {
        if (distance(f, im) < opt.dedupe) return true;
      }
    }
    return false;
  };

  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      double minx = INFINITY, maxx = -INFINITY, miny = INFINITY, maxy = -INFINITY;
      for (int c = 0; c < 4; ++c) {
        const Vec2 v = vals[static_cast<std::size_t>(j + (c >> 1)) * (nx + 1) + i + (c & 1)];
        minx = std::min(minx, v.x); maxx = std::max(maxx, v.x);
        miny = std::min(miny, v.y); maxy = std::max(maxy, v.y);
      }
      if (!(minx <= 0 && maxx >= 0 && miny <= 0 && maxy >= 0)) continue;
      const Vec2 c0{box.x_min + (i + 0.5) * dx, box.y_min + (j + 0.5) * dy};
      if (cusp_eq && dom->cusp_distance(c0) < cusp_excl) continue;
      Vec2 q = c0;
      bool ok = false;
      for (int it = 0; it < opt.newton_max_iter; ++it) {
        const Vec2 f = w(q, t);
        if (norm(f) < opt.newton_tol) {
          ok = true;
          break;
        }
        const Mat2 J = w.jacobian(q, t);
        if (std::abs(J.det()) < 1e-300) break;
        Vec2 step = -(J.inverse() * f);
        const double sl = norm(step);
        if (sl > 2.0 * cell) step = step * (2.0 * cell / sl);
        q += step;
      }
      if (ok && norm(w(q, t)) >= opt.newton_tol) ok = false;
      if (!ok) {
        if (failures != nullptr) {
          failures->push_back("Newton failed from cell (" + std::to_string(i) + ", " + std::to_string(j) + ")");
        }
        continue;
      }
      if (std::abs(q.x - c0.x) > 1.5 * dx || std::abs(q.y - c0.y) > 1.5 * dy) continue;
      if (dom != nullptr) {
        if (!dom->contains(q)) {
          if (!dom->contains(q, 1e-9)) {
            try {
              q = reduce_to_domain(q, *dom).point;
            } catch (const Error&) {
              continue;
            }
          } else {
            q = dom->bounds().clamp(q);
          }
        }
        if (cusp_eq && dom->cusp_distance(q) < cusp_excl) continue;
      } else if (!box.contains(q)) {
        continue;
      }
      if (!duplicate(q)) found.push_back(q);
    }
  }
  std::sort(found.begin(), found.end(), [](Vec2 a, Vec2 b) { return a.x != b.x ? a.x < b.x : a.y < b.y; });

  std::vector<EquilibriumInfo> out;
  for (const Vec2& q : found) {
    EquilibriumInfo e;
    e.location = q;
    double nearest = std::numeric_limits<double>::infinity();
    for (const Vec2& o : found) {
      if (&o != &q) nearest = std::min(nearest, distance(o, q));
    }
    double radius = std::min(0.5 * cell, 0.25 * nearest);
    for (int attempt = 0;; ++attempt) {
      try {
        e.index = index_of(w, q, radius, opt.index_samples, t);
        break;
      } catch (const Error&) {
        if (attempt >= 6) throw;
        radius *= 0.5;
      }
    }
    e.type = detail::local_type(w.jacobian(q, t), e.eig1, e.eig2);
    e.has_eigenvalues = true;
    out.push_back(e);
  }
  if (cusp_eq) {
    const double radius = std::min(0.1, 0.1 * dom->min_segment_length());
    for (const ConePoint& cp : cone_points(*dom)) {
      EquilibriumInfo e;
      e.location = cp.copies.front();
      e.index = cone_index(w, *dom, cp.copies.front(), radius, opt.index_samples, t);
      e.type = "cusp";
      out.push_back(e);
    }
  }
  return out;
}

inline std::vector<EquilibriumInfo> equilibria(const VectorField& w, const RectDomain& dom, int nx, int ny,
                                               const EquilibriaOptions& opt = {},
                                               std::vector<std::string>* failures = nullptr) {
  return equilibria(w, &dom, dom.bounds(), nx, ny, opt, failures);
}

inline int index_sum(const std::vector<EquilibriumInfo>& eqs) {
  int s = 0;
  for (const auto& e : eqs) s += e.index;
  return s;
}

inline bool euler_check(const std::vector<EquilibriumInfo>& eqs, int p) { return index_sum(eqs) == 2 - 2 * p; }

// ---------------------------------------------------------------------------
// Trapping boundaries

struct Polyline {
  std::vector<Vec2> points;
  bool closed = true;
  int inward = +1;  // +1: inside is to the left of the direction of travel
};

struct DissipativityResult {
  bool pass = false;
  double margin = 0.0;  // minimum of field . inward unit normal
  Vec2 worst_point;
  double worst_time = 0.0;
};

/// Samples `n_samples` points equally spaced in arc length along each
/// polyline and checks field . inward normal > 0 at every listed time.
inline DissipativityResult dissipativity_check(const VectorField& w, const std::vector<Polyline>& boundary,
                                               int n_samples, const std::vector<double>& times = {0.0}) {
  if (n_samples < 1) throw Error(ErrorKind::input, "need at least one sample");
  DissipativityResult res;
  res.margin = std::numeric_limits<double>::infinity();
  for (const Polyline& pl : boundary) {
    const std::size_t nv = pl.points.size();
    if (nv < 2) throw Error(ErrorKind::input, "polyline needs at least two points");
    const std::size_t ne = pl.closed ? nv : nv - 1;
    std::vector<double> cum{0.0};
    for (std::size_t e = 0; e < ne; ++e) cum.push_back(cum.back() + distance(pl.points[e], pl.points[(e + 1) % nv]));
    const double total = cum.back();
    if (!(total > 0.0)) throw Error(ErrorKind::input, "degenerate polyline");
    std::size_t e = 0;
    for (int k = 0; k < n_samples; ++k) {
      const double s = total * (k + 0.5) / n_samples;
      while (e + 1 < ne && cum[e + 1] < s) ++e;
      const Vec2 a = pl.points[e], b = pl.points[(e + 1) % nv];
      const double len = cum[e + 1] - cum[e];
      const Vec2 q = a + ((s - cum[e]) / len) * (b - a);
      const Vec2 dir = (b - a) * (1.0 / len);
      const Vec2 normal = static_cast<double>(pl.inward) * Vec2{-dir.y, dir.x};
      for (double t : times) {
        const double d = dot(w.checked(q, t), normal);
        if (d < res.margin) {
          res.margin = d;
          res.worst_point = q;
          res.worst_time = t;
        }
      }
    }
  }
  res.pass = res.margin > 0.0;
  return res;
}

}  // namespace genusflow
