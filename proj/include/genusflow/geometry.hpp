#pragma once

// Plane and upper-half-plane primitives, side-pairing transitions and the
// rectangular fundamental region of a genus-p surface.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "genusflow/error.hpp"

namespace genusflow {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(Vec2, Vec2) = default;
  Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

/// Point of the upper half-plane z = x + iy when used in hyperbolic context.
using HPoint = Vec2;

/// Row-major 2x2 matrix [[a, b], [c, d]].
struct Mat2 {
  double a = 1.0, b = 0.0, c = 0.0, d = 1.0;

  static constexpr Mat2 identity() { return {}; }
  static Mat2 rotation(double angle) {
    const double cs = std::cos(angle), sn = std::sin(angle);
    return {cs, -sn, sn, cs};
  }

  constexpr double det() const { return a * d - b * c; }
  constexpr double trace() const { return a + d; }

  friend constexpr Vec2 operator*(const Mat2& m, Vec2 v) {
    return {m.a * v.x + m.b * v.y, m.c * v.x + m.d * v.y};
  }
  friend constexpr Mat2 operator*(const Mat2& m, const Mat2& n) {
    return {m.a * n.a + m.b * n.c, m.a * n.b + m.b * n.d,
            m.c * n.a + m.d * n.c, m.c * n.b + m.d * n.d};
  }
  friend constexpr Mat2 operator-(const Mat2& m, const Mat2& n) {
    return {m.a - n.a, m.b - n.b, m.c - n.c, m.d - n.d};
  }
  friend constexpr bool operator==(const Mat2&, const Mat2&) = default;

  Mat2 inverse() const {
    const double dt = det();
    if (dt == 0.0) throw Error(ErrorKind::singular_jacobian, "singular 2x2 matrix");
    return {d / dt, -b / dt, -c / dt, a / dt};
  }

  double max_abs() const {
    return std::max({std::abs(a), std::abs(b), std::abs(c), std::abs(d)});
  }
};

/// Velocity attached to a base point.
struct TangentVector {
  HPoint base;
  double vx = 0.0;
  double vy = 0.0;

  Vec2 velocity() const { return {vx, vy}; }
};

/// z -> (az + b)/(cz + d) with real coefficients, kept at determinant one.
class MoebiusMap {
 public:
  MoebiusMap() = default;

  /// Normalizes to ad - bc = 1 with a > 0, or a == 0 and c > 0.
  MoebiusMap(double a, double b, double c, double d) {
    const double dt = a * d - b * c;
    if (!(dt > 0.0) || !std::isfinite(dt)) {
      throw Error(ErrorKind::domain, "Moebius coefficients must have positive determinant");
    }
    const double s = 1.0 / std::sqrt(dt);
    a_ = a * s; b_ = b * s; c_ = c * s; d_ = d * s;
    if (a_ < 0.0 || (a_ == 0.0 && c_ < 0.0)) {
      a_ = -a_; b_ = -b_; c_ = -c_; d_ = -d_;
    }
  }

  static MoebiusMap identity() { return {}; }

  double a() const { return a_; }
  double b() const { return b_; }
  double c() const { return c_; }
  double d() const { return d_; }
  double det() const { return a_ * d_ - b_ * c_; }

  HPoint apply(HPoint z) const {
    const std::complex<double> w(z.x, z.y);
    const auto den = c_ * w + d_;
    if (std::abs(den) < 1e-14) throw Error(ErrorKind::pole, "Moebius map evaluated at its pole");
    const auto r = (a_ * w + b_) / den;
    return {r.real(), r.imag()};
  }

  /// Image of a tangent vector: multiplies vx + i vy by 1/(cz + d)^2.
  TangentVector pushforward(HPoint z, Vec2 v) const {
    const std::complex<double> w(z.x, z.y);
    const auto den = c_ * w + d_;
    if (std::abs(den) < 1e-14) throw Error(ErrorKind::pole, "Moebius map evaluated at its pole");
    const auto r = std::complex<double>(v.x, v.y) / (den * den);
    return {apply(z), r.real(), r.imag()};
  }

  MoebiusMap inverse() const { return {d_, -b_, -c_, a_}; }

  /// (S∘T)(z) = S(T(z)).
  friend MoebiusMap compose(const MoebiusMap& s, const MoebiusMap& t) {
    return {s.a_ * t.a_ + s.b_ * t.c_, s.a_ * t.b_ + s.b_ * t.d_,
            s.c_ * t.a_ + s.d_ * t.c_, s.c_ * t.b_ + s.d_ * t.d_};
  }

 private:
  double a_ = 1.0, b_ = 0.0, c_ = 0.0, d_ = 1.0;
};

inline HPoint mobius_apply(const MoebiusMap& t, HPoint z) { return t.apply(z); }
inline TangentVector mobius_pushforward(const MoebiusMap& t, HPoint z, const TangentVector& v) {
  return t.pushforward(z, v.velocity());
}
inline MoebiusMap mobius_compose(const MoebiusMap& s, const MoebiusMap& t) { return compose(s, t); }
inline MoebiusMap mobius_inverse(const MoebiusMap& t) { return t.inverse(); }

/// q -> L q + offset. Used for the segment transitions of a RectDomain.
struct AffineMap {
  Mat2 linear;
  Vec2 offset;

  static AffineMap identity() { return {}; }
  static AffineMap translation(Vec2 v) { return {Mat2::identity(), v}; }

  Vec2 operator()(Vec2 q) const { return linear * q + offset; }
  Vec2 push(Vec2 v) const { return linear * v; }

  AffineMap inverse() const {
    const Mat2 inv = linear.inverse();
    return {inv, -(inv * offset)};
  }

  /// (f∘g)(q) = f(g(q)).
  friend AffineMap compose(const AffineMap& f, const AffineMap& g) {
    return {f.linear * g.linear, f.linear * g.offset + f.offset};
  }

  double distance_to(const AffineMap& o) const {
    return std::max((linear - o.linear).max_abs(),
                    std::max(std::abs(offset.x - o.offset.x), std::abs(offset.y - o.offset.y)));
  }
};

/// Polar chart of the fundamental region onto the rectangle [0, pi] x R.
/// alpha == 0 is accepted and makes the angular part the identity.
inline Vec2 chart_to_rectangle(double r, double theta, double alpha) {
  constexpr double pi = std::numbers::pi;
  if (!(alpha >= 0.0 && alpha < pi / 2)) {
    throw Error(ErrorKind::domain, "chart angle alpha must lie in [0, pi/2)");
  }
  if (!(r > 0.0)) throw Error(ErrorKind::domain, "chart radius must be positive");
  const double lo = alpha, hi = pi - alpha;
  if (!(theta >= lo && theta <= hi)) {
    throw Error(ErrorKind::domain, "theta outside [alpha, pi - alpha]");
  }
  if (theta == lo) return {0.0, r};
  if (theta == hi) return {pi, r};
  return {std::clamp(pi / (pi - 2.0 * alpha) * (theta - alpha), 0.0, pi), r};
}

struct Box {
  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  bool contains(Vec2 q, double tol = 0.0) const {
    return q.x >= x_min - tol && q.x <= x_max + tol && q.y >= y_min - tol && q.y <= y_max + tol;
  }
  /// Positive inside, zero on the boundary, negative outside.
  double signed_distance(Vec2 q) const {
    return std::min({q.x - x_min, x_max - q.x, q.y - y_min, y_max - q.y});
  }
  Vec2 clamp(Vec2 q) const {
    return {std::clamp(q.x, x_min, x_max), std::clamp(q.y, y_min, y_max)};
  }
};

/// Boundary piece traversed counter-clockwise from `start` to `end`.
struct Segment {
  Vec2 start;
  Vec2 end;

  Vec2 direction() const { return end - start; }
  double length() const { return norm(end - start); }
  /// Outward normal for a counter-clockwise boundary.
  Vec2 outward_normal() const {
    const Vec2 d = direction();
    const double l = norm(d);
    return {d.y / l, -d.x / l};
  }
};

/// A deck word: letter +i applies the transition of segment i, -i its inverse.
using Word = std::vector<int>;

/// The modified fundamental region: a rectangle whose boundary is cut into
/// 4p segments paired by an involution. Segment ids are 1-based.
class RectDomain {
 public:
  RectDomain(int genus, Box bounds, std::vector<Segment> segments, std::vector<int> pairing,
             std::vector<AffineMap> transitions, bool cusps_are_equilibria)
      : genus_(genus),
        bounds_(bounds),
        segments_(std::move(segments)),
        pairing_(std::move(pairing)),
        transitions_(std::move(transitions)),
        cusps_are_equilibria_(cusps_are_equilibria) {
    const std::size_t n = segments_.size();
    if (pairing_.size() != n || transitions_.size() != n) {
      throw Error(ErrorKind::input, "segment, pairing and transition counts differ");
    }
    min_segment_length_ = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      const int j = pairing_[i];
      if (j < 1 || j > static_cast<int>(n) || j == static_cast<int>(i) + 1 ||
          pairing_[j - 1] != static_cast<int>(i) + 1) {
        throw Error(ErrorKind::input, "segment pairing is not a fixed-point-free involution");
      }
      cusps_.push_back(segments_[i].start);
      min_segment_length_ = std::min(min_segment_length_, segments_[i].length());
    }
  }

  int genus() const { return genus_; }
  const Box& bounds() const { return bounds_; }
  double width() const { return bounds_.width(); }
  std::pair<double, double> height_range() const { return {bounds_.y_min, bounds_.y_max}; }
  int segment_count() const { return static_cast<int>(segments_.size()); }
  const Segment& segment(int id) const { return segments_.at(check(id) - 1); }
  int partner(int id) const { return pairing_.at(check(id) - 1); }
  const AffineMap& transition(int id) const { return transitions_.at(check(id) - 1); }
  const std::vector<Vec2>& cusps() const { return cusps_; }
  bool cusps_are_equilibria() const { return cusps_are_equilibria_; }
  double min_segment_length() const { return min_segment_length_; }

  bool contains(Vec2 q, double tol = 0.0) const { return bounds_.contains(q, tol); }
  double signed_distance(Vec2 q) const { return bounds_.signed_distance(q); }

  /// Map for a single letter: +i -> T_i, -i -> T_i^{-1} = T_{sigma(i)}.
  const AffineMap& letter_map(int letter) const {
    return letter > 0 ? transition(letter) : transition(partner(-letter));
  }

  /// Composite T_{w_n} ∘ ... ∘ T_{w_1}.
  AffineMap word_map(const Word& word) const {
    AffineMap m = AffineMap::identity();
    for (int letter : word) m = compose(letter_map(letter), m);
    return m;
  }

  /// Segment containing a boundary point (closest segment for points
  /// off the boundary). Ties at shared endpoints go to the lower id.
  int segment_at(Vec2 q) const {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      const Segment& s = segments_[i];
      const Vec2 d = s.direction();
      const double t = std::clamp(dot(q - s.start, d) / dot(d, d), 0.0, 1.0);
      const double dist = distance(s.start + t * d, q);
      if (dist < best_d) {
        best_d = dist;
        best = static_cast<int>(i) + 1;
      }
    }
    return best;
  }

  /// Segment a point outside the rectangle has left through: the edge with
  /// the largest violation, then the segment under the projection.
  int exit_segment(Vec2 q) const {
    const double vx_lo = bounds_.x_min - q.x, vx_hi = q.x - bounds_.x_max;
    const double vy_lo = bounds_.y_min - q.y, vy_hi = q.y - bounds_.y_max;
    const double worst = std::max({vx_lo, vx_hi, vy_lo, vy_hi});
    Vec2 p = bounds_.clamp(q);
    if (worst == vx_lo) p.x = bounds_.x_min;
    else if (worst == vx_hi) p.x = bounds_.x_max;
    else if (worst == vy_lo) p.y = bounds_.y_min;
    else p.y = bounds_.y_max;
    // Keep the projection off the corners so the edge choice is respected.
    const double inset = 1e-12 * std::max(1.0, std::max(width(), bounds_.height()));
    if (worst == vx_lo || worst == vx_hi) {
      p.y = std::clamp(p.y, bounds_.y_min + inset, bounds_.y_max - inset);
    } else {
      p.x = std::clamp(p.x, bounds_.x_min + inset, bounds_.x_max - inset);
    }
    return segment_at(p);
  }

  /// Distance from q to the nearest cusp marker.
  double cusp_distance(Vec2 q) const {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec2& m : cusps_) best = std::min(best, distance(q, m));
    return best;
  }

 private:
  int check(int id) const {
    if (id < 1 || id > segment_count()) {
      throw Error(ErrorKind::input, "segment id " + std::to_string(id) + " out of range");
    }
    return id;
  }

  int genus_;
  Box bounds_;
  std::vector<Segment> segments_;
  std::vector<int> pairing_;
  std::vector<AffineMap> transitions_;
  std::vector<Vec2> cusps_;
  bool cusps_are_equilibria_;
  double min_segment_length_ = 0.0;
};

namespace detail {

// Rotation-similarity carrying direction u onto direction v.
inline Mat2 similarity_between(Vec2 u, Vec2 v) {
  const double uu = dot(u, u);
  const double cs = dot(u, v) / uu, sn = cross(u, v) / uu;
  return {cs, -sn, sn, cs};
}

// Transition that glues segment `from` onto `to` reversing orientation:
// start(from) -> end(to), end(from) -> start(to).
inline AffineMap gluing(const Segment& from, const Segment& to) {
  const Mat2 lin = similarity_between(from.direction(), -to.direction());
  return {lin, to.end - lin * from.start};
}

}  // namespace detail

/// Flat torus [0, width] x [y_min, y_max]. Segments, counter-clockwise from
/// the top-left corner: 1 left, 2 bottom, 3 right, 4 top. Leaving through the
/// right edge shifts by (-width, -shear); shear != 0 gives the lattice of a
/// field periodic under (x, y) -> (x + width, y + shear).
inline RectDomain torus_domain(double width = 1.0, double y_min = 0.0, double y_max = 1.0,
                               double shear = 0.0) {
  if (!(width > 0.0) || !(y_max > y_min)) {
    throw Error(ErrorKind::input, "torus domain needs positive width and height");
  }
  const Box b{0.0, width, y_min, y_max};
  const double h = y_max - y_min;
  std::vector<Segment> segs = {
      {{0.0, y_max}, {0.0, y_min}},
      {{0.0, y_min}, {width, y_min}},
      {{width, y_min}, {width, y_max}},
      {{width, y_max}, {0.0, y_max}},
  };
  std::vector<AffineMap> tr = {
      AffineMap::translation({width, shear}),
      AffineMap::translation({0.0, h}),
      AffineMap::translation({-width, -shear}),
      AffineMap::translation({0.0, -h}),
  };
  return RectDomain(1, b, std::move(segs), {3, 4, 1, 2}, std::move(tr), false);
}

/// Fundamental rectangle for genus p. p == 1 is the unit-square torus. For
/// p >= 2 the region is the square [0, pi] x [r_min, r_min + pi]; each edge
/// carries p equal segments, numbered counter-clockwise from the top-left
/// corner, and consecutive blocks of four spell a b a^-1 b^-1. Transitions
/// are quarter-turn isometries gluing each segment to its partner with
/// reversed orientation.
inline RectDomain standard_domain(int p, double r_min = std::numbers::pi) {
  if (p < 1) throw Error(ErrorKind::input, "genus must be at least 1");
  if (p == 1) return torus_domain();
  constexpr double pi = std::numbers::pi;
  const Box b{0.0, pi, r_min, r_min + pi};
  const Vec2 corners[4] = {{0.0, b.y_max}, {0.0, b.y_min}, {pi, b.y_min}, {pi, b.y_max}};
  std::vector<Segment> segs;
  for (int e = 0; e < 4; ++e) {
    const Vec2 a = corners[e], c = corners[(e + 1) % 4];
    for (int k = 0; k < p; ++k) {
      const Vec2 s = k == 0 ? a : a + (static_cast<double>(k) / p) * (c - a);
      const Vec2 t = k + 1 == p ? c : a + (static_cast<double>(k + 1) / p) * (c - a);
      segs.push_back({s, t});
    }
  }
  const int n = 4 * p;
  std::vector<int> pairing(n);
  for (int blk = 0; blk < p; ++blk) {
    const int base = 4 * blk + 1;
    pairing[base - 1] = base + 2;
    pairing[base + 1] = base;
    pairing[base] = base + 3;
    pairing[base + 2] = base + 1;
  }
  std::vector<AffineMap> tr;
  for (int i = 0; i < n; ++i) tr.push_back(detail::gluing(segs[i], segs[pairing[i] - 1]));
  return RectDomain(p, b, std::move(segs), std::move(pairing), std::move(tr), true);
}

struct Reduction {
  Vec2 point;
  Word word;
  AffineMap map;  // point == map(original)
};

/// Applies transitions until q lies in the closed rectangle.
inline Reduction reduce_to_domain(Vec2 q, const RectDomain& dom) {
  Reduction r{q, {}, AffineMap::identity()};
  while (!dom.contains(r.point)) {
    if (r.word.size() >= 100) {
      throw Error(ErrorKind::reduction_limit, "reduce_to_domain: more than 100 transitions");
    }
    if (!std::isfinite(r.point.x) || !std::isfinite(r.point.y)) {
      throw Error(ErrorKind::non_finite, "reduce_to_domain: non-finite point");
    }
    const int seg = dom.exit_segment(r.point);
    const AffineMap& t = dom.transition(seg);
    r.point = t(r.point);
    r.map = compose(t, r.map);
    r.word.push_back(seg);
  }
  return r;
}

/// Word with letters reversed and inverted.
inline Word inverse_word(const Word& w) {
  Word out(w.rbegin(), w.rend());
  for (int& l : out) l = -l;
  return out;
}

}  // namespace genusflow
