#pragma once

// Artifact formatting: JSON with 17 significant digits, CSV tables, SVG
// portraits, and atomic file output.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "genusflow/error.hpp"
#include "genusflow/geometry.hpp"
#include "genusflow/integrate.hpp"
#include "genusflow/topology.hpp"

namespace genusflow {

using Json = nlohmann::ordered_json;

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline void dump_json(const Json& j, std::string& out, int indent, int level) {
  const std::string pad(static_cast<std::size_t>(indent * (level + 1)), ' ');
  const std::string close_pad(static_cast<std::size_t>(indent * level), ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad + Json(it.key()).dump() + ": ";
        dump_json(it.value(), out, indent, level + 1);
      }
      out += "\n" + close_pad + "}";
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      bool scalars = true;
      for (const Json& e : j) scalars = scalars && !e.is_structured();
      if (scalars) {
        out += "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) out += ", ";
          dump_json(j[i], out, indent, level + 1);
        }
        out += "]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        out += pad;
        dump_json(j[i], out, indent, level + 1);
      }
      out += "\n" + close_pad + "]";
      return;
    }
    case Json::value_t::number_float: {
      const double v = j.get<double>();
      out += std::isfinite(v) ? format_number(v) : "null";
      return;
    }
    default: out += j.dump(); return;
  }
}

}  // namespace detail

/// Stable JSON text: insertion-ordered keys, doubles as %.17g, non-finite as null.
inline std::string to_json_text(const Json& j, int indent = 2) {
  std::string out;
  detail::dump_json(j, out, indent, 0);
  out += "\n";
  return out;
}

/// Writes through a temporary file in the same directory, then renames.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::input, "cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error(ErrorKind::input, "write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

inline std::string word_text(const Word& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(w[i]);
  }
  return s;
}

/// Number of crossing events at or before each sample.
inline std::vector<std::size_t> events_before(const Trajectory& tr) {
  std::vector<std::size_t> out;
  std::size_t e = 0;
  for (const State& s : tr.samples) {
    while (e < tr.events.size() && tr.events[e].t <= s.t) ++e;
    out.push_back(e);
  }
  return out;
}

/// Columns t,x,y,word; word is the deck word accumulated up to the sample.
inline std::string trajectory_csv(const Trajectory& tr) {
  std::string s = "t,x,y,word\n";
  const std::vector<std::size_t> ev = events_before(tr);
  for (std::size_t i = 0; i < tr.samples.size(); ++i) {
    const State& q = tr.samples[i];
    const Word w = ev[i] == 0 ? Word{} : tr.word_at(ev[i] - 1);
    s += format_number(q.t) + "," + format_number(q.x) + "," + format_number(q.y) + "," + word_text(w) + "\n";
  }
  return s;
}

/// Trajectory pieces between consecutive boundary crossings.
inline std::vector<std::vector<Vec2>> trajectory_pieces(const Trajectory& tr) {
  std::vector<std::vector<Vec2>> out;
  const std::vector<std::size_t> ev = events_before(tr);
  for (std::size_t i = 0; i < tr.samples.size(); ++i) {
    if (i == 0 || ev[i] != ev[i - 1]) out.emplace_back();
    out.back().push_back(tr.samples[i].pos());
  }
  return out;
}

/// Columns ix,iy,component for occupied cells, row by row.
inline std::string attractor_csv(const AttractorEstimate& est) {
  std::string s = "ix,iy,component\n";
  const Region& r = est.region;
  for (int iy = 0; iy < r.ny; ++iy) {
    for (int ix = 0; ix < r.nx; ++ix) {
      if (!r.at(ix, iy)) continue;
      s += std::to_string(ix) + "," + std::to_string(iy) + "," + std::to_string(est.labels[r.index(ix, iy)]) + "\n";
    }
  }
  return s;
}

struct Portrait {
  Box box;
  const RectDomain* domain = nullptr;
  std::vector<std::vector<Vec2>> polylines;
  const AttractorEstimate* attractor = nullptr;
  std::vector<Vec2> points;
  std::string title;
};

namespace detail {

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", std::abs(v) < 5e-7 ? 0.0 : v);
  return buf;
}

inline std::string svg_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

inline const char* palette(int label) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  return colors[static_cast<std::size_t>(label < 0 ? 0 : label) % 8];
}

}  // namespace detail

/// Rectangle, segment labels "i~j" for identified segments, cells as filled
/// rects, trajectories as polylines split at crossings, marked points.
inline std::string render_svg(const Portrait& p) {
  using detail::svg_num;
  const double margin = 40.0, wpx = 640.0;
  const double scale = wpx / p.box.width();
  const double hpx = std::clamp(p.box.height() * scale, 80.0, 2400.0);
  const double sy = hpx / p.box.height();
  auto X = [&](double x) { return margin + (x - p.box.x_min) * scale; };
  auto Y = [&](double y) { return margin + (p.box.y_max - y) * sy; };
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + svg_num(wpx + 2 * margin) + "\" height=\"" +
       svg_num(hpx + 2 * margin) + "\" viewBox=\"0 0 " + svg_num(wpx + 2 * margin) + " " + svg_num(hpx + 2 * margin) +
       "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!p.title.empty()) {
    s += "<text x=\"" + svg_num(margin) + "\" y=\"16\" font-family=\"sans-serif\" font-size=\"13\">" +
         detail::svg_escape(p.title) + "</text>\n";
  }
  if (p.attractor != nullptr) {
    const Region& r = p.attractor->region;
    const double cw = r.dx() * scale, ch = r.dy() * sy;
    s += "<g stroke=\"none\">\n";
    for (int iy = 0; iy < r.ny; ++iy) {
      for (int ix = 0; ix < r.nx; ++ix) {
        if (!r.at(ix, iy)) continue;
        const Vec2 lo = r.lattice(ix, iy + 1);
        s += "<rect x=\"" + svg_num(X(lo.x)) + "\" y=\"" + svg_num(Y(lo.y)) + "\" width=\"" + svg_num(cw) +
             "\" height=\"" + svg_num(ch) + "\" fill=\"" + detail::palette(p.attractor->labels[r.index(ix, iy)]) +
             "\"/>\n";
      }
    }
    s += "</g>\n";
  }
  s += "<rect x=\"" + svg_num(X(p.box.x_min)) + "\" y=\"" + svg_num(Y(p.box.y_max)) + "\" width=\"" +
       svg_num(p.box.width() * scale) + "\" height=\"" + svg_num(p.box.height() * sy) +
       "\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
  if (p.domain != nullptr) {
    s += "<g font-family=\"sans-serif\" font-size=\"10\" fill=\"#444\">\n";
    for (int i = 1; i <= p.domain->segment_count(); ++i) {
      const Segment& seg = p.domain->segment(i);
      const Vec2 mid = 0.5 * (seg.start + seg.end);
      const Vec2 n = seg.outward_normal();
      const double tick = 6.0;
      s += "<line x1=\"" + svg_num(X(seg.start.x)) + "\" y1=\"" + svg_num(Y(seg.start.y)) + "\" x2=\"" +
           svg_num(X(seg.start.x) + tick * n.x) + "\" y2=\"" + svg_num(Y(seg.start.y) - tick * n.y) +
           "\" stroke=\"black\"/>\n";
      s += "<text x=\"" + svg_num(X(mid.x) + 14 * n.x - 8) + "\" y=\"" + svg_num(Y(mid.y) - 14 * n.y + 4) + "\">" +
           std::to_string(i) + "~" + std::to_string(p.domain->partner(i)) + "</text>\n";
    }
    s += "</g>\n";
  }
  if (!p.polylines.empty()) {
    s += "<g fill=\"none\" stroke=\"#222\" stroke-width=\"0.8\">\n";
    for (const auto& pl : p.polylines) {
      if (pl.size() < 2) continue;
      s += "<polyline points=\"";
      for (std::size_t i = 0; i < pl.size(); ++i) {
        if (i) s += ' ';
        s += svg_num(X(pl[i].x)) + "," + svg_num(Y(pl[i].y));
      }
      s += "\"/>\n";
    }
    s += "</g>\n";
  }
  for (const Vec2& q : p.points) {
    s += "<circle cx=\"" + svg_num(X(q.x)) + "\" cy=\"" + svg_num(Y(q.y)) +
         "\" r=\"4\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\"/>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace genusflow
