#pragma once

// Plot data: isophote and curvature rasters over the trimmed domain, and a
// triangle mesh for quick viewing.

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "abc/diffgeo.hpp"
#include "abc/error.hpp"
#include "abc/surface.hpp"
#include "abc/trim.hpp"

namespace abc {

enum class RasterKind { isophotes, gaussian, mean };

inline RasterKind parse_raster_kind(const std::string& s) {
  if (s == "isophotes") return RasterKind::isophotes;
  if (s == "gaussian" || s == "K") return RasterKind::gaussian;
  if (s == "mean" || s == "H") return RasterKind::mean;
  throw validation_error("render", "unknown raster '" + s + "'");
}

/// Grid samples inside the trimmed domain.  Samples outside are NaN.
struct Raster {
  Rect box;
  int density = 0;
  std::vector<double> values;  ///< row-major, (density+1)^2, v fastest
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
  double mean = 0.0;
  double deviation = 0.0;  ///< max |value - mean|
  int inside = 0;
  int skipped = 0;  ///< samples on a corner, where all weights vanish
  double band_lo = 0.0, band_hi = 0.0;  ///< 5th and 95th percentiles

  double at(int i, int j) const { return values[i * (density + 1) + j]; }
  Vec2 point(int i, int j) const {
    return {box.u0 + (box.u1 - box.u0) * i / density, box.v0 + (box.v1 - box.v0) * j / density};
  }
};

namespace detail {

/// Parameter box of the trimmed domain and an inside test.
struct DomainSampler {
  Rect box;
  std::vector<Vec2> poly;
  std::vector<Vec2> corners;
  double corner_radius = 0.0;

  explicit DomainSampler(const AbcSurface& a) : corners(a.loop.corners) {
    if (a.loop.traces.empty()) {
      box = a.base.domain();
    } else {
      poly = a.loop.polygon();
      box = {poly[0].x(), poly[0].x(), poly[0].y(), poly[0].y()};
      for (const auto& p : poly) {
        box.u0 = std::min(box.u0, p.x());
        box.u1 = std::max(box.u1, p.x());
        box.v0 = std::min(box.v0, p.y());
        box.v1 = std::max(box.v1, p.y());
      }
    }
    corner_radius = 1e-6 * std::hypot(box.u1 - box.u0, box.v1 - box.v0);
  }

  bool inside(const Vec2& s) const { return poly.empty() || point_in_polygon(poly, s); }

  // Derivative quotients lose all digits this close to a corner.
  bool on_corner(const Vec2& s) const {
    for (const auto& c : corners)
      if ((s - c).norm() < corner_radius) return true;
    return false;
  }
};

}  // namespace detail

/// Raster of n . light (isophotes, in [-1,1]), K or H.  Samples on a corner
/// are skipped and counted.
inline Raster render_raster(const AbcSurface& a, RasterKind kind, int density, const Vec3& light = Vec3(0, 0, 1)) {
  if (density < 1) throw validation_error("render", "density must be >= 1");
  const detail::DomainSampler dom(a);
  Raster r;
  r.box = dom.box;
  r.density = density;
  r.values.assign((density + 1) * (density + 1), std::numeric_limits<double>::quiet_NaN());
  const Vec3 l = light.normalized();
  double sum = 0;
  for (int i = 0; i <= density; ++i)
    for (int j = 0; j <= density; ++j) {
      const Vec2 s = r.point(i, j);
      if (!dom.inside(s)) continue;
      if (dom.on_corner(s)) {
        ++r.skipped;
        continue;
      }
      double v;
      try {
        const Vec3Jet jet = blend_jet(a, s);
        if (kind == RasterKind::isophotes) {
          v = frame(jet).normal.dot(l);
        } else {
          const Curvatures c = gaussian_mean(jet);
          v = kind == RasterKind::gaussian ? c.gaussian : c.mean;
        }
      } catch (const Error&) {
        ++r.skipped;
        continue;
      }
      if (!std::isfinite(v)) {
        ++r.skipped;
        continue;
      }
      r.values[i * (density + 1) + j] = v;
      r.min = std::min(r.min, v);
      r.max = std::max(r.max, v);
      sum += v;
      ++r.inside;
    }
  if (r.inside == 0) throw numerical_error("render", "no raster sample inside the trimmed domain");
  r.mean = sum / r.inside;
  std::vector<double> sorted;
  for (double v : r.values)
    if (!std::isnan(v)) {
      r.deviation = std::max(r.deviation, std::abs(v - r.mean));
      sorted.push_back(v);
    }
  std::sort(sorted.begin(), sorted.end());
  const auto pick = [&](double f) { return sorted[static_cast<std::size_t>(f * (sorted.size() - 1))]; };
  r.band_lo = pick(0.05);
  r.band_hi = pick(0.95);
  return r;
}

/// CSV with columns u,v,value; outside samples are omitted.
inline void write_raster_csv(std::ostream& os, const Raster& r) {
  os.precision(17);
  os << "u,v,value\n";
  for (int i = 0; i <= r.density; ++i)
    for (int j = 0; j <= r.density; ++j) {
      const double v = r.at(i, j);
      if (std::isnan(v)) continue;
      const Vec2 s = r.point(i, j);
      os << s.x() << ',' << s.y() << ',' << v << '\n';
    }
  if (!os) throw io_error("render", "raster write failed");
}

/// Grid mesh of the blend; a quad is kept when all four corners are inside.
inline void write_mesh_obj(std::ostream& os, const AbcSurface& a, int density) {
  if (density < 1) throw validation_error("render", "density must be >= 1");
  const detail::DomainSampler dom(a);
  const int n = density + 1;
  std::vector<int> index(n * n, 0);
  os.precision(17);
  int next = 1;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Vec2 s(dom.box.u0 + (dom.box.u1 - dom.box.u0) * i / density,
                   dom.box.v0 + (dom.box.v1 - dom.box.v0) * j / density);
      if (!dom.inside(s)) continue;
      Vec3 p;
      try {
        p = eval_abc(a, s);
      } catch (const Error&) {
        continue;
      }
      os << "v " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
      index[i * n + j] = next++;
    }
  for (int i = 0; i < density; ++i)
    for (int j = 0; j < density; ++j) {
      const int a0 = index[i * n + j], a1 = index[(i + 1) * n + j], a2 = index[(i + 1) * n + j + 1],
                a3 = index[i * n + j + 1];
      if (a0 && a1 && a2 && a3) os << "f " << a0 << ' ' << a1 << ' ' << a2 << "\nf " << a0 << ' ' << a2 << ' ' << a3 << '\n';
    }
  if (!os) throw io_error("render", "mesh write failed");
}

}  // namespace abc
