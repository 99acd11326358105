#pragma once

// JSON scene configs and surface bundles.  Doubles are written with
// round-trip precision, so a bundle reloads to bit-identical splines.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "abc/error.hpp"
#include "abc/scenes.hpp"
#include "abc/spline.hpp"
#include "abc/surface.hpp"
#include "abc/trim.hpp"
#include "abc/weights.hpp"

namespace abc {

using json = nlohmann::json;

inline constexpr const char* kConfigFormat = "abc-scene";
inline constexpr const char* kBundleFormat = "abc-bundle";
inline constexpr int kJsonVersion = 1;

// ---------------------------------------------------------------------------
// Splines

inline json to_json_value(const KnotVector& k) { return {{"degree", k.degree()}, {"knots", k.knots()}}; }

inline json to_json_value(const Spline2& s) {
  json c = json::array();
  for (int i = 0; i < s.coeffs().rows(); ++i) {
    std::vector<double> row(s.coeffs().cols());
    for (int j = 0; j < s.coeffs().cols(); ++j) row[j] = s.coeffs()(i, j);
    c.push_back(row);
  }
  return {{"u", to_json_value(s.knots_u())}, {"v", to_json_value(s.knots_v())}, {"coeffs", c}};
}

inline json to_json_value(const VectorSpline& v) {
  json a = json::array();
  for (int c = 0; c < v.dim(); ++c) a.push_back(to_json_value(v[c]));
  return a;
}

namespace detail {

inline const json& field(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw validation_error("cli", "missing field '" + where + key + "'");
  return j.at(key);
}

template <class T>
T get_as(const json& j, const std::string& key, const std::string& where) {
  try {
    return field(j, key, where).get<T>();
  } catch (const json::exception& e) {
    throw validation_error("cli", "field '" + where + key + "' has the wrong type: " + e.what());
  }
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return get_as<T>(j, key, where);
}

}  // namespace detail

inline KnotVector knots_from_json(const json& j, const std::string& where) {
  return KnotVector(detail::get_as<int>(j, "degree", where), detail::get_as<std::vector<double>>(j, "knots", where));
}

inline Spline2 spline_from_json(const json& j, const std::string& where) {
  const KnotVector ku = knots_from_json(detail::field(j, "u", where), where + "u.");
  const KnotVector kv = knots_from_json(detail::field(j, "v", where), where + "v.");
  const auto rows = detail::get_as<std::vector<std::vector<double>>>(j, "coeffs", where);
  if (static_cast<int>(rows.size()) != ku.size())
    throw validation_error("cli", "field '" + where + "coeffs' needs " + std::to_string(ku.size()) + " rows");
  Eigen::MatrixXd c(ku.size(), kv.size());
  for (int i = 0; i < ku.size(); ++i) {
    if (static_cast<int>(rows[i].size()) != kv.size())
      throw validation_error("cli", "field '" + where + "coeffs' row " + std::to_string(i) + " needs " +
                                        std::to_string(kv.size()) + " entries");
    for (int k = 0; k < kv.size(); ++k) c(i, k) = rows[i][k];
  }
  return Spline2(ku, kv, c);
}

inline VectorSpline vector_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw validation_error("cli", "field '" + where + "' must be an array of splines");
  std::vector<Spline2> comps;
  for (std::size_t c = 0; c < j.size(); ++c)
    comps.push_back(spline_from_json(j[c], where + "[" + std::to_string(c) + "]."));
  return VectorSpline(comps);
}

// ---------------------------------------------------------------------------
// Bundles

inline json to_json_value(const FactoredWeight& w) {
  json f = json::array();
  for (const auto& s : w.factors) f.push_back(to_json_value(s));
  return {{"scale", w.scale}, {"factors", f}, {"exponents", w.exponents}};
}

inline FactoredWeight weight_from_json(const json& j, const std::string& where) {
  FactoredWeight w;
  w.scale = detail::get_as<double>(j, "scale", where);
  for (const auto& f : detail::field(j, "factors", where)) w.factors.push_back(spline_from_json(f, where + "factors."));
  w.exponents = detail::get_as<std::vector<int>>(j, "exponents", where);
  if (w.exponents.size() != w.factors.size())
    throw validation_error("cli", "field '" + where + "exponents' must match the factor count");
  return w;
}

inline json surface_to_json(const AbcSurface& a) {
  json j;
  j["base"] = to_json_value(a.base);
  j["ribbons"] = json::array();
  for (const auto& r : a.ribbons) j["ribbons"].push_back(to_json_value(r));
  j["reparams"] = json::array();
  for (const auto& k : a.loop.reparams) j["reparams"].push_back({to_json_value(k.p), to_json_value(k.q)});
  j["widths"] = a.loop.widths;
  j["flipped"] = a.loop.flipped;
  json corners = json::array(), traces = json::array();
  for (const auto& c : a.loop.corners) corners.push_back({c.x(), c.y()});
  for (const auto& t : a.loop.traces) {
    json tr = json::array();
    for (const auto& p : t) tr.push_back({p.x(), p.y()});
    traces.push_back(tr);
  }
  j["corners"] = corners;
  j["traces"] = traces;
  json wr = json::array();
  for (const auto& w : a.weights.w_ribbon) wr.push_back(to_json_value(w));
  j["weights"] = {{"w", to_json_value(a.weights.w)},
                  {"w_ribbon", wr},
                  {"exponents", a.weights.exponents},
                  {"plateau", a.weights.plateau},
                  {"plateau_value", a.weights.plateau_value}};
  json links = json::array();
  for (const auto& c : a.links) links.push_back({{"sigma", {c.sigma.x(), c.sigma.y()}}, {"prev", c.prev}, {"next", c.next}});
  j["links"] = links;
  j["corner_tol"] = a.corner_tol;
  return j;
}

inline AbcSurface surface_from_json(const json& j) {
  const std::string w = "surface.";
  AbcSurface a;
  a.base = vector_from_json(detail::field(j, "base", w), w + "base");
  for (const auto& r : detail::field(j, "ribbons", w)) a.ribbons.push_back(vector_from_json(r, w + "ribbons"));
  for (const auto& k : detail::field(j, "reparams", w))
    a.loop.reparams.push_back({spline_from_json(k.at(0), w + "reparams.p."), spline_from_json(k.at(1), w + "reparams.q.")});
  a.loop.widths = detail::get_as<std::vector<double>>(j, "widths", w);
  a.loop.flipped = detail::get_as<std::vector<bool>>(j, "flipped", w);
  for (const auto& c : detail::field(j, "corners", w)) a.loop.corners.emplace_back(c.at(0).get<double>(), c.at(1).get<double>());
  for (const auto& t : detail::field(j, "traces", w)) {
    std::vector<Vec2> tr;
    for (const auto& p : t) tr.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    a.loop.traces.push_back(tr);
  }
  const json& ws = detail::field(j, "weights", w);
  a.weights.w = weight_from_json(detail::field(ws, "w", w + "weights."), w + "weights.w.");
  for (const auto& x : detail::field(ws, "w_ribbon", w + "weights."))
    a.weights.w_ribbon.push_back(weight_from_json(x, w + "weights.w_ribbon."));
  a.weights.exponents = detail::get_as<std::vector<int>>(ws, "exponents", w + "weights.");
  a.weights.plateau = detail::get_as<bool>(ws, "plateau", w + "weights.");
  a.weights.plateau_value = detail::get_as<double>(ws, "plateau_value", w + "weights.");
  for (const auto& c : detail::field(j, "links", w))
    a.links.push_back({Vec2(c.at("sigma").at(0).get<double>(), c.at("sigma").at(1).get<double>()), c.at("prev").get<int>(),
                       c.at("next").get<int>()});
  a.corner_tol = detail::get_or(j, "corner_tol", a.corner_tol, w);
  const std::size_t L = a.ribbons.size();
  if (a.loop.reparams.size() != L || a.loop.widths.size() != L || a.weights.w_ribbon.size() != L)
    throw validation_error("cli", "bundle counts are inconsistent");
  return a;
}

/// One or more surfaces (multi-patch scenes) plus the scene name.
struct Bundle {
  std::string scene;
  std::vector<AbcSurface> patches;
  json report;  ///< build report echoed into the file
};

inline json bundle_to_json(const Bundle& b) {
  json j;
  j["format"] = kBundleFormat;
  j["version"] = kJsonVersion;
  j["scene"] = b.scene;
  j["patches"] = json::array();
  for (const auto& p : b.patches) j["patches"].push_back(surface_to_json(p));
  j["report"] = b.report;
  return j;
}

inline Bundle bundle_from_json(const json& j) {
  if (detail::get_as<std::string>(j, "format", "") != kBundleFormat) throw validation_error("cli", "not a surface bundle");
  if (detail::get_as<int>(j, "version", "") != kJsonVersion) throw validation_error("cli", "unsupported bundle version");
  Bundle b;
  b.scene = detail::get_as<std::string>(j, "scene", "");
  for (const auto& p : detail::field(j, "patches", "")) b.patches.push_back(surface_from_json(p));
  if (j.contains("report")) b.report = j.at("report");
  return b;
}

inline json read_json(const std::filesystem::path& p) {
  std::ifstream f(p);
  if (!f) throw io_error("cli", "cannot open " + p.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw validation_error("cli", p.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& p, const json& j) {
  std::ofstream f(p);
  if (!f) throw io_error("cli", "cannot open " + p.string() + " for writing");
  f << j.dump(1) << "\n";
  if (!f) throw io_error("cli", "write failed: " + p.string());
}

// ---------------------------------------------------------------------------
// Scene configs

/// Degree figures reported for a built surface.
inline json degree_report(const AbcSurface& a) {
  json j;
  j["deg_w"] = to_string(a.weights.w.degree());
  json wr = json::array();
  for (const auto& w : a.weights.w_ribbon) wr.push_back(to_string(w.degree()));
  j["deg_w_ribbon"] = wr;
  std::vector<DegreePair> dq;
  for (const auto& k : a.loop.reparams) dq.push_back(k.q.degree());
  const auto acc = degree_accounting(dq, a.weights.exponents);
  j["formula_plain_w"] = to_string(acc.plain_w);
  j["formula_plateau_w_bound"] = to_string(acc.plateau_w_bound);
  const DegreePair db = a.base.degree(), dr = a.ribbons[0].degree();
  if (db.u == db.v && dr.u == db.u && a.loop.reparams[0].p.degree() == db && !a.weights.exponents.empty()) {
    const int r = *std::max_element(a.weights.exponents.begin(), a.weights.exponents.end());
    j["formula_deg_a"] = to_string(blend_degree_formula(db.u, dr.v, r));
  }
  return j;
}

/// Builds the surfaces a config describes.  Named scenes take their
/// parameters from "options"; "custom" takes explicit splines.
inline Bundle build_from_config(const json& cfg) {
  if (detail::get_or<std::string>(cfg, "format", kConfigFormat, "") != kConfigFormat)
    throw validation_error("cli", "field 'format' must be \"abc-scene\"");
  if (detail::get_or<int>(cfg, "version", kJsonVersion, "") != kJsonVersion)
    throw validation_error("cli", "field 'version' is not supported");
  const std::string scene = detail::get_as<std::string>(cfg, "scene", "");
  const json opt = cfg.contains("options") ? cfg.at("options") : json::object();
  const std::string o = "options.";
  Bundle b;
  b.scene = scene;
  if (scene == "counterexample") {
    b.patches.push_back(build_counterexample());
  } else if (scene == "square") {
    SquareOptions so;
    so.n = detail::get_or(opt, "n", so.n, o);
    so.m = detail::get_or(opt, "m", so.m, o);
    so.r = detail::get_or(opt, "r", so.r, o);
    so.exponents = detail::get_or(opt, "exponents", so.exponents, o);
    so.plateau = detail::get_or<std::string>(opt, "weights", "plateau", o) == "plateau";
    so.h = detail::get_or(opt, "h", so.h, o);
    so.ribbon0_inner_knots = detail::get_or(opt, "ribbon0_inner_knots", so.ribbon0_inner_knots, o);
    if (!so.exponents.empty() && so.exponents.size() != 4)
      throw validation_error("cli", "field 'options.exponents' has " + std::to_string(so.exponents.size()) +
                                        " entries, expected 4");
    b.patches.push_back(square_scene(so));
  } else if (scene == "triangle") {
    TriangleOptions to;
    to.corner_jacobian = detail::get_or(opt, "corner_jacobian", to.corner_jacobian, o);
    to.r = detail::get_or(opt, "r", to.r, o);
    to.h = detail::get_or(opt, "h", to.h, o);
    b.patches.push_back(triangle_scene(to).surface);
  } else if (scene == "fender") {
    for (auto& p : fender_scene(detail::get_or(opt, "r", 2, o), detail::get_or(opt, "h", 0.35, o)))
      b.patches.push_back(p.surface);
  } else if (scene == "cylinders") {
    for (auto& p : cylinders_scene(detail::get_or(opt, "r", 1, o), detail::get_or(opt, "h", 0.3, o),
                                   detail::get_or(opt, "straighten", false, o)))
      b.patches.push_back(p.surface);
  } else if (scene == "custom") {
    const json& c = detail::field(cfg, "custom", "");
    const std::string w = "custom.";
    const json& rj = detail::field(c, "ribbons", w);
    if (!rj.is_array() || rj.size() < 2) throw validation_error("cli", "field '" + w + "ribbons' needs at least 2 entries");
    const std::size_t L = rj.size();
    FitSceneOptions fo;
    fo.exponents = detail::get_as<std::vector<int>>(c, "exponents", w);
    fo.widths = detail::get_as<std::vector<double>>(c, "widths", w);
    auto count = [&](const char* name, std::size_t got) {
      if (got != L)
        throw validation_error("cli", "field '" + w + name + "' has " + std::to_string(got) + " entries, expected " +
                                          std::to_string(L) + " (one per ribbon)");
    };
    count("exponents", fo.exponents.size());
    count("widths", fo.widths.size());
    for (int r : fo.exponents)
      if (r < 1) throw validation_error("cli", "field '" + w + "exponents' entries must be >= 1");
    for (double h : fo.widths)
      if (!(h > 0)) throw validation_error("cli", "field '" + w + "widths' entries must be > 0");
    const VectorSpline base = vector_from_json(detail::field(c, "base", w), w + "base");
    std::vector<VectorSpline> ribbons;
    for (std::size_t i = 0; i < L; ++i)
      ribbons.push_back(vector_from_json(rj[i], w + "ribbons[" + std::to_string(i) + "]"));
    const json& fit = detail::field(c, "fit", w);
    const std::string f = w + "fit.";
    const auto box = detail::get_as<std::vector<double>>(fit, "box", f);
    if (box.size() != 4) throw validation_error("cli", "field '" + f + "box' needs [u0,u1,v0,v1]");
    fo.search = {box[0], box[1], box[2], box[3]};
    const int deg = detail::get_or(fit, "degree", 3, f);
    fo.space = {KnotVector::uniform(deg, box[0], box[1], detail::get_or(fit, "spans_u", 4, f)),
                KnotVector::uniform(deg, box[2], box[3], detail::get_or(fit, "spans_v", 4, f))};
    fo.lambda = detail::get_or(fit, "lambda", fo.lambda, f);
    fo.corner_jacobian = detail::get_or(fit, "corner_jacobian", false, f);
    fo.straighten = detail::get_or(fit, "straighten", false, f);
    fo.harvest_u = detail::get_or(fit, "harvest_u", fo.harvest_u, f);
    fo.harvest_v = detail::get_or(fit, "harvest_v", fo.harvest_v, f);
    fo.v_hi = detail::get_or(fit, "v_max", fo.v_hi, f);
    fo.plateau = detail::get_or<std::string>(c, "weights", "plateau", w) == "plateau";
    const FittedScene fs = fit_scene(base, ribbons, fo);
    json fits = json::array();
    for (const auto& r : fs.fits)
      fits.push_back({{"max_interpolation_residual", r.max_interpolation_residual},
                      {"max_jacobian_residual", r.max_jacobian_residual},
                      {"rms_approximation", r.rms_approximation}});
    b.report["fits"] = fits;
    b.patches.push_back(fs.surface);
  } else {
    throw validation_error("cli", "field 'scene' must be one of counterexample, square, triangle, fender, "
                                  "cylinders, custom (got '" + scene + "')");
  }
  json deg = json::array();
  for (const auto& p : b.patches) deg.push_back(degree_report(p));
  b.report["degrees"] = deg;
  return b;
}

// ---------------------------------------------------------------------------
// Reports

inline json report_to_json(const ContactReport& r) {
  json j;
  j["level"] = to_string(r.level);
  j["verdict"] = r.verdict() ? "pass" : "fail";
  j["g0"] = r.g0;
  j["g1"] = r.g1;
  j["g2"] = r.g2;
  json cs = json::array();
  for (const auto& c : r.corners)
    cs.push_back({{"prev", c.prev},
                  {"next", c.next},
                  {"point_gap", c.point_gap},
                  {"normal_angle", c.normal_angle},
                  {"tensor_gap", c.tensor_gap},
                  {"min_singular", c.min_singular},
                  {"jac_gap", c.jac_gap}});
  j["corners"] = cs;
  json ss = json::array();
  for (const auto& s : r.segments)
    ss.push_back({{"index", s.index},
                  {"claimed_order", s.claimed_order},
                  {"position_gap", s.position_gap},
                  {"normal_angle", s.normal_angle},
                  {"tensor_gap", s.tensor_gap},
                  {"min_slope_w", s.min_slope_w},
                  {"min_slope_wl", s.min_slope_wl}});
  j["segments"] = ss;
  j["failures"] = r.failures;
  return j;
}

/// Point of boundary curve l at parameter u, refined from the stored trace.
inline Vec2 boundary_point(const AbcSurface& a, int l, double u) {
  const auto& tr = a.loop.traces.at(l);
  const int n = static_cast<int>(tr.size()) - 1;
  return solve_corner(a.kappa(l), Vec2(u, 0), tr[static_cast<int>(std::lround(u * n))]);
}

struct SeamReport {
  double position_gap = 0.0;
  double normal_angle = 0.0;  ///< unoriented
};

/// Compares curve la of a with curve lb of b, optionally run backwards.
inline SeamReport seam_gap(const AbcSurface& a, int la, const AbcSurface& b, int lb, bool reversed, int samples = 50) {
  SeamReport s;
  for (int i = 0; i <= samples; ++i) {
    const double u = static_cast<double>(i) / samples;
    const Vec2 sa = boundary_point(a, la, u), sb = boundary_point(b, lb, reversed ? 1 - u : u);
    s.position_gap = std::max(s.position_gap, (eval_abc(a, sa) - eval_abc(b, sb)).norm());
    try {
      const Vec3 na = eval_normal(a, sa), nb = eval_normal(b, sb);
      s.normal_angle = std::max(s.normal_angle, std::atan2(na.cross(nb).norm(), std::abs(na.dot(nb))));
    } catch (const Error&) {
      // Normals are undefined where a patch degenerates; positions still count.
    }
  }
  return s;
}

}  // namespace abc
