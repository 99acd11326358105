// abc_cli: build, check, render and export blended trimmed surfaces.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "abc/export.hpp"
#include "abc/io.hpp"
#include "abc/render.hpp"

namespace fs = std::filesystem;
using namespace abc;

namespace {

struct Flags {
  std::string config;
  std::string bundle;
  std::string level = "g2";
  std::string mode = "hybrid";
  std::string what = "mesh";
  std::string name;
  std::string out;
  std::vector<double> light{0, 0, 1};
  int density = 64;
  unsigned seed = 0;
};

Level parse_level(const std::string& s) {
  if (s == "g0" || s == "G0") return Level::G0;
  if (s == "g1" || s == "G1") return Level::G1;
  if (s == "g2" || s == "G2") return Level::G2;
  throw validation_error("cli", "--level must be g0, g1 or g2");
}

fs::path out_or(const Flags& f, const std::string& fallback) { return f.out.empty() ? fs::path(fallback) : fs::path(f.out); }

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

Bundle load_bundle(const std::string& path) { return bundle_from_json(read_json(path)); }

/// Checks every patch; returns the JSON report and whether all passed.
std::pair<json, bool> check_all(const Bundle& b, Level level) {
  json rep = json::array();
  bool ok = true;
  for (std::size_t i = 0; i < b.patches.size(); ++i) {
    const ContactReport r = verify_contact(b.patches[i], level);
    ok = ok && r.verdict();
    rep.push_back(report_to_json(r));
    std::cout << "patch " << i << ": " << to_string(level) << (r.verdict() ? " pass" : " fail") << "  (g0 "
              << r.g0 << ", g1 " << r.g1 << ", g2 " << r.g2 << ")\n";
    for (const auto& c : r.corners)
      std::cout << "  corner " << c.prev << "|" << c.next << ": point " << num(c.point_gap) << ", normal "
                << num(c.normal_angle) << ", jac " << num(c.jac_gap) << "\n";
    for (const auto& f : r.failures) std::cout << "  - " << f << "\n";
  }
  return {rep, ok};
}

void print_degrees(const json& report) {
  if (!report.contains("degrees")) return;
  for (std::size_t i = 0; i < report["degrees"].size(); ++i) {
    const json& d = report["degrees"][i];
    std::cout << "patch " << i << ": deg w " << d["deg_w"].get<std::string>() << " (plain formula "
              << d["formula_plain_w"].get<std::string>() << ")";
    if (d.contains("formula_deg_a")) std::cout << ", deg a formula " << d["formula_deg_a"].get<std::string>();
    std::cout << "\n";
  }
}

int cmd_build(const Flags& f) {
  if (f.config.empty()) throw validation_error("cli", "build needs --config");
  const Bundle b = build_from_config(read_json(f.config));
  const fs::path out = out_or(f, "bundle.json");
  write_json(out, bundle_to_json(b));
  print_degrees(b.report);
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

int cmd_check(const Flags& f) {
  const Level level = parse_level(f.level);
  const auto [rep, ok] = check_all(load_bundle(f.bundle), level);
  if (!f.out.empty()) write_json(f.out, rep);
  if (!ok) throw verification_error("check", std::string(to_string(level)) + " verdict failed");
  return 0;
}

int cmd_render(const Flags& f) {
  const Bundle b = load_bundle(f.bundle);
  if (f.light.size() != 3) throw validation_error("cli", "--light needs three numbers");
  const Vec3 light(f.light[0], f.light[1], f.light[2]);
  for (std::size_t i = 0; i < b.patches.size(); ++i) {
    fs::path out = out_or(f, f.what == "mesh" ? "render.obj" : "render.csv");
    if (b.patches.size() > 1) out.replace_filename(out.stem().string() + "_p" + std::to_string(i) + out.extension().string());
    std::ofstream os(out);
    if (!os) throw io_error("render", "cannot open " + out.string());
    if (f.what == "mesh") {
      write_mesh_obj(os, b.patches[i], f.density);
    } else {
      const RasterKind kind = parse_raster_kind(f.what == "curvature" ? "mean" : f.what);
      const Raster r = render_raster(b.patches[i], kind, f.density, light);
      write_raster_csv(os, r);
      std::cout << "patch " << i << ": " << r.inside << " samples, range [" << num(r.min) << ", " << num(r.max)
                << "], mean " << num(r.mean) << ", deviation " << num(r.deviation) << ", 5-95% band [" << num(r.band_lo) << ", " << num(r.band_hi)
                << "], skipped " << r.skipped << "\n";
    }
    std::cout << "wrote " << out.string() << "\n";
  }
  return 0;
}

int cmd_export(const Flags& f) {
  const Bundle b = load_bundle(f.bundle);
  const TrimMode mode = parse_trim_mode(f.mode);
  ExportOptions opt;
  opt.seed = f.seed;
  for (std::size_t i = 0; i < b.patches.size(); ++i) {
    fs::path out = out_or(f, "surface.abcn");
    if (b.patches.size() > 1) out.replace_filename(out.stem().string() + "_p" + std::to_string(i) + out.extension().string());
    const RationalAssembly ra = to_rational(b.patches[i], opt);
    emit(b.patches[i], ra, mode, out, f.density);
    std::cout << "patch " << i << ": " << ra.stats.pieces << " pieces, max degree " << to_string(ra.stats.max_degree)
              << ", max relative error " << num(ra.stats.max_rel_error) << "\n";
    std::cout << "wrote " << out.string() << "\n";
  }
  return 0;
}

/// Generates a named scene, builds, checks and writes the artifacts.
int cmd_examples(const Flags& f) {
  json cfg = {{"format", kConfigFormat}, {"version", kJsonVersion}, {"scene", f.name}};
  Level level = Level::G2;
  bool expect_pass = true;
  if (f.name == "counterexample") {
    expect_pass = false;
  } else if (f.name == "cylinders") {
    level = Level::G0;
  } else if (f.name == "fender") {
    level = Level::G1;
  } else if (f.name == "square") {
  } else if (f.name != "triangle") {
    throw validation_error("cli", "unknown example '" + f.name + "' (counterexample, cylinders, triangle, fender, square)");
  }
  const fs::path dir = out_or(f, "examples_" + f.name);
  fs::create_directories(dir);
  write_json(dir / "config.json", cfg);
  Bundle b = build_from_config(cfg);
  print_degrees(b.report);

  json extra;
  if (f.name == "counterexample") {
    const AbcSurface& a = b.patches[0];
    double err = 0;
    for (int i = 1; i <= 20; ++i)
      for (int k = 1; k <= 20; ++k) {
        const double x = i / 20.0, y = k / 20.0;
        const Vec3 want = counterexample_closed_form(x, y);
        err = std::max(err, (eval_abc(a, Vec2(x, y)) - want).norm() / std::max(1.0, want.norm()));
      }
    extra["closed_form_max_rel_error"] = err;
    std::cout << "closed form match: max relative error " << num(err) << "\n";
  } else if (f.name == "cylinders") {
    const SeamReport s = seam_gap(b.patches[0], 1, b.patches[1], 1, false);
    extra["watertight_gap"] = s.position_gap;
    std::cout << "watertight gap along the shared curve: " << num(s.position_gap) << "\n";
  } else if (f.name == "fender") {
    const SeamReport s = seam_gap(b.patches[0], 2, b.patches[1], 0, true);
    extra["seam_gap"] = s.position_gap;
    extra["seam_normal_angle"] = s.normal_angle;
    std::cout << "seam gap " << num(s.position_gap) << ", normal angle " << num(s.normal_angle) << "\n";
  }
  b.report["example"] = extra;
  write_json(dir / "bundle.json", bundle_to_json(b));

  const auto [rep, ok] = check_all(b, level);
  write_json(dir / "check.json", rep);
  std::cout << "wrote " << dir.string() << "\n";
  if (ok != expect_pass)
    throw verification_error("examples", f.name + ": " + to_string(level) + (ok ? " passed unexpectedly" : " failed"));
  if (!expect_pass) std::cout << "counterexample: " << to_string(level) << " fails as expected\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Build, verify and export blended trimmed surfaces"};
  app.require_subcommand(1);
  Flags f;

  auto* build = app.add_subcommand("build", "Build a surface bundle from a scene config");
  build->add_option("--config", f.config, "Scene config (JSON)")->required();
  build->add_option("--out", f.out, "Bundle path");

  auto* check = app.add_subcommand("check", "Verify contact along the trimming loop");
  check->add_option("bundle", f.bundle, "Surface bundle")->required();
  check->add_option("--level", f.level, "g0, g1 or g2");
  check->add_option("--out", f.out, "Machine-readable report");

  auto* render = app.add_subcommand("render", "Write a mesh or a raster clipped to the trimmed domain");
  render->add_option("bundle", f.bundle, "Surface bundle")->required();
  render->add_option("--what", f.what, "mesh, isophotes, gaussian, mean or curvature");
  render->add_option("--density", f.density, "Grid intervals per side");
  render->add_option("--light", f.light, "Light direction for isophotes")->expected(3);
  render->add_option("--out", f.out, "Output path");

  auto* exp = app.add_subcommand("export", "Export exact rational pieces with trim loops");
  exp->add_option("bundle", f.bundle, "Surface bundle")->required();
  exp->add_option("--mode", f.mode, "parametric, geometric or hybrid");
  exp->add_option("--density", f.density, "OBJ sidecar density");
  exp->add_option("--seed", f.seed, "Sampling seed of the soundness check");
  exp->add_option("--out", f.out, "Output path");

  auto* ex = app.add_subcommand("examples", "Generate, build and check a named scene");
  ex->add_option("name", f.name, "counterexample, cylinders, triangle, fender or square")->required();
  ex->add_option("--out", f.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorCode::validation);
  }

  try {
    if (*build) return cmd_build(f);
    if (*check) return cmd_check(f);
    if (*render) return cmd_render(f);
    if (*exp) return cmd_export(f);
    if (*ex) return cmd_examples(f);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "] " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error [io] cli: " << e.what() << "\n";
    return static_cast<int>(ErrorCode::io);
  } catch (const std::exception& e) {
    std::cerr << "error [numerical] cli: " << e.what() << "\n";
    return static_cast<int>(ErrorCode::numerical);
  }
  return 0;
}
