#include "egg/svg.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <vector>

#include "egg/splinecore.hpp"

namespace egg {

namespace {

using Polyline = std::vector<Eigen::Vector2d>;

Polyline sample_line(const GeometryMap& x, bool xi_const, double c, int ns) {
  Polyline pl;
  pl.reserve(ns);
  for (int i = 0; i < ns; ++i) {
    const double t = static_cast<double>(i) / (ns - 1);
    pl.push_back(xi_const ? x.value(c, t) : x.value(t, c));
  }
  return pl;
}

void write_polyline(std::ostream& os, const Polyline& pl, double sx, double sy,
                    double ox, double oy, const char* style) {
  os << "<polyline fill=\"none\" " << style << " points=\"";
  os << std::fixed << std::setprecision(6);
  for (std::size_t i = 0; i < pl.size(); ++i) {
    if (i) os << ' ';
    os << (pl[i](0) - ox) * sx << ',' << (oy - pl[i](1)) * sy;
  }
  os << "\"/>\n";
}

}  // namespace

void export_svg(const GeometryMap& x, const SvgOptions& opts,
                const std::string& path) {
  const int ns = std::max(64, opts.samples);
  std::vector<Polyline> iso, mesh;
  for (int i = 0; i < opts.isolines_xi; ++i) {
    const double c = opts.isolines_xi == 1
                         ? 0.5
                         : static_cast<double>(i) / (opts.isolines_xi - 1);
    iso.push_back(sample_line(x, true, c, ns));
  }
  for (int i = 0; i < opts.isolines_eta; ++i) {
    const double c = opts.isolines_eta == 1
                         ? 0.5
                         : static_cast<double>(i) / (opts.isolines_eta - 1);
    iso.push_back(sample_line(x, false, c, ns));
  }
  if (opts.mesh_overlay) {
    for (const auto& el : x.space->elements) {
      Polyline pl;
      const int m = 16;
      auto seg = [&](double ax, double ay, double bx, double by) {
        for (int i = 0; i <= m; ++i) {
          const double t = static_cast<double>(i) / m;
          pl.push_back(x.value(ax + t * (bx - ax), ay + t * (by - ay)));
        }
      };
      seg(el.x0, el.y0, el.x1, el.y0);
      seg(el.x1, el.y0, el.x1, el.y1);
      seg(el.x1, el.y1, el.x0, el.y1);
      seg(el.x0, el.y1, el.x0, el.y0);
      mesh.push_back(std::move(pl));
    }
  }

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto* fam : {&iso, &mesh})
    for (const auto& pl : *fam)
      for (const auto& p : pl) {
        xmin = std::min(xmin, p(0));
        xmax = std::max(xmax, p(0));
        ymin = std::min(ymin, p(1));
        ymax = std::max(ymax, p(1));
      }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;
  const double margin = 0.02 * std::max(xmax - xmin, ymax - ymin);
  xmin -= margin, xmax += margin, ymin -= margin, ymax += margin;
  const double scale = opts.width / (xmax - xmin);
  const double height = (ymax - ymin) * scale;

  std::ofstream os(path);
  if (!os) throw Error("cannot write svg file: " + path);
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << std::fixed << std::setprecision(6) << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\""
     << opts.width << "\" height=\"" << height << "\" viewBox=\"0 0 "
     << opts.width << ' ' << height << "\">\n";
  for (const auto& pl : iso)
    write_polyline(os, pl, scale, scale, xmin, ymax,
                   "stroke=\"#1f3b70\" stroke-width=\"1\"");
  for (const auto& pl : mesh)
    write_polyline(os, pl, scale, scale, xmin, ymax,
                   "stroke=\"#c03020\" stroke-width=\"0.6\"");
  os << "</svg>\n";
  if (!os) throw Error("failed writing svg file: " + path);
}

}  // namespace egg
