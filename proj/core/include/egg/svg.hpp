#pragma once

#include <string>

#include "egg/thb.hpp"

namespace egg {

struct SvgOptions {
  int isolines_xi = 10;   // number of xi = const polylines
  int isolines_eta = 10;  // number of eta = const polylines
  int samples = 64;       // sample points per isoline (minimum 64)
  bool mesh_overlay = false;
  double width = 640.0;   // output width in px; height follows aspect ratio
};

/// Render the image of the unit square under x as two isoline families,
/// optionally with the active-element boundaries overlaid.
void export_svg(const GeometryMap& x, const SvgOptions& opts,
                const std::string& path);

}  // namespace egg
