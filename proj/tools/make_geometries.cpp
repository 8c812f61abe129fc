// Writes the packaged test geometries as JSON files into a directory.

#include <iostream>

#include "egg/geometry.hpp"

int main(int argc, char** argv) {
  const std::string dir = argc > 1 ? argv[1] : ".";
  try {
    egg::save_geometry(dir + "/square.json", egg::make_square());
    egg::save_geometry(dir + "/skew.json", egg::make_skew());
    egg::save_geometry(dir + "/annulus.json", egg::make_annulus());
    egg::save_geometry(dir + "/horseshoe.json", egg::make_horseshoe());
    egg::save_geometry(dir + "/tube.json", egg::make_tube());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
