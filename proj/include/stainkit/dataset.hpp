#pragma once

#include <string>
#include <vector>

#include "stainkit/image.hpp"

// Class-per-folder PNG ingestion and emission. Folder names are class
// labels; listing order is sorted so ingestion is deterministic.

namespace stainkit {

struct LabeledImageSet {
  std::vector<RgbImage> images;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::vector<std::string> paths;  // empty for generated sets
};

// Loads <root>/<class>/*.png. Classes and files are visited in sorted
// order. Throws IoError when root is missing or contains no images.
LabeledImageSet load_class_folders(const std::string& root);

// Writes <root>/<class>/<prefix>NNNN.png.
void save_class_folders(const std::string& root, const LabeledImageSet& set,
                        const std::string& prefix = "tile_");

// All *.png under a path: the path itself if it is a file, otherwise the
// sorted PNG files directly inside the directory.
std::vector<std::string> list_png_inputs(const std::string& path);

}  // namespace stainkit
