#include "stainkit/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "stainkit/errors.hpp"
#include "stainkit/parallel.hpp"
#include "stainkit/png_io.hpp"

namespace fs = std::filesystem;

namespace stainkit {
namespace {

bool is_png(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext == ".png";
}

}  // namespace

LabeledImageSet load_class_folders(const std::string& root) {
  const fs::path base(root);
  if (!fs::is_directory(base)) {
    throw IoError("dataset root is not a directory: " + root);
  }

  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(base)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) {
    throw IoError("dataset has no class folders: " + root);
  }

  LabeledImageSet set;
  for (std::size_t ci = 0; ci < class_dirs.size(); ++ci) {
    set.class_names.push_back(class_dirs[ci].filename().string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(class_dirs[ci])) {
      if (entry.is_regular_file() && is_png(entry.path())) {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      set.paths.push_back(f.string());
      set.labels.push_back(static_cast<int>(ci));
    }
  }
  if (set.paths.empty()) {
    throw IoError("dataset has no PNG files: " + root);
  }

  set.images.resize(set.paths.size());
  parallel_for(set.paths.size(),
               [&](std::size_t i) { set.images[i] = load_png(set.paths[i]); });
  return set;
}

void save_class_folders(const std::string& root, const LabeledImageSet& set,
                        const std::string& prefix) {
  const fs::path base(root);
  std::error_code ec;
  fs::create_directories(base, ec);
  if (ec) throw IoError("cannot create directory: " + root);

  std::vector<int> counter(set.class_names.size(), 0);
  std::vector<std::string> out_paths(set.images.size());
  for (std::size_t i = 0; i < set.images.size(); ++i) {
    const int label = set.labels[i];
    const fs::path dir = base / set.class_names[label];
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory: " + dir.string());
    char name[64];
    std::snprintf(name, sizeof(name), "%s%04d.png", prefix.c_str(),
                  counter[label]++);
    out_paths[i] = (dir / name).string();
  }
  parallel_for(set.images.size(), [&](std::size_t i) {
    save_png(out_paths[i], set.images[i]);
  });
}

std::vector<std::string> list_png_inputs(const std::string& path) {
  const fs::path p(path);
  if (fs::is_regular_file(p)) return {path};
  if (!fs::is_directory(p)) {
    throw IoError("input path does not exist: " + path);
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(p)) {
    if (entry.is_regular_file() && is_png(entry.path())) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no PNG files in directory: " + path);
  std::vector<std::string> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(f.string());
  return out;
}

}  // namespace stainkit
