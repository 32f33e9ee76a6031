#include "fusegnet/dataio.hpp"

#include "fusegnet/error.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cctype>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace fusegnet {

namespace fs = std::filesystem;

void validate(const SampleRecord& record) {
  if (record.image.empty() || record.image.type() != CV_8UC3) {
    throw DataError(record.id + ": image must be a non-empty 8-bit RGB image");
  }
  if (record.mask.empty() || record.mask.type() != CV_8UC1) {
    throw DataError(record.id + ": mask must be a non-empty 8-bit single-channel image");
  }
  if (record.image.size() != record.mask.size()) {
    throw ShapeError(record.id + ": image and mask sizes differ");
  }
  double lo = 0.0;
  double hi = 0.0;
  cv::minMaxLoc(record.mask, &lo, &hi);
  if (hi > 1.0) throw DataError(record.id + ": mask is not binary");
}

bool is_image_file(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".tif" ||
         ext == ".tiff";
}

std::map<std::string, fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::map<std::string, fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
    const auto stem = entry.path().stem().string();
    if (!files.emplace(stem, entry.path()).second) {
      throw DataError("duplicate sample id '" + stem + "' in " + dir.string());
    }
  }
  return files;
}

cv::Mat read_rgb_image(const fs::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot read image " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return rgb;
}

cv::Mat read_binary_mask(const fs::path& path) {
  cv::Mat gray = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (gray.empty()) throw DataError("cannot read mask " + path.string());
  cv::Mat binary;
  cv::threshold(gray, binary, 127, 1, cv::THRESH_BINARY);  // >= 128 -> 1
  return binary;
}

void write_mask_png(const fs::path& path, const cv::Mat& mask) {
  if (mask.type() != CV_8UC1) throw DataError("mask must be 8-bit single channel");
  cv::Mat out = mask * 255;
  if (!cv::imwrite(path.string(), out)) throw DataError("cannot write " + path.string());
}

void write_probability_png(const fs::path& path, const cv::Mat& probabilities) {
  if (probabilities.channels() != 1) throw DataError("probability map must be single channel");
  cv::Mat scaled;
  probabilities.convertTo(scaled, CV_16U, 65535.0);
  if (!cv::imwrite(path.string(), scaled)) throw DataError("cannot write " + path.string());
}

std::vector<SampleRecord> load_dataset(const fs::path& images_dir, const fs::path& masks_dir) {
  const auto images = list_images(images_dir);
  const auto masks = list_images(masks_dir);
  std::vector<SampleRecord> records;
  records.reserve(images.size());
  for (const auto& [id, image_path] : images) {
    auto it = masks.find(id);
    if (it == masks.end()) {
      throw DataError("missing mask for image " + image_path.string() + " in " + masks_dir.string());
    }
    SampleRecord record{id, read_rgb_image(image_path), read_binary_mask(it->second)};
    if (record.image.size() != record.mask.size()) {
      throw ShapeError("image " + image_path.string() + " and mask " + it->second.string() +
                       " differ in size");
    }
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<std::string> FoldManifest::ids_in_fold(int fold) const {
  std::vector<std::string> ids;
  for (const auto& [id, f] : assignment) {
    if (f == fold) ids.push_back(id);
  }
  return ids;
}

std::vector<std::string> FoldManifest::ids_outside_fold(int fold) const {
  std::vector<std::string> ids;
  for (const auto& [id, f] : assignment) {
    if (f != fold) ids.push_back(id);
  }
  return ids;
}

std::vector<std::size_t> FoldManifest::fold_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
  for (const auto& [id, f] : assignment) ++sizes[static_cast<std::size_t>(f)];
  return sizes;
}

FoldManifest make_folds(const std::vector<std::string>& ids, int k, uint64_t seed) {
  if (k < 2) throw ConfigError("fold count must be >= 2");
  if (static_cast<std::size_t>(k) > ids.size()) {
    throw ConfigError("fold count " + std::to_string(k) + " exceeds the " +
                      std::to_string(ids.size()) + " available samples");
  }
  std::vector<std::string> order = ids;
  std::sort(order.begin(), order.end());
  if (std::adjacent_find(order.begin(), order.end()) != order.end()) {
    throw DataError("sample ids must be unique");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  FoldManifest manifest;
  manifest.k = k;
  manifest.seed = seed;
  for (std::size_t i = 0; i < order.size(); ++i) {
    manifest.assignment[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  }
  return manifest;
}

FoldManifest make_folds(const std::vector<SampleRecord>& records, int k, uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(records.size());
  for (const auto& r : records) ids.push_back(r.id);
  return make_folds(ids, k, seed);
}

void save_manifest(const FoldManifest& manifest, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << "# k=" << manifest.k << " seed=" << manifest.seed << "\n";
  for (const auto& [id, fold] : manifest.assignment) out << id << '\t' << fold << '\n';
}

FoldManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read manifest " + path.string());
  std::string line;
  FoldManifest manifest;
  if (!std::getline(in, line) ||
      std::sscanf(line.c_str(), "# k=%d seed=%" SCNu64, &manifest.k, &manifest.seed) != 2) {
    throw DataError(path.string() + ": missing '# k=<k> seed=<seed>' header");
  }
  if (manifest.k < 2) throw DataError(path.string() + ": fold count must be >= 2");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected <id>\\t<fold>");
    }
    int fold = -1;
    try {
      std::size_t used = 0;
      fold = std::stoi(line.substr(tab + 1), &used);
      if (tab + 1 + used != line.size()) fold = -1;
    } catch (const std::exception&) {
      fold = -1;
    }
    if (fold < 0 || fold >= manifest.k) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": invalid fold index");
    }
    if (!manifest.assignment.emplace(line.substr(0, tab), fold).second) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": duplicate id");
    }
  }
  return manifest;
}

}  // namespace fusegnet
