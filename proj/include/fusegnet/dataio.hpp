#pragma once

// Dataset ingestion: image/mask directory pairing, mask binarization, PNG
// output helpers and deterministic k-fold manifests.

#include <opencv2/core.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fusegnet {

struct SampleRecord {
  std::string id;
  cv::Mat image;  // CV_8UC3, RGB channel order
  cv::Mat mask;   // CV_8UC1, values in {0, 1}
};

// Throws DataError/ShapeError if the record breaks its invariants.
void validate(const SampleRecord& record);

bool is_image_file(const std::filesystem::path& path);
// Image files in a directory keyed by filename stem, in lexicographic order.
std::map<std::string, std::filesystem::path> list_images(const std::filesystem::path& dir);

cv::Mat read_rgb_image(const std::filesystem::path& path);
// 8-bit grayscale mask binarized at 128 -> {0, 1}.
cv::Mat read_binary_mask(const std::filesystem::path& path);
// {0, 1} mask written as 8-bit PNG with foreground 255.
void write_mask_png(const std::filesystem::path& path, const cv::Mat& mask);
// Probabilities in [0, 1] (CV_32F or CV_64F) written as 16-bit PNG scaled by 65535.
void write_probability_png(const std::filesystem::path& path, const cv::Mat& probabilities);

// Pairs each image with the mask of the same stem; sorted by id.
std::vector<SampleRecord> load_dataset(const std::filesystem::path& images_dir,
                                       const std::filesystem::path& masks_dir);

struct FoldManifest {
  int k = 5;
  uint64_t seed = 0;
  std::map<std::string, int> assignment;  // sample id -> fold index

  std::vector<std::string> ids_in_fold(int fold) const;
  std::vector<std::string> ids_outside_fold(int fold) const;
  std::vector<std::size_t> fold_sizes() const;
};

FoldManifest make_folds(const std::vector<std::string>& ids, int k, uint64_t seed);
FoldManifest make_folds(const std::vector<SampleRecord>& records, int k, uint64_t seed);

// Plain-text table: "# k=<k> seed=<seed>" header, then "<id>\t<fold>" rows.
void save_manifest(const FoldManifest& manifest, const std::filesystem::path& path);
FoldManifest load_manifest(const std::filesystem::path& path);

}  // namespace fusegnet
