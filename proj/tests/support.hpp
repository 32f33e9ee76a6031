#pragma once

// Test helpers: synthetic wound-like samples, dataset directories and
// scratch directories.

#include "fusegnet/dataio.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <filesystem>
#include <random>
#include <string>

namespace fusegnet::testing {

// Reddish ellipse on a noisy green-grey background; the mask marks the
// ellipse.
inline SampleRecord synthetic_sample(const std::string& id, int size, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 12.0);
  SampleRecord r;
  r.id = id;
  r.mask = cv::Mat::zeros(size, size, CV_8UC1);
  const cv::Point centre(static_cast<int>(size * (0.3 + 0.4 * unit(rng))),
                         static_cast<int>(size * (0.3 + 0.4 * unit(rng))));
  const cv::Size axes(static_cast<int>(size * (0.12 + 0.15 * unit(rng))),
                      static_cast<int>(size * (0.12 + 0.15 * unit(rng))));
  cv::ellipse(r.mask, centre, axes, 360.0 * unit(rng), 0, 360, cv::Scalar(1), cv::FILLED);
  r.image = cv::Mat(size, size, CV_8UC3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const bool fg = r.mask.at<uchar>(y, x) != 0;
      const double base[3] = {fg ? 190.0 : 90.0, fg ? 60.0 : 130.0, fg ? 70.0 : 100.0};
      auto& px = r.image.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) px[c] = cv::saturate_cast<uchar>(base[c] + noise(rng));
    }
  }
  return r;
}

inline std::vector<SampleRecord> synthetic_dataset(int count, int size, uint64_t seed) {
  std::vector<SampleRecord> records;
  for (int i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "s%03d", i);
    records.push_back(synthetic_sample(id, size, seed * 1000 + static_cast<uint64_t>(i)));
  }
  return records;
}

// Writes images/<id>.png (RGB) and masks/<id>.png (0/255) under root.
inline void write_dataset(const std::vector<SampleRecord>& records,
                          const std::filesystem::path& root) {
  std::filesystem::create_directories(root / "images");
  std::filesystem::create_directories(root / "masks");
  for (const auto& r : records) {
    cv::Mat bgr;
    cv::cvtColor(r.image, bgr, cv::COLOR_RGB2BGR);
    cv::imwrite((root / "images" / (r.id + ".png")).string(), bgr);
    write_mask_png(root / "masks" / (r.id + ".png"), r.mask);
  }
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("fusegnet_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fusegnet::testing
