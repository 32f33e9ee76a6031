#include "fusegnet/metrics.hpp"

#include "fusegnet/error.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace fusegnet {

namespace {

void check_binary(const cv::Mat& m, const char* what) {
  if (m.empty() || m.type() != CV_8UC1) {
    throw DataError(std::string(what) + " must be a non-empty 8-bit single-channel mask");
  }
  double lo = 0.0;
  double hi = 0.0;
  cv::minMaxLoc(m, &lo, &hi);
  if (hi > 1.0) throw DataError(std::string(what) + " is not binary (values must be 0 or 1)");
}

double ratio(int64_t num, int64_t den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

// 1-D lower-envelope squared distance transform (Felzenszwalb-Huttenlocher).
void edt_1d(const double* f, double* d, int n, std::vector<int>& v, std::vector<double>& z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (std::isinf(f[q])) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    auto intersect = [&](int p) {
      return ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) /
             (2.0 * (q - p));
    };
    double s = intersect(v[static_cast<std::size_t>(k)]);
    while (s <= z[static_cast<std::size_t>(k)]) {  // z[0] is -inf, so k stays >= 0
      --k;
      s = intersect(v[static_cast<std::size_t>(k)]);
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = inf;
  }
  if (k < 0) {
    std::fill(d, d + n, inf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(j) + 1] < q) ++j;
    const int p = v[static_cast<std::size_t>(j)];
    d[q] = static_cast<double>(q - p) * (q - p) + f[p];
  }
}

cv::Mat to_double(const cv::Mat& mask) {
  cv::Mat out;
  mask.convertTo(out, CV_64F);
  return out;
}

}  // namespace

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  fp += o.fp;
  tn += o.tn;
  fn += o.fn;
  return *this;
}

ConfusionCounts confusion_counts(const cv::Mat& pred, const cv::Mat& gt) {
  if (pred.size() != gt.size()) throw ShapeError("prediction and ground truth sizes differ");
  check_binary(pred, "prediction");
  check_binary(gt, "ground truth");
  ConfusionCounts c;
  for (int r = 0; r < pred.rows; ++r) {
    const uchar* p = pred.ptr<uchar>(r);
    const uchar* g = gt.ptr<uchar>(r);
    for (int col = 0; col < pred.cols; ++col) {
      if (p[col] != 0) {
        (g[col] != 0 ? c.tp : c.fp) += 1;
      } else {
        (g[col] != 0 ? c.fn : c.tn) += 1;
      }
    }
  }
  return c;
}

MetricTuple scores(const ConfusionCounts& c) {
  return MetricTuple{ratio(c.tp, c.tp + c.fp), ratio(c.tp, c.tp + c.fn),
                     ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn), ratio(c.tp, c.tp + c.fp + c.fn)};
}

MetricTuple data_based_metrics(const std::vector<ConfusionCounts>& counts) {
  if (counts.empty()) throw ContractError("data-based metrics need at least one image");
  ConfusionCounts total;
  for (const auto& c : counts) total += c;
  return scores(total);
}

MetricTuple image_based_metrics(const std::vector<ConfusionCounts>& counts) {
  if (counts.empty()) throw ContractError("image-based metrics need at least one image");
  MetricTuple sum;
  for (const auto& c : counts) {
    const auto s = scores(c);
    sum.precision += s.precision;
    sum.recall += s.recall;
    sum.dsc += s.dsc;
    sum.iou += s.iou;
  }
  const double n = static_cast<double>(counts.size());
  return MetricTuple{sum.precision / n, sum.recall / n, sum.dsc / n, sum.iou / n};
}

cv::Mat canny_edges(const cv::Mat& mask, const CannySettings& settings) {
  check_binary(mask, "mask");
  cv::Mat image = to_double(mask);

  if (settings.sigma > 0.0) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * settings.sigma)));
    cv::Mat kernel(2 * radius + 1, 1, CV_64F);
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
      const double w = std::exp(-(i * i) / (2.0 * settings.sigma * settings.sigma));
      kernel.at<double>(i + radius) = w;
      total += w;
    }
    kernel /= total;
    cv::sepFilter2D(image, image, CV_64F, kernel, kernel, cv::Point(-1, -1), 0.0,
                    cv::BORDER_REPLICATE);
  }

  cv::Mat gx;
  cv::Mat gy;
  cv::Sobel(image, gx, CV_64F, 1, 0, 3, 1.0, 0.0, cv::BORDER_REPLICATE);
  cv::Sobel(image, gy, CV_64F, 0, 1, 3, 1.0, 0.0, cv::BORDER_REPLICATE);
  cv::Mat magnitude;
  cv::magnitude(gx, gy, magnitude);

  double max_mag = 0.0;
  cv::minMaxLoc(magnitude, nullptr, &max_mag);
  cv::Mat edges = cv::Mat::zeros(mask.size(), CV_8UC1);
  if (max_mag <= 0.0) return edges;
  const double high = settings.high_ratio * max_mag;
  const double low = settings.low_ratio * max_mag;

  const int rows = mask.rows;
  const int cols = mask.cols;
  auto mag = [&](int r, int c) {
    if (r < 0 || c < 0 || r >= rows || c >= cols) return 0.0;
    return magnitude.at<double>(r, c);
  };

  // Non-maximum suppression; ties go to the first pixel along the gradient
  // on the horizontal and vertical axes, diagonals need a strict maximum.
  const double tan22 = std::tan(CV_PI / 8.0);
  const double tan67 = std::tan(3.0 * CV_PI / 8.0);
  cv::Mat state = cv::Mat::zeros(mask.size(), CV_8UC1);  // 0 none, 1 weak, 2 strong
  std::vector<cv::Point> stack;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double m = magnitude.at<double>(r, c);
      if (m <= low) continue;
      const double ax = std::abs(gx.at<double>(r, c));
      const double ay = std::abs(gy.at<double>(r, c));
      bool keep = false;
      if (ay <= tan22 * ax) {
        keep = m > mag(r, c - 1) && m >= mag(r, c + 1);
      } else if (ay >= tan67 * ax) {
        keep = m > mag(r - 1, c) && m >= mag(r + 1, c);
      } else {
        const bool same_sign = (gx.at<double>(r, c) * gy.at<double>(r, c)) > 0.0;
        keep = same_sign ? (m > mag(r - 1, c - 1) && m > mag(r + 1, c + 1))
                         : (m > mag(r - 1, c + 1) && m > mag(r + 1, c - 1));
      }
      if (!keep) continue;
      if (m > high) {
        state.at<uchar>(r, c) = 2;
        stack.emplace_back(c, r);
      } else {
        state.at<uchar>(r, c) = 1;
      }
    }
  }

  // Hysteresis: weak pixels 8-connected to a strong one survive.
  while (!stack.empty()) {
    const cv::Point p = stack.back();
    stack.pop_back();
    edges.at<uchar>(p) = 1;
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        const int r = p.y + dr;
        const int c = p.x + dc;
        if (r < 0 || c < 0 || r >= rows || c >= cols) continue;
        if (state.at<uchar>(r, c) == 1) {
          state.at<uchar>(r, c) = 2;
          stack.emplace_back(c, r);
        }
      }
    }
  }
  return edges;
}

BoundarySet extract_boundary(const cv::Mat& mask, const CannySettings& settings) {
  const cv::Mat edges = canny_edges(mask, settings);
  BoundarySet points;
  for (int r = 0; r < edges.rows; ++r) {
    const uchar* e = edges.ptr<uchar>(r);
    for (int c = 0; c < edges.cols; ++c) {
      if (e[c] != 0) points.emplace_back(c, r);
    }
  }
  return points;
}

cv::Mat squared_distance_transform(const cv::Mat& features) {
  if (features.empty() || features.type() != CV_8UC1) {
    throw DataError("distance transform input must be an 8-bit single-channel map");
  }
  constexpr double inf = std::numeric_limits<double>::infinity();
  const int rows = features.rows;
  const int cols = features.cols;
  cv::Mat f(rows, cols, CV_64F);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) f.at<double>(r, c) = features.at<uchar>(r, c) != 0 ? 0.0 : inf;
  }
  const int n = std::max(rows, cols);
  std::vector<int> v(static_cast<std::size_t>(n));
  std::vector<double> z(static_cast<std::size_t>(n) + 1);
  std::vector<double> in(static_cast<std::size_t>(n));
  std::vector<double> out(static_cast<std::size_t>(n));

  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) in[static_cast<std::size_t>(r)] = f.at<double>(r, c);
    edt_1d(in.data(), out.data(), rows, v, z);
    for (int r = 0; r < rows; ++r) f.at<double>(r, c) = out[static_cast<std::size_t>(r)];
  }
  for (int r = 0; r < rows; ++r) {
    double* row = f.ptr<double>(r);
    std::copy(row, row + cols, in.begin());
    edt_1d(in.data(), out.data(), cols, v, z);
    std::copy(out.begin(), out.begin() + cols, row);
  }
  return f;
}

double pfom(const BoundarySet& gt_boundary, const BoundarySet& pred_boundary, double beta) {
  if (!(beta > 0.0)) throw ContractError("PFOM beta must be positive");
  if (gt_boundary.empty() || pred_boundary.empty()) return kPfomSentinel;
  int width = 0;
  int height = 0;
  for (const auto* set : {&gt_boundary, &pred_boundary}) {
    for (const auto& p : *set) {
      if (p.x < 0 || p.y < 0) throw ContractError("boundary coordinates must be non-negative");
      width = std::max(width, p.x + 1);
      height = std::max(height, p.y + 1);
    }
  }
  cv::Mat features = cv::Mat::zeros(height, width, CV_8UC1);
  for (const auto& p : gt_boundary) features.at<uchar>(p) = 1;
  const cv::Mat dist2 = squared_distance_transform(features);
  double sum = 0.0;
  for (const auto& p : pred_boundary) sum += 1.0 / (1.0 + beta * dist2.at<double>(p));
  return sum / static_cast<double>(std::max(gt_boundary.size(), pred_boundary.size()));
}

double pfom(const cv::Mat& pred, const cv::Mat& gt, double beta, const CannySettings& settings) {
  if (pred.size() != gt.size()) throw ShapeError("prediction and ground truth sizes differ");
  return pfom(extract_boundary(gt, settings), extract_boundary(pred, settings), beta);
}

std::string CategorySpec::label(int category) const {
  std::ostringstream out;
  if (category == 1) return "0";
  const int n = category_count();
  if (category < 1 || category > n) throw ContractError("category out of range");
  if (category == 2) {
    out << "(0, " << thresholds.front() << ")";
  } else if (category == n) {
    out << "[" << thresholds.back() << ", 100]";
  } else {
    out << "[" << thresholds[static_cast<std::size_t>(category - 3)] << ", "
        << thresholds[static_cast<std::size_t>(category - 2)] << ")";
  }
  return out.str();
}

void validate(const CategorySpec& spec) {
  if (spec.thresholds.size() != 8) {
    throw ConfigError("categories.thresholds must hold 8 edges (10 categories)");
  }
  double prev = 0.0;
  for (std::size_t i = 0; i < spec.thresholds.size(); ++i) {
    const double t = spec.thresholds[i];
    if (!std::isfinite(t) || t <= prev || t >= 100.0) {
      throw ConfigError("categories.thresholds[" + std::to_string(i) +
                        "] must be strictly ascending within (0, 100)");
    }
    prev = t;
  }
}

double gt_area_percent(const cv::Mat& gt) {
  check_binary(gt, "ground truth");
  return 100.0 * static_cast<double>(cv::countNonZero(gt)) / static_cast<double>(gt.total());
}

int categorize_percent(double percent, const CategorySpec& spec) {
  if (percent <= 0.0) return 1;
  int category = 2;
  for (double t : spec.thresholds) {
    if (percent < t) return category;
    ++category;
  }
  return category;
}

int categorize(const cv::Mat& gt, const CategorySpec& spec) {
  check_binary(gt, "ground truth");
  if (cv::countNonZero(gt) == 0) return 1;
  return categorize_percent(gt_area_percent(gt), spec);
}

int64_t category1_fp_count(const cv::Mat& pred) {
  check_binary(pred, "prediction");
  return cv::countNonZero(pred);
}

}  // namespace fusegnet
