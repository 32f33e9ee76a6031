#include "fusegnet/augment.hpp"

#include "fusegnet/error.hpp"

#include <opencv2/imgproc.hpp>

#include <cmath>
#include <numbers>
#include <random>

namespace fusegnet {

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  if (hi <= lo) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool bernoulli(Rng& rng, double p) { return uniform(rng, 0.0, 1.0) < p; }

struct KindInfo {
  TransformKind kind;
  const char* name;
  bool geometric;
};

constexpr KindInfo kKinds[] = {
    {TransformKind::HorizontalFlip, "horizontal_flip", true},
    {TransformKind::VerticalFlip, "vertical_flip", true},
    {TransformKind::Scale, "scale", true},
    {TransformKind::Rotate, "rotate", true},
    {TransformKind::Shift, "shift", true},
    {TransformKind::ShiftScaleRotate, "shift_scale_rotate", true},
    {TransformKind::Perspective, "perspective", true},
    {TransformKind::GaussianNoise, "gaussian_noise", false},
    {TransformKind::Sharpen, "sharpen", false},
    {TransformKind::Blur, "blur", false},
    {TransformKind::MotionBlur, "motion_blur", false},
    {TransformKind::Clahe, "clahe", false},
    {TransformKind::BrightnessContrast, "brightness_contrast", false},
    {TransformKind::Gamma, "gamma", false},
    {TransformKind::HueSaturation, "hue_saturation", false},
};

const KindInfo& info(TransformKind kind) {
  for (const auto& k : kKinds) {
    if (k.kind == kind) return k;
  }
  throw ConfigError("unknown transform kind");
}

// Rotation (degrees) and isotropic scale about the image centre plus a
// translation given as a fraction of the image size.
cv::Matx33d affine_homography(cv::Size size, double angle, double scale, double dx, double dy) {
  const cv::Point2f centre(static_cast<float>(size.width) / 2.0f - 0.5f,
                           static_cast<float>(size.height) / 2.0f - 0.5f);
  cv::Mat m = cv::getRotationMatrix2D(centre, angle, scale);
  m.at<double>(0, 2) += dx * size.width;
  m.at<double>(1, 2) += dy * size.height;
  return cv::Matx33d(m.at<double>(0, 0), m.at<double>(0, 1), m.at<double>(0, 2),
                     m.at<double>(1, 0), m.at<double>(1, 1), m.at<double>(1, 2), 0.0, 0.0, 1.0);
}

cv::Matx33d perspective_homography(cv::Size size, double scale_lo, double scale_hi, Rng& rng) {
  const double scale = uniform(rng, scale_lo, scale_hi);
  std::normal_distribution<double> jitter(0.0, scale);
  const double w = size.width - 1.0;
  const double h = size.height - 1.0;
  const cv::Point2f src[4] = {{0.0f, 0.0f}, {static_cast<float>(w), 0.0f},
                              {static_cast<float>(w), static_cast<float>(h)},
                              {0.0f, static_cast<float>(h)}};
  // Corners move inward by |N(0, scale)| of the image extent.
  const double sx[4] = {1.0, -1.0, -1.0, 1.0};
  const double sy[4] = {1.0, 1.0, -1.0, -1.0};
  cv::Point2f dst[4];
  for (int i = 0; i < 4; ++i) {
    const double ox = std::abs(jitter(rng)) * w;
    const double oy = std::abs(jitter(rng)) * h;
    dst[i] = cv::Point2f(static_cast<float>(src[i].x + sx[i] * ox),
                         static_cast<float>(src[i].y + sy[i] * oy));
  }
  cv::Mat m = cv::getPerspectiveTransform(src, dst);
  return cv::Matx33d(m);
}

int odd_kernel(Rng& rng, int limit) {
  limit = std::max(3, limit);
  if (limit % 2 == 0) --limit;
  const int choices = (limit - 3) / 2 + 1;
  return 3 + 2 * std::uniform_int_distribution<int>(0, choices - 1)(rng);
}

void gaussian_noise(cv::Mat& image, const TransformSpec& t, Rng& rng) {
  const double var = uniform(rng, t.param("var_min"), t.param("var_max"));
  std::normal_distribution<double> noise(0.0, std::sqrt(var));
  cv::Mat out(image.size(), image.type());
  for (int r = 0; r < image.rows; ++r) {
    const auto* src = image.ptr<cv::Vec3b>(r);
    auto* dst = out.ptr<cv::Vec3b>(r);
    for (int c = 0; c < image.cols; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        dst[c][ch] = cv::saturate_cast<uchar>(src[c][ch] + noise(rng));
      }
    }
  }
  image = out;
}

void sharpen(cv::Mat& image, const TransformSpec& t, Rng& rng) {
  const double alpha = uniform(rng, t.param("alpha_min"), t.param("alpha_max"));
  const double lightness = uniform(rng, t.param("lightness_min"), t.param("lightness_max"));
  cv::Matx33d identity(0, 0, 0, 0, 1, 0, 0, 0, 0);
  cv::Matx33d effect(-1, -1, -1, -1, 8 + lightness, -1, -1, -1, -1);
  cv::Matx33d kernel = (1.0 - alpha) * identity + alpha * effect;
  cv::filter2D(image, image, -1, cv::Mat(kernel));
}

void motion_blur(cv::Mat& image, const TransformSpec& t, Rng& rng) {
  const int k = odd_kernel(rng, static_cast<int>(t.param("limit")));
  cv::Mat kernel = cv::Mat::zeros(k, k, CV_32F);
  const double angle = uniform(rng, 0.0, std::numbers::pi);
  const double c = (k - 1) / 2.0;
  const double dx = std::cos(angle) * c;
  const double dy = std::sin(angle) * c;
  cv::line(kernel, cv::Point(cvRound(c - dx), cvRound(c - dy)),
           cv::Point(cvRound(c + dx), cvRound(c + dy)), cv::Scalar(1.0), 1);
  kernel /= cv::sum(kernel)[0];
  cv::filter2D(image, image, -1, kernel);
}

void clahe(cv::Mat& image, const TransformSpec& t, Rng& rng) {
  const double clip = uniform(rng, 1.0, t.param("clip_limit"));
  const int tiles = std::max(1, static_cast<int>(t.param("tile_grid")));
  cv::Mat lab;
  cv::cvtColor(image, lab, cv::COLOR_RGB2Lab);
  std::vector<cv::Mat> planes;
  cv::split(lab, planes);
  auto op = cv::createCLAHE(clip, cv::Size(tiles, tiles));
  op->apply(planes[0], planes[0]);
  cv::merge(planes, lab);
  cv::cvtColor(lab, image, cv::COLOR_Lab2RGB);
}

void brightness_contrast(cv::Mat& image, const TransformSpec& t, Rng& rng) {
  const double bl = t.param("brightness_limit");
  const double cl = t.param("contrast_limit");
  const double alpha = 1.0 + uniform(rng, -cl, cl);
  const double beta = uniform(rng, -bl, bl) * 255.0;
  image.convertTo(image, -1, alpha, beta);
}

void gamma(cv::Mat& image, const TransformSpec& t, Rng& rng) {
  const double g = uniform(rng, t.param("gamma_min"), t.param("gamma_max")) / 100.0;
  cv::Mat lut(1, 256, CV_8U);
  for (int i = 0; i < 256; ++i) {
    lut.at<uchar>(i) = cv::saturate_cast<uchar>(255.0 * std::pow(i / 255.0, g));
  }
  cv::LUT(image, lut, image);
}

void hue_saturation(cv::Mat& image, const TransformSpec& t, Rng& rng) {
  const double hue = uniform(rng, -t.param("hue_shift"), t.param("hue_shift"));
  const double sat = uniform(rng, -t.param("sat_shift"), t.param("sat_shift"));
  const double val = uniform(rng, -t.param("val_shift"), t.param("val_shift"));
  cv::Mat hsv;
  cv::cvtColor(image, hsv, cv::COLOR_RGB2HSV);
  // OpenCV 8-bit hue spans [0, 180); the shift is given in degrees.
  const int hue_steps = static_cast<int>(std::lround(hue / 2.0));
  for (int r = 0; r < hsv.rows; ++r) {
    auto* px = hsv.ptr<cv::Vec3b>(r);
    for (int c = 0; c < hsv.cols; ++c) {
      px[c][0] = static_cast<uchar>(((px[c][0] + hue_steps) % 180 + 180) % 180);
      px[c][1] = cv::saturate_cast<uchar>(px[c][1] + sat);
      px[c][2] = cv::saturate_cast<uchar>(px[c][2] + val);
    }
  }
  cv::cvtColor(hsv, image, cv::COLOR_HSV2RGB);
}

AppliedTransform sample_geometry(const TransformSpec& t, cv::Size size, Rng& rng) {
  AppliedTransform op;
  op.kind = t.kind;
  switch (t.kind) {
    case TransformKind::HorizontalFlip:
      op.flip_code = 1;
      break;
    case TransformKind::VerticalFlip:
      op.flip_code = 0;
      break;
    case TransformKind::Scale: {
      const double l = t.param("limit");
      op.homography = affine_homography(size, 0.0, 1.0 + uniform(rng, -l, l), 0.0, 0.0);
      break;
    }
    case TransformKind::Rotate: {
      const double l = t.param("limit");
      op.homography = affine_homography(size, uniform(rng, -l, l), 1.0, 0.0, 0.0);
      break;
    }
    case TransformKind::Shift: {
      const double l = t.param("limit");
      const double dx = uniform(rng, -l, l);
      const double dy = uniform(rng, -l, l);
      op.homography = affine_homography(size, 0.0, 1.0, dx, dy);
      break;
    }
    case TransformKind::ShiftScaleRotate: {
      const double sl = t.param("scale_limit");
      const double rl = t.param("rotate_limit");
      const double tl = t.param("shift_limit");
      const double angle = uniform(rng, -rl, rl);
      const double scale = 1.0 + uniform(rng, -sl, sl);
      const double dx = uniform(rng, -tl, tl);
      const double dy = uniform(rng, -tl, tl);
      op.homography = affine_homography(size, angle, scale, dx, dy);
      break;
    }
    case TransformKind::Perspective:
      op.homography = perspective_homography(size, t.param("scale_min"), t.param("scale_max"), rng);
      break;
    default:
      throw ContractError("not a geometric transform");
  }
  return op;
}

void apply_photometric(cv::Mat& image, const TransformSpec& t, Rng& rng) {
  switch (t.kind) {
    case TransformKind::GaussianNoise:
      gaussian_noise(image, t, rng);
      break;
    case TransformKind::Sharpen:
      sharpen(image, t, rng);
      break;
    case TransformKind::Blur: {
      const int k = odd_kernel(rng, static_cast<int>(t.param("limit")));
      cv::blur(image, image, cv::Size(k, k));
      break;
    }
    case TransformKind::MotionBlur:
      motion_blur(image, t, rng);
      break;
    case TransformKind::Clahe:
      clahe(image, t, rng);
      break;
    case TransformKind::BrightnessContrast:
      brightness_contrast(image, t, rng);
      break;
    case TransformKind::Gamma:
      gamma(image, t, rng);
      break;
    case TransformKind::HueSaturation:
      hue_saturation(image, t, rng);
      break;
    default:
      throw ContractError("not a photometric transform");
  }
}

}  // namespace

std::string to_string(TransformKind kind) { return info(kind).name; }

TransformKind transform_from_string(const std::string& name) {
  for (const auto& k : kKinds) {
    if (name == k.name) return k.kind;
  }
  throw ConfigError("unknown transform '" + name + "'");
}

bool is_geometric(TransformKind kind) { return info(kind).geometric; }

std::map<std::string, double> default_params(TransformKind kind) {
  switch (kind) {
    case TransformKind::HorizontalFlip:
    case TransformKind::VerticalFlip:
      return {};
    case TransformKind::Scale:
      return {{"limit", 0.5}};
    case TransformKind::Rotate:
      return {{"limit", 30.0}};
    case TransformKind::Shift:
      return {{"limit", 0.1}};
    case TransformKind::ShiftScaleRotate:
      return {{"scale_limit", 0.5}, {"rotate_limit", 30.0}, {"shift_limit", 0.1}};
    case TransformKind::Perspective:
      return {{"scale_min", 0.05}, {"scale_max", 0.1}};
    case TransformKind::GaussianNoise:
      return {{"var_min", 10.0}, {"var_max", 50.0}};
    case TransformKind::Sharpen:
      return {{"alpha_min", 0.2}, {"alpha_max", 0.5}, {"lightness_min", 0.5}, {"lightness_max", 1.0}};
    case TransformKind::Blur:
    case TransformKind::MotionBlur:
      return {{"limit", 3.0}};
    case TransformKind::Clahe:
      return {{"clip_limit", 4.0}, {"tile_grid", 8.0}};
    case TransformKind::BrightnessContrast:
      return {{"brightness_limit", 0.2}, {"contrast_limit", 0.2}};
    case TransformKind::Gamma:
      return {{"gamma_min", 80.0}, {"gamma_max", 120.0}};
    case TransformKind::HueSaturation:
      return {{"hue_shift", 20.0}, {"sat_shift", 30.0}, {"val_shift", 20.0}};
  }
  throw ConfigError("unknown transform kind");
}

double TransformSpec::param(const std::string& name) const {
  if (auto it = params.find(name); it != params.end()) return it->second;
  const auto defaults = default_params(kind);
  if (auto it = defaults.find(name); it != defaults.end()) return it->second;
  throw ConfigError(to_string(kind) + " has no parameter '" + name + "'");
}

AugmentationPlan AugmentationPlan::standard() {
  auto spec = [](TransformKind kind, double p) { return TransformSpec{kind, p, default_params(kind)}; };
  AugmentationPlan plan;
  plan.overall_p = 0.9;
  plan.sets = {
      {0.5, {spec(TransformKind::HorizontalFlip, 0.8), spec(TransformKind::VerticalFlip, 0.4)}},
      {0.9,
       {spec(TransformKind::Scale, 1.0), spec(TransformKind::Rotate, 1.0),
        spec(TransformKind::Shift, 1.0), spec(TransformKind::ShiftScaleRotate, 1.0)}},
      {0.2,
       {spec(TransformKind::Perspective, 1.0), spec(TransformKind::GaussianNoise, 1.0),
        spec(TransformKind::Sharpen, 1.0), spec(TransformKind::Blur, 1.0),
        spec(TransformKind::MotionBlur, 1.0)}},
      {0.2,
       {spec(TransformKind::Clahe, 1.0), spec(TransformKind::BrightnessContrast, 1.0),
        spec(TransformKind::Gamma, 1.0), spec(TransformKind::HueSaturation, 1.0)}},
  };
  return plan;
}

AugmentationPlan AugmentationPlan::none() {
  AugmentationPlan plan;
  plan.overall_p = 0.0;
  return plan;
}

void validate(const AugmentationPlan& plan) {
  auto check_p = [](double p, const std::string& where) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(where + " probability must lie in [0, 1]");
  };
  check_p(plan.overall_p, "augmentation.overall_p");
  for (std::size_t s = 0; s < plan.sets.size(); ++s) {
    const std::string where = "augmentation.sets[" + std::to_string(s) + "]";
    check_p(plan.sets[s].p, where);
    if (plan.sets[s].transforms.empty()) throw ConfigError(where + " has no transforms");
    for (const auto& t : plan.sets[s].transforms) {
      const std::string name = where + "." + to_string(t.kind);
      check_p(t.p, name);
      const auto defaults = default_params(t.kind);
      for (const auto& [key, value] : t.params) {
        if (!defaults.contains(key)) throw ConfigError(name + ": unknown parameter '" + key + "'");
        if (!std::isfinite(value) || value < 0.0) {
          throw ConfigError(name + "." + key + " must be finite and non-negative");
        }
      }
    }
  }
}

std::size_t AugmentationTrace::geometric_count() const {
  std::size_t n = 0;
  for (const auto& op : applied) n += is_geometric(op.kind) ? 1 : 0;
  return n;
}

cv::Mat apply_geometry(const cv::Mat& input, const AppliedTransform& op, bool nearest) {
  cv::Mat out;
  if (op.kind == TransformKind::HorizontalFlip || op.kind == TransformKind::VerticalFlip) {
    cv::flip(input, out, op.flip_code);
    return out;
  }
  cv::warpPerspective(input, out, cv::Mat(op.homography), input.size(),
                      nearest ? cv::INTER_NEAREST : cv::INTER_LINEAR, cv::BORDER_CONSTANT,
                      cv::Scalar::all(0));
  return out;
}

SampleRecord augment(const SampleRecord& record, const AugmentationPlan& plan, uint64_t seed,
                     AugmentationTrace* trace) {
  Rng rng(seed);
  AugmentationTrace local;
  SampleRecord out{record.id, record.image.clone(), record.mask.clone()};

  local.gate_passed = bernoulli(rng, plan.overall_p);
  if (local.gate_passed) {
    for (const auto& set : plan.sets) {
      if (!bernoulli(rng, set.p) || set.transforms.empty()) continue;
      const auto pick = std::uniform_int_distribution<std::size_t>(0, set.transforms.size() - 1)(rng);
      const auto& t = set.transforms[pick];
      if (!bernoulli(rng, t.p)) continue;
      if (is_geometric(t.kind)) {
        auto op = sample_geometry(t, out.image.size(), rng);
        out.image = apply_geometry(out.image, op, false);
        out.mask = apply_geometry(out.mask, op, true);
        local.applied.push_back(op);
      } else {
        apply_photometric(out.image, t, rng);
        local.applied.push_back(AppliedTransform{t.kind, 0, cv::Matx33d::eye()});
      }
    }
  }
  if (trace != nullptr) *trace = std::move(local);
  return out;
}

cv::Mat replay_geometry(const cv::Mat& mask, const AugmentationTrace& trace) {
  cv::Mat out = mask.clone();
  for (const auto& op : trace.applied) {
    if (is_geometric(op.kind)) out = apply_geometry(out, op, true);
  }
  return out;
}

uint64_t derive_seed(uint64_t global_seed, const std::string& sample_id, uint64_t epoch) {
  // FNV-1a over the id, mixed with splitmix64.
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : sample_id) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  uint64_t z = global_seed ^ h ^ (epoch * 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace fusegnet
