#include "fusegnet/augment.hpp"
#include "fusegnet/error.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace fusegnet;
using namespace fusegnet::testing;

namespace {

bool is_binary(const cv::Mat& m) {
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) {
      const auto v = m.at<uchar>(y, x);
      if (v != 0 && v != 1) return false;
    }
  }
  return true;
}

bool same(const cv::Mat& a, const cv::Mat& b) {
  return a.size() == b.size() && a.type() == b.type() && cv::norm(a, b, cv::NORM_INF) == 0.0;
}

AugmentationPlan single(TransformKind kind, double set_p = 1.0) {
  AugmentationPlan plan;
  plan.overall_p = 1.0;
  plan.sets = {{set_p, {TransformSpec{kind, 1.0, default_params(kind)}}}};
  return plan;
}

}  // namespace

TEST(Augment, StandardPlanKeepsMaskBinaryAndAligned) {
  const auto plan = AugmentationPlan::standard();
  const auto sample = synthetic_sample("a", 32, 3);
  int altered = 0;
  for (uint64_t seed = 0; seed < 1000; ++seed) {
    AugmentationTrace trace;
    const auto out = augment(sample, plan, seed, &trace);
    ASSERT_EQ(out.image.size(), sample.image.size());
    ASSERT_EQ(out.image.type(), CV_8UC3);
    ASSERT_EQ(out.mask.type(), CV_8UC1);
    ASSERT_TRUE(is_binary(out.mask)) << "seed " << seed;
    // the mask must equal the original mask pushed through the same geometry
    ASSERT_TRUE(same(out.mask, replay_geometry(sample.mask, trace))) << "seed " << seed;
    if (!trace.identity()) ++altered;
  }
  EXPECT_GT(altered, 800);
}

TEST(Augment, DeterministicInSeed) {
  const auto plan = AugmentationPlan::standard();
  const auto sample = synthetic_sample("d", 32, 4);
  for (uint64_t seed : {0ULL, 1ULL, 99ULL, 123456789ULL}) {
    const auto a = augment(sample, plan, seed);
    const auto b = augment(sample, plan, seed);
    EXPECT_TRUE(same(a.image, b.image));
    EXPECT_TRUE(same(a.mask, b.mask));
  }
}

TEST(Augment, PhotometricTransformsLeaveMaskUntouched) {
  const auto sample = synthetic_sample("p", 32, 5);
  for (auto kind : {TransformKind::GaussianNoise, TransformKind::Sharpen, TransformKind::Blur,
                    TransformKind::MotionBlur, TransformKind::Clahe,
                    TransformKind::BrightnessContrast, TransformKind::Gamma,
                    TransformKind::HueSaturation}) {
    ASSERT_FALSE(is_geometric(kind));
    for (uint64_t seed = 0; seed < 20; ++seed) {
      AugmentationTrace trace;
      const auto out = augment(sample, single(kind), seed, &trace);
      EXPECT_TRUE(same(out.mask, sample.mask)) << to_string(kind);
      EXPECT_EQ(trace.geometric_count(), 0u);
    }
  }
}

TEST(Augment, GeometricTransformsMoveImageAndMask) {
  const auto sample = synthetic_sample("g", 32, 6);
  for (auto kind : {TransformKind::HorizontalFlip, TransformKind::VerticalFlip,
                    TransformKind::Scale, TransformKind::Rotate, TransformKind::Shift,
                    TransformKind::ShiftScaleRotate, TransformKind::Perspective}) {
    ASSERT_TRUE(is_geometric(kind));
    AugmentationTrace trace;
    const auto out = augment(sample, single(kind), 7, &trace);
    ASSERT_EQ(trace.applied.size(), 1u) << to_string(kind);
    EXPECT_EQ(trace.applied[0].kind, kind);
    EXPECT_TRUE(is_binary(out.mask));
    EXPECT_TRUE(same(out.mask, replay_geometry(sample.mask, trace))) << to_string(kind);
  }
}

TEST(Augment, NonePlanAndZeroGateAreIdentity) {
  const auto sample = synthetic_sample("n", 32, 7);
  auto gated = AugmentationPlan::standard();
  gated.overall_p = 0.0;
  for (uint64_t seed = 0; seed < 50; ++seed) {
    for (const auto& plan : {AugmentationPlan::none(), gated}) {
      AugmentationTrace trace;
      const auto out = augment(sample, plan, seed, &trace);
      EXPECT_TRUE(trace.identity());
      EXPECT_TRUE(same(out.image, sample.image));
      EXPECT_TRUE(same(out.mask, sample.mask));
    }
  }
}

TEST(Augment, IdentityTraceReproducesInput) {
  // seeds where the standard plan does nothing return the input bit for bit
  const auto plan = AugmentationPlan::standard();
  const auto sample = synthetic_sample("i", 32, 8);
  int identities = 0;
  for (uint64_t seed = 0; seed < 300; ++seed) {
    AugmentationTrace trace;
    const auto out = augment(sample, plan, seed, &trace);
    if (trace.identity()) {
      ++identities;
      EXPECT_TRUE(same(out.image, sample.image));
      EXPECT_TRUE(same(out.mask, sample.mask));
    }
  }
  EXPECT_GT(identities, 0);
}

TEST(Augment, FlipIsAnInvolution) {
  const auto sample = synthetic_sample("f", 32, 9);
  for (int code : {0, 1}) {
    AppliedTransform op;
    op.kind = code == 1 ? TransformKind::HorizontalFlip : TransformKind::VerticalFlip;
    op.flip_code = code;
    const auto twice = apply_geometry(apply_geometry(sample.image, op, false), op, false);
    EXPECT_TRUE(same(twice, sample.image));
    const auto mask_twice = apply_geometry(apply_geometry(sample.mask, op, true), op, true);
    EXPECT_TRUE(same(mask_twice, sample.mask));
  }
}

TEST(Augment, RotationFrequencyMatchesPlan) {
  // P(rotate) = overall 0.9 * set 0.9 * pick 1/4 * p 1.0
  const auto plan = AugmentationPlan::standard();
  const auto sample = synthetic_sample("r", 8, 10);
  const int trials = 10000;
  int rotations = 0;
  for (int seed = 0; seed < trials; ++seed) {
    AugmentationTrace trace;
    augment(sample, plan, derive_seed(1, "r", static_cast<uint64_t>(seed)), &trace);
    for (const auto& op : trace.applied) {
      if (op.kind == TransformKind::Rotate) ++rotations;
    }
  }
  const double expected = trials * 0.9 * 0.9 * 0.25;
  EXPECT_NEAR(rotations, expected, 0.05 * expected);
}

TEST(AugmentPlan, Validation) {
  EXPECT_NO_THROW(validate(AugmentationPlan::standard()));
  EXPECT_NO_THROW(validate(AugmentationPlan::none()));
  auto plan = AugmentationPlan::standard();
  plan.overall_p = 1.2;
  EXPECT_THROW(validate(plan), ConfigError);
  plan = AugmentationPlan::standard();
  plan.sets[1].transforms[0].params["bogus"] = 1.0;
  EXPECT_THROW(validate(plan), ConfigError);
  plan = AugmentationPlan::standard();
  plan.sets[2].transforms.clear();
  EXPECT_THROW(validate(plan), ConfigError);
  plan = AugmentationPlan::standard();
  plan.sets[0].transforms[0].p = -0.1;
  EXPECT_THROW(validate(plan), ConfigError);
}

TEST(AugmentPlan, TransformNamesRoundTrip) {
  for (int k = 0; k <= static_cast<int>(TransformKind::HueSaturation); ++k) {
    const auto kind = static_cast<TransformKind>(k);
    EXPECT_EQ(transform_from_string(to_string(kind)), kind);
  }
  EXPECT_THROW(transform_from_string("elastic"), ConfigError);
}

TEST(DeriveSeed, DependsOnEveryInput) {
  std::set<uint64_t> seen;
  for (uint64_t g : {0ULL, 1ULL}) {
    for (const char* id : {"a", "b", "s000"}) {
      for (uint64_t e : {0ULL, 1ULL, 2ULL}) EXPECT_TRUE(seen.insert(derive_seed(g, id, e)).second);
    }
  }
  EXPECT_EQ(derive_seed(5, "x", 3), derive_seed(5, "x", 3));
}
