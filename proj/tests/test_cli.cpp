#include "fusegnet/cli.hpp"
#include "fusegnet/config.hpp"
#include "fusegnet/dataio.hpp"
#include "fusegnet/ensemble.hpp"
#include "fusegnet/trainer.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace fusegnet;
using namespace fusegnet::testing;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int status = 0;
  std::string out;
  std::string err;
};

CliResult run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  CliResult r;
  r.status = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const fs::path& p) {
  std::ifstream in(p);
  int n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

// Dataset of `count` 64x64 samples plus a config training for `epochs`.
fs::path make_project(const std::string& name, int count, int epochs) {
  const auto root = scratch_dir(name);
  write_dataset(synthetic_dataset(count, 64, 21), root / "data");
  Json cfg = Json::parse(R"({
    "schema_version": 1,
    "seed": 5,
    "output_dir": "runs",
    "data": {"images_dir": "data/images", "masks_dir": "data/masks", "folds": 5},
    "network": {"encoder": "efficientnet-b0", "input_size": 64},
    "augmentation": "none"
  })");
  cfg["train"] = {{"max_epochs", epochs}};
  std::ofstream(root / "run.json") << cfg.dump(2);
  return root;
}

cv::Mat read_mask_raw(const fs::path& p) { return cv::imread(p.string(), cv::IMREAD_UNCHANGED); }

}  // namespace

TEST(Cli, NoArgumentsAndUnknownCommandsFail) {
  EXPECT_NE(run({}).status, 0);
  EXPECT_NE(run({"dance"}).status, 0);
  EXPECT_NE(run({"predict", "--images", "x", "--out", "y"}).status, 0);  // missing --checkpoint
  EXPECT_EQ(run({"--help"}).status, 0);
}

TEST(Cli, MissingMasksDirectoryIsNamed) {
  const auto root = make_project("cli_missing", 2, 1);
  fs::remove_all(root / "data" / "masks");
  const auto r = run({"train", "--config", (root / "run.json").string()});
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.err.find("data/masks"), std::string::npos) << r.err;
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u);
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
}

TEST(Cli, BadConfigIsNamed) {
  const auto root = scratch_dir("cli_badcfg");
  std::ofstream(root / "run.json") << R"({"schema_version": 1, "trian": {}})";
  const auto r = run({"train", "--config", (root / "run.json").string()});
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.err.find("trian"), std::string::npos);
}

TEST(Cli, TrainHoldoutWritesCheckpointAndLog) {
  const auto root = make_project("cli_train", 4, 2);
  const auto r = run({"train", "--config", (root / "run.json").string()});
  ASSERT_EQ(r.status, 0) << r.err;
  const auto dir = root / "runs" / "holdout";
  EXPECT_TRUE(fs::exists(dir / "checkpoint.pt"));
  EXPECT_TRUE(fs::exists(dir / "checkpoint.pt.json"));
  EXPECT_EQ(count_lines(dir / "epochs.csv"), 3);  // header + 2 epochs
  EXPECT_TRUE(fs::exists(root / "runs" / "config.json"));
  EXPECT_FALSE(load_checkpoint_record(dir / "checkpoint.pt").fold.has_value());
}

TEST(Cli, TrainSingleFoldRecordsFold) {
  const auto root = make_project("cli_fold", 5, 1);
  const auto out = root / "elsewhere";
  const auto r = run({"train", "--config", (root / "run.json").string(), "--fold", "3", "--out",
                      out.string()});
  ASSERT_EQ(r.status, 0) << r.err;
  const auto record = load_checkpoint_record(out / "fold3" / "checkpoint.pt");
  EXPECT_EQ(record.fold, std::optional<int>(3));
  const auto manifest = load_manifest(out / "folds.tsv");
  EXPECT_EQ(manifest.k, 5);
  EXPECT_EQ(manifest.assignment.size(), 5u);
  EXPECT_NE(run({"train", "--config", (root / "run.json").string(), "--fold", "7", "--out",
                 out.string()})
                .status,
            0);
}

TEST(Cli, PredictMatchesLibraryForOneAndManyCheckpoints) {
  const auto root = scratch_dir("cli_predict");
  const auto samples = synthetic_dataset(2, 64, 22);
  write_dataset(samples, root / "data");
  NetworkConfig cfg;
  cfg.encoder_name = "efficientnet-b0";
  cfg.input_size = 64;
  std::vector<fs::path> ckpts;
  for (uint64_t s = 0; s < 3; ++s) {
    torch::manual_seed(s);
    FUSegNet net(cfg);
    CheckpointRecord rec;
    rec.network = cfg;
    ckpts.push_back(root / ("m" + std::to_string(s) + ".pt"));
    save_checkpoint(net, rec, ckpts.back());
  }

  const auto one = run({"predict", "--checkpoint", ckpts[0].string(), "--images",
                        (root / "data" / "images").string(), "--out", (root / "one").string()});
  ASSERT_EQ(one.status, 0) << one.err;
  const auto many = run({"predict", "--checkpoint", ckpts[0].string(), "--checkpoint",
                         ckpts[1].string(), "--checkpoint", ckpts[2].string(), "--images",
                         (root / "data" / "images").string(), "--out", (root / "many").string(),
                         "--prob-maps"});
  ASSERT_EQ(many.status, 0) << many.err;

  const auto bundle_one = load_bundle({ckpts[0]});
  const auto bundle_many = load_bundle(ckpts);
  for (const auto& s : samples) {
    cv::Mat expected_one = binarize(ensemble_predict(bundle_one, s.image)) * 255;
    cv::Mat prob = ensemble_predict(bundle_many, s.image);
    cv::Mat expected_many = binarize(prob) * 255;
    EXPECT_EQ(cv::norm(read_mask_raw(root / "one" / (s.id + ".png")), expected_one, cv::NORM_INF), 0.0);
    EXPECT_EQ(cv::norm(read_mask_raw(root / "many" / (s.id + ".png")), expected_many, cv::NORM_INF), 0.0);
    const auto p16 = read_mask_raw(root / "many" / "prob" / (s.id + ".png"));
    ASSERT_EQ(p16.type(), CV_16UC1);
    cv::Mat back;
    p16.convertTo(back, CV_32F, 1.0 / 65535.0);
    EXPECT_LT(cv::norm(back, prob, cv::NORM_INF), 1.0 / 65535.0);
  }
  EXPECT_FALSE(fs::exists(root / "one" / "prob"));
}

TEST(Cli, PredictRejectsMismatchedCheckpointsBeforeWriting) {
  const auto root = scratch_dir("cli_mismatch");
  write_dataset(synthetic_dataset(1, 64, 23), root / "data");
  NetworkConfig a;
  a.encoder_name = "efficientnet-b0";
  a.input_size = 64;
  NetworkConfig b = a;
  b.pre_block = true;
  for (const auto& [cfg, name] : {std::pair{a, "a.pt"}, std::pair{b, "b.pt"}}) {
    FUSegNet net(cfg);
    CheckpointRecord rec;
    rec.network = cfg;
    save_checkpoint(net, rec, root / name);
  }
  const auto r = run({"predict", "--checkpoint", (root / "a.pt").string(), "--checkpoint",
                      (root / "b.pt").string(), "--images", (root / "data" / "images").string(),
                      "--out", (root / "out").string()});
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.err.find("b.pt"), std::string::npos);
  EXPECT_FALSE(fs::exists(root / "out"));
}

TEST(Cli, EvaluateIdentityScoresHundred) {
  const auto root = scratch_dir("cli_eval");
  write_dataset(synthetic_dataset(4, 32, 24), root);
  const auto r = run({"evaluate", "--pred", (root / "masks").string(), "--gt",
                      (root / "masks").string(), "--out", (root / "report").string()});
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(r.out, "100.00 100.00 100.00 100.00\n");
  EXPECT_EQ(count_lines(root / "report" / "per_image.csv"), 5);
  EXPECT_TRUE(fs::exists(root / "report" / "aggregates.csv"));
  EXPECT_TRUE(fs::exists(root / "report" / "image_metrics_boxplot.svg"));
}

TEST(Cli, EvaluateFailures) {
  const auto root = scratch_dir("cli_eval_fail");
  fs::create_directories(root / "a");
  fs::create_directories(root / "b");
  EXPECT_NE(run({"evaluate", "--pred", (root / "a").string(), "--gt", (root / "b").string(),
                 "--out", (root / "r").string()})
                .status,
            0);
  write_dataset(synthetic_dataset(2, 32, 25), root / "c");
  fs::create_directories(root / "d");
  fs::copy_file(root / "c" / "masks" / "s000.png", root / "d" / "s000.png");
  const auto r = run({"evaluate", "--pred", (root / "d").string(), "--gt",
                      (root / "c" / "masks").string(), "--out", (root / "r").string()});
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.err.find("s001"), std::string::npos);
}

TEST(Cli, ReportDrawsOneSeriesPerCsvAndIsIdempotent) {
  const auto root = scratch_dir("cli_report");
  std::vector<std::string> csvs;
  for (int k = 0; k < 3; ++k) {
    const auto base = root / ("run" + std::to_string(k));
    auto samples = synthetic_dataset(5, 32, 30 + static_cast<uint64_t>(k));
    write_dataset(samples, base / "gt");
    for (auto& s : samples) {
      cv::Mat eroded;
      cv::erode(s.mask, eroded, cv::Mat::ones(3, 3, CV_8U), cv::Point(-1, -1), k);
      s.mask = eroded;
    }
    fs::create_directories(base / "pred");
    for (const auto& s : samples) write_mask_png(base / "pred" / (s.id + ".png"), s.mask);
    ASSERT_EQ(run({"evaluate", "--pred", (base / "pred").string(), "--gt",
                   (base / "gt" / "masks").string(), "--out", (base / "eval").string()})
                  .status,
              0);
    csvs.push_back((base / "eval" / "per_image.csv").string());
  }
  std::vector<std::string> args{"report"};
  args.insert(args.end(), csvs.begin(), csvs.end());
  for (const char* label : {"alpha", "beta", "gamma"}) {
    args.push_back("--label");
    args.push_back(label);
  }
  auto first = args;
  first.insert(first.end(), {"--out", (root / "plots1").string()});
  auto second = args;
  second.insert(second.end(), {"--out", (root / "plots2").string()});
  const auto r1 = run(first);
  ASSERT_EQ(r1.status, 0) << r1.err;
  ASSERT_EQ(run(second).status, 0);
  const auto cmp = slurp(root / "plots1" / "category_comparison.svg");
  for (const char* label : {"alpha", "beta", "gamma"}) EXPECT_NE(cmp.find(label), std::string::npos);
  EXPECT_EQ(cmp, slurp(root / "plots2" / "category_comparison.svg"));
  for (int k = 1; k <= 3; ++k) {
    const auto f = fs::path("series" + std::to_string(k)) / "image_metrics_boxplot.svg";
    EXPECT_EQ(slurp(root / "plots1" / f), slurp(root / "plots2" / f));
    EXPECT_FALSE(slurp(root / "plots1" / f).empty());
  }
  EXPECT_NE(run({"report", csvs[0], "--label", "a", "--label", "b", "--out",
                 (root / "x").string()})
                .status,
            0);
}
