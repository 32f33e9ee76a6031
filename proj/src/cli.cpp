#include "fusegnet/cli.hpp"

#include "fusegnet/config.hpp"
#include "fusegnet/dataio.hpp"
#include "fusegnet/ensemble.hpp"
#include "fusegnet/error.hpp"
#include "fusegnet/report.hpp"
#include "fusegnet/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

namespace fusegnet {

namespace fs = std::filesystem;

namespace {

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

void write_json(const Json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void train_one(const RunConfig& cfg, const std::vector<SampleRecord>& records,
               const std::optional<FoldManifest>& manifest, std::optional<int> fold,
               const fs::path& out_dir, std::ostream& out) {
  TrainOptions options;
  options.network = cfg.network;
  options.loss = cfg.loss;
  options.settings = cfg.train;
  options.augmentation = cfg.augmentation;
  options.output_dir = out_dir;
  TrainResult result;
  if (fold) {
    result = train_fold(records, *manifest, *fold, options);
  } else {
    auto [train, validation] = holdout_split(records, cfg.train.holdout_fraction, cfg.seed);
    result = train_split(train, validation, options);
  }
  const auto& cp = result.checkpoint;
  out << (fold ? "fold " + std::to_string(*fold) : std::string("holdout")) << ": best epoch "
      << cp.epoch << ", val_loss " << cp.val_loss << ", val_iou " << cp.val_iou << " -> "
      << cp.weights_path.string() << '\n';
}

int cmd_train(const fs::path& config_path, std::optional<int> fold, bool all_folds,
              const std::string& out_override, std::ostream& out) {
  const RunConfig cfg = load_run_config(config_path);
  const fs::path out_dir = out_override.empty() ? cfg.output_dir : fs::path(out_override);
  if (cfg.data.images_dir.empty()) throw ConfigError("data.images_dir: not set");
  if (cfg.data.masks_dir.empty()) throw ConfigError("data.masks_dir: not set");
  if (!fs::is_directory(cfg.data.images_dir)) {
    throw DataError("images directory not found: " + cfg.data.images_dir.string());
  }
  if (!fs::is_directory(cfg.data.masks_dir)) {
    throw DataError("masks directory not found: " + cfg.data.masks_dir.string());
  }
  const auto records = load_dataset(cfg.data.images_dir, cfg.data.masks_dir);
  if (records.empty()) throw DataError("no images found in " + cfg.data.images_dir.string());
  fs::create_directories(out_dir);
  write_json(to_json(cfg), out_dir / "config.json");

  if (!fold && !all_folds) {
    train_one(cfg, records, std::nullopt, std::nullopt, out_dir / "holdout", out);
    return 0;
  }
  FoldManifest manifest;
  if (!cfg.data.manifest.empty()) {
    manifest = load_manifest(cfg.data.manifest);
  } else {
    manifest = make_folds(records, cfg.data.folds, cfg.seed);
  }
  save_manifest(manifest, out_dir / "folds.tsv");
  if (fold && (*fold < 0 || *fold >= manifest.k)) {
    throw ConfigError("--fold " + std::to_string(*fold) + " is outside [0, " +
                      std::to_string(manifest.k) + ")");
  }
  std::vector<int> folds;
  if (fold) {
    folds.push_back(*fold);
  } else {
    for (int k = 0; k < manifest.k; ++k) folds.push_back(k);
  }
  for (int k : folds) {
    train_one(cfg, records, manifest, k, out_dir / ("fold" + std::to_string(k)), out);
  }
  return 0;
}

int cmd_predict(const std::string& config_path, const std::vector<std::string>& checkpoints,
                const fs::path& images_dir, const fs::path& out_dir, bool prob_maps,
                std::optional<double> threshold_override, std::ostream& out) {
  double threshold = 0.5;
  if (!config_path.empty()) threshold = load_run_config(config_path).train.threshold;
  if (threshold_override) threshold = *threshold_override;
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("--threshold must lie in (0, 1]");

  std::vector<fs::path> paths(checkpoints.begin(), checkpoints.end());
  const auto bundle = load_bundle(paths);
  const auto images = list_images(images_dir);
  if (images.empty()) throw DataError("no images found in " + images_dir.string());
  const auto models = load_models(bundle);

  fs::create_directories(out_dir);
  if (prob_maps) fs::create_directories(out_dir / "prob");
  for (const auto& [id, path] : images) {
    const cv::Mat prob = ensemble_predict(models, read_rgb_image(path));
    write_mask_png(out_dir / (id + ".png"), binarize(prob, threshold));
    if (prob_maps) write_probability_png(out_dir / "prob" / (id + ".png"), prob);
  }
  out << "predicted " << images.size() << " images with " << models.size()
      << (models.size() == 1 ? " model" : " models") << " -> " << out_dir.string() << '\n';
  return 0;
}

int cmd_evaluate(const fs::path& pred_dir, const fs::path& gt_dir, const std::string& config_path,
                 const fs::path& out_dir, std::ostream& out) {
  CategorySpec spec;
  if (!config_path.empty()) spec = load_run_config(config_path).categories;
  const auto preds = list_images(pred_dir);
  const auto gts = list_images(gt_dir);
  if (preds.empty() && gts.empty()) throw DataError("no masks found in " + pred_dir.string());
  std::vector<std::string> missing;
  for (const auto& [id, p] : gts) {
    if (!preds.contains(id)) missing.push_back(id + " (no prediction)");
  }
  for (const auto& [id, p] : preds) {
    if (!gts.contains(id)) missing.push_back(id + " (no ground truth)");
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw DataError("unmatched masks: " + list);
  }
  std::vector<std::string> ids;
  std::vector<cv::Mat> pred_masks;
  std::vector<cv::Mat> gt_masks;
  for (const auto& [id, gt_path] : gts) {
    ids.push_back(id);
    gt_masks.push_back(read_binary_mask(gt_path));
    pred_masks.push_back(read_binary_mask(preds.at(id)));
    if (pred_masks.back().size() != gt_masks.back().size()) {
      throw ShapeError(id + ": prediction and ground truth sizes differ");
    }
  }
  const auto report = build_report(ids, pred_masks, gt_masks, spec);
  fs::create_directories(out_dir);
  write_per_image_csv(report, out_dir / "per_image.csv");
  write_aggregate_csv(report, out_dir / "aggregates.csv");
  write_report_plots(report, out_dir);
  const auto& d = report.data_based;
  out << percent(d.precision) << ' ' << percent(d.recall) << ' ' << percent(d.dsc) << ' '
      << percent(d.iou) << '\n';
  return 0;
}

int cmd_report(const std::vector<std::string>& csvs, std::vector<std::string> labels,
               const std::string& config_path, const fs::path& out_dir, std::ostream& out) {
  if (!labels.empty() && labels.size() != csvs.size()) {
    throw ConfigError("--label must be given once per CSV or not at all");
  }
  CategorySpec spec;
  if (!config_path.empty()) spec = load_run_config(config_path).categories;
  std::vector<PlotSeries> series;
  for (std::size_t i = 0; i < csvs.size(); ++i) {
    const fs::path csv(csvs[i]);
    std::string label;
    if (!labels.empty()) {
      label = labels[i];
    } else {
      const auto parent = fs::absolute(csv).parent_path().filename().string();
      label = parent.empty() ? csv.stem().string() : parent;
    }
    auto rows = read_per_image_csv(csv);
    if (rows.empty()) throw DataError(csv.string() + ": no data rows");
    for (const auto& r : rows) {
      if (r.category > spec.category_count()) {
        throw DataError(csv.string() + ": image '" + r.id + "' has category " +
                        std::to_string(r.category) + " beyond the configured " +
                        std::to_string(spec.category_count()));
      }
    }
    series.push_back(PlotSeries{label, build_report(std::move(rows), spec)});
  }
  fs::create_directories(out_dir);
  std::size_t files = 0;
  if (series.size() == 1) {
    files += write_report_plots(series.front().report, out_dir).size();
  } else {
    for (std::size_t i = 0; i < series.size(); ++i) {
      const auto dir = out_dir / ("series" + std::to_string(i + 1));
      files += write_report_plots(series[i].report, dir).size();
    }
  }
  write_comparison_plot(series, out_dir);
  ++files;
  out << "wrote " << files << " plot files for " << series.size()
      << (series.size() == 1 ? " run" : " runs") << " -> " << out_dir.string() << '\n';
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Foot-ulcer segmentation toolkit", "fusegnet"};
  app.require_subcommand(1);

  std::string config;
  std::string out_dir;

  auto* train = app.add_subcommand("train", "Train one model (holdout), one fold, or all folds");
  std::optional<int> fold;
  bool all_folds = false;
  train->add_option("--config", config, "Run configuration (JSON)")->required();
  train->add_option("--fold", fold, "Validate on this fold and train on the rest");
  train->add_flag("--all-folds", all_folds, "Train every fold of the manifest in turn");
  train->add_option("--out", out_dir, "Output directory (default: output_dir of the config)");
  train->get_option("--fold")->excludes(train->get_option("--all-folds"));

  auto* predict = app.add_subcommand("predict", "Predict masks with one model or an ensemble");
  std::vector<std::string> checkpoints;
  std::string images_dir;
  bool prob_maps = false;
  std::optional<double> threshold;
  predict->add_option("--config", config, "Run configuration (JSON); supplies the threshold");
  predict->add_option("--checkpoint", checkpoints, "Checkpoint file; repeat for an ensemble")
      ->required();
  predict->add_option("--images", images_dir, "Directory of input images")->required();
  predict->add_option("--out", out_dir, "Output directory for masks")->required();
  predict->add_flag("--prob-maps", prob_maps, "Also write 16-bit probability maps to <out>/prob");
  predict->add_option("--threshold", threshold, "Binarization threshold (default 0.5)");

  auto* evaluate = app.add_subcommand("evaluate", "Score predicted masks against ground truth");
  std::string pred_dir;
  std::string gt_dir;
  evaluate->add_option("--pred", pred_dir, "Directory of predicted masks")->required();
  evaluate->add_option("--gt", gt_dir, "Directory of ground-truth masks")->required();
  evaluate->add_option("--config", config, "Run configuration (JSON); supplies categories");
  evaluate->add_option("--out", out_dir, "Output directory for CSVs and plots")->required();

  auto* report = app.add_subcommand("report", "Re-draw plots from per-image metric CSVs");
  std::vector<std::string> csvs;
  std::vector<std::string> labels;
  report->add_option("csv", csvs, "per_image.csv files written by evaluate")->required();
  report->add_option("--label", labels, "Series label, once per CSV");
  report->add_option("--config", config, "Run configuration (JSON); supplies categories");
  report->add_option("--out", out_dir, "Output directory for plots")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (train->parsed()) return cmd_train(config, fold, all_folds, out_dir, out);
    if (predict->parsed()) {
      return cmd_predict(config, checkpoints, images_dir, out_dir, prob_maps, threshold, out);
    }
    if (evaluate->parsed()) return cmd_evaluate(pred_dir, gt_dir, config, out_dir, out);
    if (report->parsed()) return cmd_report(csvs, labels, config, out_dir, out);
  } catch (const std::exception& e) {
    std::string message = e.what();
    if (auto nl = message.find('\n'); nl != std::string::npos) message.resize(nl);
    err << "error: " << message << '\n';
    return 1;
  }
  return 1;
}

}  // namespace fusegnet
