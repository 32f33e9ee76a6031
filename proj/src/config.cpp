#include "fusegnet/config.hpp"

#include "fusegnet/error.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace fusegnet {

namespace fs = std::filesystem;

namespace {

// Reads fields from one JSON object and remembers which keys were consumed so
// that leftovers can be rejected.
class Reader {
 public:
  Reader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  std::string path(const std::string& key) const {
    return where_.empty() ? key : where_ + "." + key;
  }

  const Json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(path(key) + ": expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) throw ConfigError(path(key) + ": must be finite");
    }
  }

  template <typename Int>
  void integer(const std::string& key, Int& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(path(key) + ": expected an integer");
      if constexpr (std::is_unsigned_v<Int>) {
        if (v->is_number_unsigned() || v->get<int64_t>() >= 0) {
          out = v->get<Int>();
        } else {
          throw ConfigError(path(key) + ": must be non-negative");
        }
      } else {
        out = v->get<Int>();
      }
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const Json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(path(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const Json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(path(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.contains(it.key())) throw ConfigError(path(it.key()) + ": unknown key");
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

template <typename F>
auto rethrow_as_config(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(where, 0) == 0) throw;
    throw ConfigError(where + ": " + msg);
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& value) {
  if (value.empty()) return {};
  fs::path p(value);
  return p.is_absolute() ? p : base / p;
}

}  // namespace

Json to_json(const ScseSettings& s) {
  return Json{{"reduction_ratio", s.reduction_ratio},
              {"aggregation", to_string(s.aggregation)},
              {"shorted", s.shorted},
              {"excitation_bias", s.excitation_bias},
              {"projection_bias", s.projection_bias},
              {"shared_branches", s.shared_branches}};
}

ScseSettings scse_from_json(const Json& j, const std::string& where) {
  Reader r(j, where);
  ScseSettings s;
  r.integer("reduction_ratio", s.reduction_ratio);
  std::string aggregation = to_string(s.aggregation);
  r.string("aggregation", aggregation);
  s.aggregation = rethrow_as_config(r.path("aggregation"),
                                    [&] { return aggregation_from_string(aggregation); });
  r.boolean("shorted", s.shorted);
  r.boolean("excitation_bias", s.excitation_bias);
  r.boolean("projection_bias", s.projection_bias);
  r.boolean("shared_branches", s.shared_branches);
  r.finish();
  if (s.reduction_ratio < 1) throw ConfigError(r.path("reduction_ratio") + ": must be >= 1");
  return s;
}

Json to_json(const NetworkConfig& c) {
  return Json{{"encoder", c.encoder_name},
              {"decoder_channels", c.decoder_channels},
              {"input_size", c.input_size},
              {"pretrained", c.pretrained},
              {"pretrained_weights", c.pretrained_weights},
              {"upsample", to_string(c.upsample)},
              {"attention", to_json(c.attention)},
              {"shorted_threshold", c.shorted_threshold},
              {"pre_block", c.pre_block},
              {"drop_connect_rate", c.drop_connect_rate},
              {"encoder_bn_momentum", c.encoder_bn_momentum}};
}

NetworkConfig network_from_json(const Json& j, const std::string& where) {
  Reader r(j, where);
  NetworkConfig c;
  r.string("encoder", c.encoder_name);
  if (const Json* v = r.find("decoder_channels")) {
    if (!v->is_array()) throw ConfigError(r.path("decoder_channels") + ": expected an array");
    c.decoder_channels.clear();
    for (const auto& e : *v) {
      if (!e.is_number_integer()) {
        throw ConfigError(r.path("decoder_channels") + ": expected integers");
      }
      c.decoder_channels.push_back(e.get<int64_t>());
    }
  }
  r.integer("input_size", c.input_size);
  r.boolean("pretrained", c.pretrained);
  r.string("pretrained_weights", c.pretrained_weights);
  std::string upsample = to_string(c.upsample);
  r.string("upsample", upsample);
  c.upsample = rethrow_as_config(r.path("upsample"), [&] { return upsample_from_string(upsample); });
  if (const Json* v = r.find("attention")) c.attention = scse_from_json(*v, r.path("attention"));
  r.integer("shorted_threshold", c.shorted_threshold);
  r.boolean("pre_block", c.pre_block);
  r.number("drop_connect_rate", c.drop_connect_rate);
  r.number("encoder_bn_momentum", c.encoder_bn_momentum);
  r.finish();
  rethrow_as_config(where, [&] {
    validate(c);
    return 0;
  });
  return c;
}

Json to_json(const LossSettings& s) {
  return Json{{"gamma", s.gamma},
              {"alpha", s.alpha},
              {"smooth_eps", s.smooth_eps},
              {"dice_weight", s.dice_weight},
              {"focal_weight", s.focal_weight},
              {"clip_delta", s.clip_delta},
              {"balanced_alpha", s.balanced_alpha}};
}

LossSettings loss_from_json(const Json& j, const std::string& where) {
  Reader r(j, where);
  LossSettings s;
  r.number("gamma", s.gamma);
  r.number("alpha", s.alpha);
  r.number("smooth_eps", s.smooth_eps);
  r.number("dice_weight", s.dice_weight);
  r.number("focal_weight", s.focal_weight);
  r.number("clip_delta", s.clip_delta);
  r.boolean("balanced_alpha", s.balanced_alpha);
  r.finish();
  validate(s);
  return s;
}

Json to_json(const TrainSettings& s) {
  return Json{{"initial_lr", s.initial_lr},
              {"weight_decay", s.weight_decay},
              {"plateau_factor", s.plateau_factor},
              {"plateau_patience", s.plateau_patience},
              {"max_epochs", s.max_epochs},
              {"batch_size", s.batch_size},
              {"early_stop_patience", s.early_stop_patience},
              {"seed", s.seed},
              {"holdout_fraction", s.holdout_fraction},
              {"threshold", s.threshold}};
}

TrainSettings train_from_json(const Json& j, const std::string& where) {
  Reader r(j, where);
  TrainSettings s;
  r.number("initial_lr", s.initial_lr);
  r.number("weight_decay", s.weight_decay);
  r.number("plateau_factor", s.plateau_factor);
  r.integer("plateau_patience", s.plateau_patience);
  r.integer("max_epochs", s.max_epochs);
  r.integer("batch_size", s.batch_size);
  r.integer("early_stop_patience", s.early_stop_patience);
  r.integer("seed", s.seed);
  r.number("holdout_fraction", s.holdout_fraction);
  r.number("threshold", s.threshold);
  r.finish();
  validate(s);
  return s;
}

Json to_json(const AugmentationPlan& p) {
  Json sets = Json::array();
  for (const auto& set : p.sets) {
    Json transforms = Json::array();
    for (const auto& t : set.transforms) {
      Json params = Json::object();
      for (const auto& [key, def] : default_params(t.kind)) params[key] = t.param(key);
      transforms.push_back(Json{{"name", to_string(t.kind)}, {"p", t.p}, {"params", params}});
    }
    sets.push_back(Json{{"p", set.p}, {"transforms", transforms}});
  }
  return Json{{"overall_p", p.overall_p}, {"sets", sets}};
}

AugmentationPlan augmentation_from_json(const Json& j, const std::string& where) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "standard") return AugmentationPlan::standard();
    if (name == "none") return AugmentationPlan::none();
    throw ConfigError(where + ": expected \"standard\", \"none\" or an object");
  }
  Reader r(j, where);
  AugmentationPlan plan;
  r.number("overall_p", plan.overall_p);
  if (const Json* sets = r.find("sets")) {
    if (!sets->is_array()) throw ConfigError(r.path("sets") + ": expected an array");
    for (std::size_t s = 0; s < sets->size(); ++s) {
      const std::string set_where = r.path("sets") + "[" + std::to_string(s) + "]";
      Reader sr((*sets)[s], set_where);
      AugmentationSet set;
      sr.number("p", set.p);
      const Json* transforms = sr.find("transforms");
      if (transforms == nullptr || !transforms->is_array()) {
        throw ConfigError(sr.path("transforms") + ": expected an array");
      }
      for (std::size_t t = 0; t < transforms->size(); ++t) {
        const std::string t_where = sr.path("transforms") + "[" + std::to_string(t) + "]";
        Reader tr((*transforms)[t], t_where);
        std::string name;
        tr.string("name", name);
        TransformSpec spec;
        spec.kind = rethrow_as_config(tr.path("name"), [&] { return transform_from_string(name); });
        tr.number("p", spec.p);
        if (const Json* params = tr.find("params")) {
          Reader pr(*params, tr.path("params"));
          for (const auto& [key, def] : default_params(spec.kind)) {
            double value = def;
            pr.number(key, value);
            spec.params[key] = value;
          }
          pr.finish();
        } else {
          spec.params = default_params(spec.kind);
        }
        tr.finish();
        set.transforms.push_back(std::move(spec));
      }
      sr.finish();
      plan.sets.push_back(std::move(set));
    }
  }
  r.finish();
  rethrow_as_config(where, [&] {
    validate(plan);
    return 0;
  });
  return plan;
}

Json to_json(const CategorySpec& s) { return Json{{"thresholds", s.thresholds}}; }

CategorySpec categories_from_json(const Json& j, const std::string& where) {
  Reader r(j, where);
  CategorySpec spec;
  if (const Json* v = r.find("thresholds")) {
    if (!v->is_array()) throw ConfigError(r.path("thresholds") + ": expected an array");
    spec.thresholds.clear();
    for (const auto& e : *v) {
      if (!e.is_number()) throw ConfigError(r.path("thresholds") + ": expected numbers");
      spec.thresholds.push_back(e.get<double>());
    }
  }
  r.finish();
  rethrow_as_config(where, [&] {
    validate(spec);
    return 0;
  });
  return spec;
}

RunConfig run_config_from_json(const Json& j, const fs::path& base_dir) {
  Reader r(j, "");
  RunConfig c;
  int version = 0;
  r.integer("schema_version", version);
  if (version != RunConfig::kSchemaVersion) {
    throw ConfigError("schema_version: expected " + std::to_string(RunConfig::kSchemaVersion));
  }
  r.integer("seed", c.seed);
  std::string output_dir = c.output_dir.string();
  r.string("output_dir", output_dir);
  c.output_dir = resolve(base_dir, output_dir);

  if (const Json* data = r.find("data")) {
    Reader dr(*data, "data");
    std::string images;
    std::string masks;
    std::string manifest;
    dr.string("images_dir", images);
    dr.string("masks_dir", masks);
    dr.string("manifest", manifest);
    dr.integer("folds", c.data.folds);
    dr.finish();
    c.data.images_dir = resolve(base_dir, images);
    c.data.masks_dir = resolve(base_dir, masks);
    c.data.manifest = resolve(base_dir, manifest);
    if (c.data.folds < 2) throw ConfigError("data.folds: must be >= 2");
  }
  if (const Json* v = r.find("network")) {
    c.network = network_from_json(*v, "network");
    c.network.pretrained_weights = resolve(base_dir, c.network.pretrained_weights).string();
  }
  if (const Json* v = r.find("loss")) c.loss = loss_from_json(*v, "loss");
  if (const Json* v = r.find("train")) {
    if (v->is_object() && v->contains("seed")) {
      throw ConfigError("train.seed: set the top-level seed instead");
    }
    c.train = train_from_json(*v, "train");
  }
  c.train.seed = c.seed;
  if (const Json* v = r.find("augmentation")) c.augmentation = augmentation_from_json(*v, "augmentation");
  if (const Json* v = r.find("categories")) c.categories = categories_from_json(*v, "categories");
  r.finish();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read configuration " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

Json to_json(const RunConfig& c) {
  Json train = to_json(c.train);
  train.erase("seed");
  return Json{{"schema_version", RunConfig::kSchemaVersion},
              {"seed", c.seed},
              {"output_dir", c.output_dir.string()},
              {"data",
               {{"images_dir", c.data.images_dir.string()},
                {"masks_dir", c.data.masks_dir.string()},
                {"manifest", c.data.manifest.string()},
                {"folds", c.data.folds}}},
              {"network", to_json(c.network)},
              {"loss", to_json(c.loss)},
              {"train", train},
              {"augmentation", to_json(c.augmentation)},
              {"categories", to_json(c.categories)}};
}

}  // namespace fusegnet
