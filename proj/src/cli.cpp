#include "metauad/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "metauad/common.hpp"
#include "metauad/csv.hpp"
#include "metauad/episodes.hpp"
#include "metauad/eval.hpp"
#include "metauad/features.hpp"
#include "metauad/flow.hpp"
#include "metauad/metasgd.hpp"
#include "metauad/net.hpp"
#include "metauad/select.hpp"

namespace fs = std::filesystem;

namespace metauad {
namespace {

// Fixed stream ids for deriving stage seeds from the user's base seed.
constexpr std::uint64_t kStreamSplit = 1;
constexpr std::uint64_t kStreamTrain = 2;
constexpr std::uint64_t kStreamEval = 3;
constexpr std::uint64_t kStreamScratch = 4;
constexpr std::uint64_t kStreamSelect = 5;

std::string iso_utc_now() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[80];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
  return buf;
}

std::string stem_path(const std::string& path) {
  fs::path p(path);
  return (p.parent_path() / p.stem()).string();
}

// One resolved configuration knob: the live target plus where its value
// came from, so the run manifest can echo the resolution order.
class Knobs {
 public:
  enum class Kind { Int, UInt, Real, Str, Bool };

  struct Entry {
    std::string key;
    Kind kind;
    void* target;
    CLI::Option* opt = nullptr;
    std::string source = "default";
  };

  void add_int(CLI::App& app, const std::string& key, int& target, const std::string& help) {
    add(app, key, Kind::Int, &target, help);
  }
  void add_uint(CLI::App& app, const std::string& key, std::uint64_t& target,
                const std::string& help) {
    add(app, key, Kind::UInt, &target, help);
  }
  void add_real(CLI::App& app, const std::string& key, double& target, const std::string& help) {
    add(app, key, Kind::Real, &target, help);
  }
  void add_str(CLI::App& app, const std::string& key, std::string& target,
               const std::string& help) {
    add(app, key, Kind::Str, &target, help);
  }
  void add_flag(CLI::App& app, const std::string& key, bool& target, const std::string& help) {
    Entry e{key, Kind::Bool, &target, nullptr, "default"};
    e.opt = app.add_flag("--" + key, target, help);
    entries_.push_back(e);
  }

  // Called after CLI11 parse: mark flag-set knobs, then lay file values
  // under them. Unknown keys and unparsable values are usage errors.
  void resolve(const std::string& config_path) {
    for (auto& e : entries_) {
      if (e.opt != nullptr && e.opt->count() > 0) e.source = "flag";
    }
    if (config_path.empty()) return;
    std::string text = read_text_file(config_path);
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string s = trim(line);
      if (s.empty() || s[0] == '#') continue;
      auto eq = s.find('=');
      if (eq == std::string::npos) {
        throw UsageError(config_path + ":" + std::to_string(lineno) +
                         ": expected key=value, got '" + s + "'");
      }
      std::string key = trim(s.substr(0, eq));
      std::string val = trim(s.substr(eq + 1));
      apply_file_value(config_path, key, val);
    }
  }

  // Same layering from a previously written run manifest's config block.
  void resolve_manifest(const std::string& path, const nlohmann::json& config) {
    for (auto& e : entries_) {
      if (e.opt != nullptr && e.opt->count() > 0) e.source = "flag";
    }
    for (const auto& [key, entry] : config.items()) {
      const nlohmann::json& v = entry.contains("value") ? entry.at("value") : entry;
      std::string text = v.is_string() ? v.get<std::string>() : v.dump();
      apply_file_value(path, key, text);
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& e : entries_) {
      nlohmann::json value;
      switch (e.kind) {
        case Kind::Int: value = *static_cast<int*>(e.target); break;
        case Kind::UInt: value = *static_cast<std::uint64_t*>(e.target); break;
        case Kind::Real: value = *static_cast<double*>(e.target); break;
        case Kind::Str: value = *static_cast<std::string*>(e.target); break;
        case Kind::Bool: value = *static_cast<bool*>(e.target); break;
      }
      out[e.key] = {{"value", value}, {"source", e.source}};
    }
    return out;
  }

  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) out.push_back(e.key);
    return out;
  }

  std::string source_of(const std::string& key) const {
    for (const auto& e : entries_) {
      if (e.key == key) return e.source;
    }
    return "";
  }

 private:
  void add(CLI::App& app, const std::string& key, Kind kind, void* target,
           const std::string& help) {
    Entry e{key, kind, target, nullptr, "default"};
    switch (kind) {
      case Kind::Int: e.opt = app.add_option("--" + key, *static_cast<int*>(target), help); break;
      case Kind::UInt:
        e.opt = app.add_option("--" + key, *static_cast<std::uint64_t*>(target), help);
        break;
      case Kind::Real:
        e.opt = app.add_option("--" + key, *static_cast<double*>(target), help);
        break;
      case Kind::Str:
        e.opt = app.add_option("--" + key, *static_cast<std::string*>(target), help);
        break;
      case Kind::Bool: break;  // via add_flag
    }
    entries_.push_back(e);
  }

  void apply_file_value(const std::string& path, const std::string& key, const std::string& val) {
    for (auto& e : entries_) {
      if (e.key != key) continue;
      // Validate the value even when a flag overrides it.
      try {
        switch (e.kind) {
          case Kind::Int: {
            std::size_t used = 0;
            int v = std::stoi(val, &used);
            if (used != val.size()) throw std::invalid_argument(val);
            if (e.source != "flag") *static_cast<int*>(e.target) = v;
            break;
          }
          case Kind::UInt: {
            std::size_t used = 0;
            std::uint64_t v = std::stoull(val, &used);
            if (used != val.size()) throw std::invalid_argument(val);
            if (e.source != "flag") *static_cast<std::uint64_t*>(e.target) = v;
            break;
          }
          case Kind::Real: {
            std::size_t used = 0;
            double v = std::stod(val, &used);
            if (used != val.size()) throw std::invalid_argument(val);
            if (e.source != "flag") *static_cast<double*>(e.target) = v;
            break;
          }
          case Kind::Str:
            if (e.source != "flag") *static_cast<std::string*>(e.target) = val;
            break;
          case Kind::Bool: {
            std::string low = to_lower(val);
            bool v;
            if (low == "true" || low == "1" || low == "yes") {
              v = true;
            } else if (low == "false" || low == "0" || low == "no") {
              v = false;
            } else {
              throw std::invalid_argument(val);
            }
            if (e.source != "flag") *static_cast<bool*>(e.target) = v;
            break;
          }
        }
      } catch (const std::exception&) {
        throw UsageError(path + ": value '" + val + "' for key '" + key + "' has the wrong type");
      }
      if (e.source != "flag") e.source = "file";
      return;
    }
    throw UsageError(path + ": unknown configuration key '" + key + "'");
  }

  std::vector<Entry> entries_;
};

// Everything a subcommand might resolve; each registers only its subset.
struct Options {
  std::string config_path;
  std::string manifest_out;
  bool quiet = false;
  std::uint64_t seed = 0;

  std::string in_path;
  std::string out_path;
  std::string out_dir;
  std::string labels_path;
  double idle_timeout_s = 120.0;

  std::string data_path;
  std::string manifest_path;
  std::string label_col = "label";
  std::string normal_label = "BENIGN";

  double missing = 0.5;
  double bottom = 0.3;
  int trees = 100;
  int max_depth = 12;
  int min_split = 5;
  double feature_subsample = 0.0;

  int k = 5;
  int m = 10;
  int n = -1;  // -1: inherit m
  double beta = 0.001;
  int episodes = 10000;
  std::string mode = "exact";
  double alpha_init = 0.01;
  int inner_steps = 1;
  int patience = 500;
  int monitor_stride = 10;
  std::string hidden = "256,128,128";
  std::string test_classes;
  int test_class_count = 0;

  std::string ckpt_path;
  std::string class_name;
  int adapt_steps = 10;
  int trials = 100;
  std::uint64_t trial_offset = 0;
  bool with_scratch = false;
  std::string trials_csv;
};

struct ManifestWriter {
  nlohmann::json doc;
  std::string default_path;

  ManifestWriter(const std::string& subcommand, const Knobs& knobs) {
    doc["tool"] = "metauad";
    doc["version"] = kToolVersion;
    doc["subcommand"] = subcommand;
    doc["config"] = knobs.to_json();
    doc["inputs"] = nlohmann::json::object();
    doc["outputs"] = nlohmann::json::array();
    doc["seeds"] = nlohmann::json::object();
    doc["started_at"] = iso_utc_now();
  }

  void input(const std::string& path) {
    doc["inputs"][path] = hash_hex(hash_file(path));
  }
  void output(const std::string& path) { doc["outputs"].push_back(path); }
  void seed(const std::string& name, std::uint64_t value) { doc["seeds"][name] = value; }

  void write(const std::string& explicit_path) {
    doc["finished_at"] = iso_utc_now();
    std::string path = explicit_path.empty() ? default_path : explicit_path;
    if (path.empty()) return;  // stdout-only subcommand without --manifest-out
    write_text_file(path, doc.dump(2) + "\n");
  }
};

std::vector<int> parse_hidden(const std::string& text) {
  std::vector<int> out;
  for (const auto& part : split(text, ',')) {
    std::string p = trim(part);
    if (p.empty()) continue;
    try {
      std::size_t used = 0;
      int v = std::stoi(p, &used);
      if (used != p.size() || v <= 0) throw std::invalid_argument(p);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("bad hidden layer size '" + p + "' in '" + text + "'");
    }
  }
  if (out.empty()) throw UsageError("hidden layer list '" + text + "' is empty");
  return out;
}

void require_seed(const Knobs& knobs) {
  if (knobs.source_of("seed") == "default") {
    throw UsageError("--seed is required (or set seed= in the config file)");
  }
}

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw UsageError("missing required option --" + flag);
}

std::vector<std::string> read_label_lines(const std::string& path, std::size_t n_flows) {
  std::istringstream in(read_text_file(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    std::string s = trim(line);
    if (!s.empty()) lines.push_back(s);
  }
  if (lines.size() == 1) return std::vector<std::string>(n_flows, lines[0]);
  if (lines.size() != n_flows) {
    throw PreconditionError(path + ": " + std::to_string(lines.size()) +
                            " labels for " + std::to_string(n_flows) + " flows");
  }
  return lines;
}

// ---- subcommand bodies ------------------------------------------------

int run_extract(const Options& opt, Knobs& knobs) {
  require(opt.in_path, "in");
  require(opt.out_path, "out");
  if (!(opt.idle_timeout_s > 0)) throw PreconditionError("idle timeout must be positive");

  ManifestWriter manifest("extract", knobs);
  manifest.default_path = stem_path(opt.out_path) + ".run.json";
  manifest.input(opt.in_path);
  if (!opt.labels_path.empty()) manifest.input(opt.labels_path);

  CaptureResult capture = parse_capture(opt.in_path);
  auto flows = assemble_flows(capture.packets,
                              static_cast<std::uint64_t>(opt.idle_timeout_s * 1e6));
  auto vectors = compute_features(flows);

  std::vector<std::string> labels;
  if (!opt.labels_path.empty()) labels = read_label_lines(opt.labels_path, flows.size());
  export_features(vectors, labels.empty() ? nullptr : &labels, opt.out_path);

  manifest.output(opt.out_path);
  manifest.output(feature_manifest_path(opt.out_path));
  manifest.doc["extract"] = {{"packets", capture.packets.size()},
                             {"skipped", capture.skipped},
                             {"linktype", capture.linktype},
                             {"flows", flows.size()}};
  manifest.write(opt.manifest_out);
  if (!opt.quiet) {
    std::cout << "extracted " << flows.size() << " flows from " << capture.packets.size()
              << " packets (" << capture.skipped << " skipped) -> " << opt.out_path << "\n";
  }
  return 0;
}

SelectionConfig selection_config(const Options& opt) {
  SelectionConfig cfg;
  cfg.missing_threshold = opt.missing;
  cfg.bottom_fraction = opt.bottom;
  cfg.forest.n_trees = opt.trees;
  cfg.forest.max_depth = opt.max_depth;
  cfg.forest.min_split = opt.min_split;
  cfg.forest.feature_subsample = opt.feature_subsample;
  cfg.forest.seed = opt.seed;
  return cfg;
}

int run_select(const Options& opt, Knobs& knobs) {
  require(opt.in_path, "in");
  require(opt.out_path, "out-manifest");
  require_seed(knobs);

  ManifestWriter manifest("select", knobs);
  manifest.default_path = stem_path(opt.out_path) + ".run.json";
  manifest.input(opt.in_path);
  manifest.seed("forest", opt.seed);

  CsvTable table = read_csv(opt.in_path, opt.label_col);
  if (!table.has_labels) {
    throw PreconditionError(opt.in_path + ": unlabeled (no '" + opt.label_col + "' column)");
  }
  SelectionConfig cfg = selection_config(opt);
  SelectionReport report = select_features(table, cfg);
  Preprocessing prep = selection_preprocessing(table, report);
  nlohmann::json prep_manifest =
      selection_manifest(report, cfg, prep, hash_hex(hash_file(opt.in_path)));
  write_text_file(opt.out_path, prep_manifest.dump(2) + "\n");

  manifest.output(opt.out_path);
  manifest.doc["preprocessing"] = prep_manifest;
  manifest.write(opt.manifest_out);
  if (!opt.quiet) {
    std::cout << "retained " << report.retained_ids.size() << " of "
              << table.feature_ids.size() << " features -> " << opt.out_path << "\n";
  }
  return 0;
}

TrainConfig train_config(const Options& opt) {
  TrainConfig cfg;
  cfg.episodes = opt.episodes;
  cfg.k = opt.k;
  cfg.m = opt.m;
  cfg.n = opt.n < 0 ? opt.m : opt.n;
  cfg.inner_steps_train = opt.inner_steps;
  cfg.adapt_steps = opt.adapt_steps;
  cfg.outer_mode = outer_mode_from_name(opt.mode);
  cfg.seed = derive_seed(opt.seed, kStreamTrain);
  cfg.alpha_init = opt.alpha_init;
  cfg.beta = opt.beta;
  cfg.hidden = parse_hidden(opt.hidden);
  cfg.early_stop_patience = opt.patience;
  cfg.monitor_stride = opt.monitor_stride;
  return cfg;
}

ClassSplit make_split(const Options& opt, const LabeledDataset& dataset) {
  if (!opt.test_classes.empty()) {
    std::vector<std::string> names;
    for (const auto& part : split(opt.test_classes, ',')) {
      std::string p = trim(part);
      if (!p.empty()) names.push_back(p);
    }
    return split_classes(dataset, names);
  }
  if (opt.test_class_count <= 0) {
    throw UsageError("provide --test-classes or a positive --test-class-count");
  }
  return split_classes_random(dataset, opt.test_class_count, derive_seed(opt.seed, kStreamSplit));
}

int run_meta_train(const Options& opt, Knobs& knobs) {
  require(opt.data_path, "data");
  require(opt.manifest_path, "manifest");
  require(opt.out_path, "out");
  require_seed(knobs);

  ManifestWriter manifest("meta-train", knobs);
  manifest.default_path = stem_path(opt.out_path) + ".run.json";
  manifest.input(opt.data_path);
  manifest.input(opt.manifest_path);
  manifest.seed("base", opt.seed);
  manifest.seed("split", derive_seed(opt.seed, kStreamSplit));
  manifest.seed("train", derive_seed(opt.seed, kStreamTrain));

  LabeledDataset dataset =
      load_dataset(opt.data_path, opt.manifest_path, opt.normal_label, opt.label_col);
  ClassSplit cls_split = make_split(opt, dataset);
  TrainConfig cfg = train_config(opt);

  MetaTrainResult result = meta_train(dataset, cls_split, cfg);

  MetaCheckpoint ckpt;
  ckpt.meta = result.meta;
  ckpt.config = cfg;
  ckpt.preprocessing = nlohmann::json::parse(read_text_file(opt.manifest_path));
  ckpt.train_class_names = class_names_of(dataset, cls_split.train_classes);
  ckpt.test_class_names = class_names_of(dataset, cls_split.test_classes);
  ckpt.normal_label = opt.normal_label;
  ckpt.dataset_hash = dataset.content_hash;
  ckpt.episodes_run = result.episodes_run;
  save_meta_checkpoint(opt.out_path, ckpt);

  std::string log_path = stem_path(opt.out_path) + ".log.jsonl";
  std::ostringstream log;
  for (const auto& entry : result.log) {
    nlohmann::json rec = {{"episode", entry.episode},
                          {"mean_val_loss", entry.mean_val_loss},
                          {"wall_ms", entry.wall_ms}};
    log << rec.dump() << "\n";
  }
  write_text_file(log_path, log.str());

  manifest.output(opt.out_path);
  manifest.output(log_path);
  manifest.doc["outer_mode"] = outer_mode_name(cfg.outer_mode);
  manifest.doc["hvp_method"] = hvp_method();
  manifest.doc["dataset_hash"] = hash_hex(dataset.content_hash);
  manifest.doc["train"] = {{"episodes_run", result.episodes_run},
                           {"stopped_early", result.stopped_early},
                           {"alpha_negative_fraction", result.alpha_negative_fraction},
                           {"train_classes", ckpt.train_class_names},
                           {"test_classes", ckpt.test_class_names}};
  manifest.write(opt.manifest_out);
  if (!opt.quiet) {
    double last = result.log.empty() ? 0.0 : result.log.back().mean_val_loss;
    std::cout << "meta-trained " << result.episodes_run << " episodes"
              << (result.stopped_early ? " (early stop)" : "") << ", final mean val loss "
              << format_real(last) << " -> " << opt.out_path << "\n";
  }
  return 0;
}

LabeledDataset dataset_for_checkpoint(const Options& opt, const MetaCheckpoint& ckpt) {
  if (!ckpt.preprocessing.contains("columns")) {
    throw FormatError("checkpoint carries no preprocessing manifest");
  }
  Preprocessing prep = Preprocessing::from_json(ckpt.preprocessing.at("columns"));
  CsvTable table = read_csv(opt.data_path, opt.label_col);
  if (!table.has_labels) {
    throw PreconditionError(opt.data_path + ": unlabeled (no '" + opt.label_col + "' column)");
  }
  return make_dataset(table, prep, ckpt.normal_label);
}

// Classes never meta-trained on are eligible for adaptation; on the training
// dataset that is exactly the held-out split, on a foreign dataset all of it.
std::vector<int> eligible_classes(const LabeledDataset& dataset, const MetaCheckpoint& ckpt) {
  std::vector<int> out;
  for (int c : dataset.anomaly_classes) {
    const std::string& name = dataset.name_of(c);
    bool trained = false;
    for (const auto& t : ckpt.train_class_names) {
      if (t == name) {
        trained = true;
        break;
      }
    }
    if (!trained) out.push_back(c);
  }
  if (out.empty()) {
    throw PreconditionError("every anomaly class in the dataset was used for meta-training");
  }
  return out;
}

int run_adapt(const Options& opt, Knobs& knobs) {
  require(opt.ckpt_path, "ckpt");
  require(opt.data_path, "data");
  require(opt.class_name, "class");
  require(opt.out_path, "out");
  require_seed(knobs);

  ManifestWriter manifest("adapt", knobs);
  manifest.default_path = stem_path(opt.out_path) + ".run.json";
  manifest.input(opt.ckpt_path);
  manifest.input(opt.data_path);
  manifest.seed("task", opt.seed);

  MetaCheckpoint ckpt = load_meta_checkpoint(opt.ckpt_path);
  LabeledDataset dataset = dataset_for_checkpoint(opt, ckpt);
  int cls = dataset.class_id(opt.class_name);
  if (cls < 0) throw PreconditionError("unknown class '" + opt.class_name + "'");
  std::vector<int> eligible = eligible_classes(dataset, ckpt);
  if (std::find(eligible.begin(), eligible.end(), cls) == eligible.end()) {
    throw PreconditionError("class '" + opt.class_name + "' was used for meta-training");
  }

  EpisodeTask task =
      make_adaptation_task(dataset, nullptr, cls, ckpt.config.k, opt.m, opt.seed);
  double loss_before = batch_loss(ckpt.meta.theta, task.support);
  ParameterSet adapted = adapt(ckpt.meta, task.support, opt.adapt_steps);
  double loss_after = batch_loss(adapted, task.support);

  MetaCheckpoint out = ckpt;
  out.meta.theta = adapted;
  save_meta_checkpoint(opt.out_path, out);

  manifest.output(opt.out_path);
  manifest.doc["adapt"] = {{"class", opt.class_name},
                           {"m", opt.m},
                           {"steps", opt.adapt_steps},
                           {"support_loss_before", loss_before},
                           {"support_loss_after", loss_after}};
  manifest.write(opt.manifest_out);
  if (!opt.quiet) {
    std::cout << "adapted to '" << opt.class_name << "': support loss "
              << format_real(loss_before) << " -> " << format_real(loss_after) << ", saved "
              << opt.out_path << "\n";
  }
  return 0;
}

int run_eval(const Options& opt, Knobs& knobs) {
  require(opt.ckpt_path, "ckpt");
  require(opt.data_path, "data");
  require(opt.out_path, "out");
  require_seed(knobs);
  if (opt.trials < 1) throw PreconditionError("trials must be >= 1");

  ManifestWriter manifest("eval", knobs);
  manifest.default_path = stem_path(opt.out_path) + ".run.json";
  manifest.input(opt.ckpt_path);
  manifest.input(opt.data_path);
  std::uint64_t eval_seed = derive_seed(opt.seed, kStreamEval);
  manifest.seed("base", opt.seed);
  manifest.seed("eval", eval_seed);

  MetaCheckpoint ckpt = load_meta_checkpoint(opt.ckpt_path);
  LabeledDataset dataset = dataset_for_checkpoint(opt, ckpt);
  std::vector<int> eligible = eligible_classes(dataset, ckpt);

  // When only part of the dataset is eligible, wrap it as an explicit split
  // so trials draw from it; when everything is (a foreign dataset), no split.
  ClassSplit eval_split;
  const ClassSplit* split_ptr = nullptr;
  if (eligible.size() < dataset.anomaly_classes.size()) {
    eval_split.test_classes = eligible;
    for (int c : dataset.anomaly_classes) {
      if (!eval_split.in_test(c)) eval_split.train_classes.push_back(c);
    }
    split_ptr = &eval_split;
  }

  MShotReport report = run_mshot_protocol(ckpt.meta, dataset, split_ptr, ckpt.config.k, opt.m,
                                          opt.adapt_steps, opt.trials, eval_seed,
                                          opt.trial_offset);

  nlohmann::json doc = {{"m", opt.m},
                        {"trials", opt.trials},
                        {"adapt_steps", opt.adapt_steps},
                        {"k", ckpt.config.k},
                        {"trial_offset", opt.trial_offset},
                        {"cross_dataset", split_ptr == nullptr},
                        {"variants", report.to_json()}};

  if (opt.with_scratch) {
    MetaParameters scratch;
    scratch.theta =
        init_network(ckpt.meta.theta.shape, derive_seed(opt.seed, kStreamScratch));
    scratch.alpha = Eigen::VectorXd::Constant(
        static_cast<Eigen::Index>(ckpt.meta.theta.shape.flat_size()), ckpt.config.alpha_init);
    scratch.beta = ckpt.meta.beta;
    MShotReport scratch_report =
        run_mshot_protocol(scratch, dataset, split_ptr, ckpt.config.k, opt.m, opt.adapt_steps,
                           opt.trials, eval_seed, opt.trial_offset);
    doc["scratch"] = scratch_report.to_json();
  }

  write_text_file(opt.out_path, doc.dump(2) + "\n");
  manifest.output(opt.out_path);

  if (!opt.trials_csv.empty()) {
    std::ostringstream csv;
    csv << "trial,pre_training_novel_f1,fine_tuning_novel_f1\n";
    for (std::size_t t = 0; t < report.pre_training.trial_novel_f1.size(); ++t) {
      csv << t << "," << format_real(report.pre_training.trial_novel_f1[t]) << ","
          << format_real(report.fine_tuning.trial_novel_f1[t]) << "\n";
    }
    write_text_file(opt.trials_csv, csv.str());
    manifest.output(opt.trials_csv);
  }
  manifest.write(opt.manifest_out);
  if (!opt.quiet) {
    std::cout << "mean novel-class F1 over " << opt.trials
              << " trials: pre-training " << format_real(report.pre_training.mean)
              << ", fine-tuning " << format_real(report.fine_tuning.mean) << " -> "
              << opt.out_path << "\n";
  }
  return 0;
}

int run_summary(const Options& opt, Knobs& knobs) {
  require(opt.data_path, "data");

  ManifestWriter manifest("summary", knobs);
  manifest.input(opt.data_path);

  CsvTable table = read_csv(opt.data_path, opt.label_col);
  if (!table.has_labels) {
    throw PreconditionError(opt.data_path + ": unlabeled (no '" + opt.label_col + "' column)");
  }
  DatasetSummary summary = dataset_summary(table.labels, opt.normal_label);

  std::cout << "rows: " << summary.total_rows << "\n";
  std::cout << "normal (" << summary.normal_label << "): " << summary.normal_count << "\n";
  char line[256];
  for (const auto& row : summary.anomalies) {
    std::snprintf(line, sizeof(line), "%-32s %10zu   %.1f:1\n", row.class_name.c_str(), row.count,
                  row.ratio);
    std::cout << line;
  }

  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : summary.anomalies) {
    rows.push_back({{"class", row.class_name}, {"count", row.count}, {"ratio", row.ratio}});
  }
  manifest.doc["summary"] = {{"rows", summary.total_rows},
                             {"normal_label", summary.normal_label},
                             {"normal_count", summary.normal_count},
                             {"anomalies", rows}};
  manifest.write(opt.manifest_out);  // stdout-only: written only when asked
  return 0;
}

int run_pipeline(Options& opt, Knobs& knobs) {
  require(opt.data_path, "data");
  require(opt.out_dir, "out-dir");
  require_seed(knobs);

  fs::create_directories(opt.out_dir);
  fs::path dir(opt.out_dir);

  ManifestWriter manifest("pipeline", knobs);
  manifest.default_path = (dir / "pipeline.run.json").string();
  manifest.input(opt.data_path);
  manifest.seed("base", opt.seed);
  manifest.seed("select", derive_seed(opt.seed, kStreamSelect));
  manifest.seed("split", derive_seed(opt.seed, kStreamSplit));
  manifest.seed("train", derive_seed(opt.seed, kStreamTrain));
  manifest.seed("eval", derive_seed(opt.seed, kStreamEval));

  // Stage 1: selection.
  CsvTable table = read_csv(opt.data_path, opt.label_col);
  if (!table.has_labels) {
    throw PreconditionError(opt.data_path + ": unlabeled (no '" + opt.label_col + "' column)");
  }
  SelectionConfig sel_cfg = selection_config(opt);
  sel_cfg.forest.seed = derive_seed(opt.seed, kStreamSelect);
  SelectionReport report = select_features(table, sel_cfg);
  Preprocessing prep = selection_preprocessing(table, report);
  nlohmann::json prep_manifest =
      selection_manifest(report, sel_cfg, prep, hash_hex(hash_file(opt.data_path)));
  std::string prep_path = (dir / "preprocessing.json").string();
  write_text_file(prep_path, prep_manifest.dump(2) + "\n");
  manifest.output(prep_path);
  if (!opt.quiet) {
    std::cout << "[1/3] selected " << report.retained_ids.size() << " of "
              << table.feature_ids.size() << " features\n";
  }

  // Stage 2: meta-training.
  LabeledDataset dataset = make_dataset(table, prep, opt.normal_label);
  ClassSplit cls_split = make_split(opt, dataset);
  TrainConfig cfg = train_config(opt);
  MetaTrainResult result = meta_train(dataset, cls_split, cfg);

  MetaCheckpoint ckpt;
  ckpt.meta = result.meta;
  ckpt.config = cfg;
  ckpt.preprocessing = prep_manifest;
  ckpt.train_class_names = class_names_of(dataset, cls_split.train_classes);
  ckpt.test_class_names = class_names_of(dataset, cls_split.test_classes);
  ckpt.normal_label = opt.normal_label;
  ckpt.dataset_hash = dataset.content_hash;
  ckpt.episodes_run = result.episodes_run;
  std::string ckpt_path = (dir / "model.ckpt").string();
  save_meta_checkpoint(ckpt_path, ckpt);
  manifest.output(ckpt_path);

  std::string log_path = (dir / "model.log.jsonl").string();
  std::ostringstream log;
  for (const auto& entry : result.log) {
    nlohmann::json rec = {{"episode", entry.episode},
                          {"mean_val_loss", entry.mean_val_loss},
                          {"wall_ms", entry.wall_ms}};
    log << rec.dump() << "\n";
  }
  write_text_file(log_path, log.str());
  manifest.output(log_path);
  if (!opt.quiet) {
    std::cout << "[2/3] meta-trained " << result.episodes_run << " episodes"
              << (result.stopped_early ? " (early stop)" : "") << "\n";
  }

  // Stage 3: evaluation on the held-out classes.
  ClassSplit eval_split;
  eval_split.test_classes = cls_split.test_classes;
  eval_split.train_classes = cls_split.train_classes;
  MShotReport eval_report =
      run_mshot_protocol(ckpt.meta, dataset, &eval_split, cfg.k, opt.m, opt.adapt_steps,
                         opt.trials, derive_seed(opt.seed, kStreamEval), opt.trial_offset);
  nlohmann::json eval_doc = {{"m", opt.m},
                             {"trials", opt.trials},
                             {"adapt_steps", opt.adapt_steps},
                             {"k", cfg.k},
                             {"trial_offset", opt.trial_offset},
                             {"cross_dataset", false},
                             {"variants", eval_report.to_json()}};
  std::string report_path = (dir / "report.json").string();
  write_text_file(report_path, eval_doc.dump(2) + "\n");
  manifest.output(report_path);

  manifest.doc["outer_mode"] = outer_mode_name(cfg.outer_mode);
  manifest.doc["hvp_method"] = hvp_method();
  manifest.doc["dataset_hash"] = hash_hex(dataset.content_hash);
  manifest.doc["preprocessing"] = prep_manifest;
  manifest.doc["train"] = {{"episodes_run", result.episodes_run},
                           {"stopped_early", result.stopped_early},
                           {"alpha_negative_fraction", result.alpha_negative_fraction},
                           {"train_classes", ckpt.train_class_names},
                           {"test_classes", ckpt.test_class_names}};
  manifest.write(opt.manifest_out);
  if (!opt.quiet) {
    std::cout << "[3/3] mean novel-class F1: pre-training "
              << format_real(eval_report.pre_training.mean) << ", fine-tuning "
              << format_real(eval_report.fine_tuning.mean) << "\n"
              << "artifacts in " << opt.out_dir << "\n";
  }
  return 0;
}

// ---- registration ------------------------------------------------------

void add_common(CLI::App& cmd, Options& opt, Knobs& knobs) {
  cmd.add_option("--config", opt.config_path,
                 "key=value configuration file (or a prior run manifest JSON)");
  cmd.add_option("--manifest-out", opt.manifest_out, "run manifest path override");
  knobs.add_flag(cmd, "quiet", opt.quiet, "suppress progress output");
}

void add_seed(CLI::App& cmd, Options& opt, Knobs& knobs) {
  knobs.add_uint(cmd, "seed", opt.seed, "base RNG seed (required)");
}

void add_data(CLI::App& cmd, Options& opt, Knobs& knobs) {
  knobs.add_str(cmd, "data", opt.data_path, "labeled feature CSV");
  knobs.add_str(cmd, "label-col", opt.label_col, "label column name");
  knobs.add_str(cmd, "normal-label", opt.normal_label, "label of the normal class");
}

void add_select_knobs(CLI::App& cmd, Options& opt, Knobs& knobs) {
  knobs.add_real(cmd, "missing", opt.missing, "missing-ratio removal threshold");
  knobs.add_real(cmd, "bottom", opt.bottom, "fraction removed from the importance bottom");
  knobs.add_int(cmd, "trees", opt.trees, "forest size");
  knobs.add_int(cmd, "max-depth", opt.max_depth, "tree depth limit");
  knobs.add_int(cmd, "min-split", opt.min_split, "minimum rows to split a node");
  knobs.add_real(cmd, "feature-subsample", opt.feature_subsample,
                 "fraction of features tried per split (0 = sqrt)");
}

void add_train_knobs(CLI::App& cmd, Options& opt, Knobs& knobs) {
  knobs.add_int(cmd, "k", opt.k, "classes per episode");
  knobs.add_int(cmd, "m", opt.m, "support shots per class");
  knobs.add_int(cmd, "n", opt.n, "validation rows per class (-1 = m)");
  knobs.add_real(cmd, "beta", opt.beta, "outer learning rate");
  knobs.add_int(cmd, "episodes", opt.episodes, "meta-training episodes");
  knobs.add_str(cmd, "mode", opt.mode, "outer gradient mode: exact | first_order");
  knobs.add_real(cmd, "alpha-init", opt.alpha_init, "initial per-parameter step size");
  knobs.add_int(cmd, "inner-steps", opt.inner_steps, "inner updates per task during training");
  knobs.add_int(cmd, "patience", opt.patience, "early-stop patience in episodes (0 = off)");
  knobs.add_int(cmd, "monitor-stride", opt.monitor_stride, "episodes between monitor samples");
  knobs.add_str(cmd, "hidden", opt.hidden, "hidden layer sizes, comma separated");
  knobs.add_str(cmd, "test-classes", opt.test_classes, "explicit held-out classes, comma separated");
  knobs.add_int(cmd, "test-class-count", opt.test_class_count,
                "hold out this many random classes instead");
}

void add_eval_knobs(CLI::App& cmd, Options& opt, Knobs& knobs, bool with_m) {
  if (with_m) knobs.add_int(cmd, "m", opt.m, "support shots per class");
  knobs.add_int(cmd, "adapt-steps", opt.adapt_steps, "gradient steps per adaptation");
  knobs.add_int(cmd, "trials", opt.trials, "number of evaluation trials");
  knobs.add_uint(cmd, "trial-offset", opt.trial_offset, "first trial index (seed offsetting)");
}

int dispatch_inner(int argc, const char* const* argv) {
  CLI::App app{"few-shot network anomaly detection toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Options opt;
  std::map<const CLI::App*, Knobs> knob_map;
  std::map<const CLI::App*, std::string> names;

  CLI::App* extract = app.add_subcommand("extract", "pcap -> per-flow feature CSV");
  CLI::App* select = app.add_subcommand("select", "feature CSV -> preprocessing manifest");
  CLI::App* train = app.add_subcommand("meta-train", "train initialization and step vector");
  CLI::App* adapt_cmd = app.add_subcommand("adapt", "fit a checkpoint to one new class");
  CLI::App* eval_cmd = app.add_subcommand("eval", "repeated-trial few-shot evaluation");
  CLI::App* summary = app.add_subcommand("summary", "per-class counts and imbalance ratios");
  CLI::App* pipeline = app.add_subcommand("pipeline", "select + meta-train + eval in one run");

  for (CLI::App* cmd : {extract, select, train, adapt_cmd, eval_cmd, summary, pipeline}) {
    names[cmd] = cmd->get_name();
    add_common(*cmd, opt, knob_map[cmd]);
  }

  {
    Knobs& k = knob_map[extract];
    k.add_str(*extract, "in", opt.in_path, "pcap file");
    k.add_str(*extract, "out", opt.out_path, "feature CSV to write");
    k.add_str(*extract, "labels", opt.labels_path, "flow label file (1 line or 1 per flow)");
    k.add_real(*extract, "idle-timeout-s", opt.idle_timeout_s, "flow idle timeout in seconds");
  }
  {
    Knobs& k = knob_map[select];
    k.add_str(*select, "in", opt.in_path, "labeled feature CSV");
    k.add_str(*select, "out-manifest", opt.out_path, "preprocessing manifest to write");
    k.add_str(*select, "label-col", opt.label_col, "label column name");
    add_select_knobs(*select, opt, k);
    add_seed(*select, opt, k);
  }
  {
    Knobs& k = knob_map[train];
    add_data(*train, opt, k);
    k.add_str(*train, "manifest", opt.manifest_path, "preprocessing manifest from select");
    k.add_str(*train, "out", opt.out_path, "checkpoint to write");
    add_train_knobs(*train, opt, k);
    k.add_int(*train, "adapt-steps", opt.adapt_steps, "adaptation steps recorded for later use");
    add_seed(*train, opt, k);
  }
  {
    Knobs& k = knob_map[adapt_cmd];
    k.add_str(*adapt_cmd, "ckpt", opt.ckpt_path, "meta checkpoint");
    add_data(*adapt_cmd, opt, k);
    k.add_str(*adapt_cmd, "class", opt.class_name, "anomaly class to adapt to");
    k.add_int(*adapt_cmd, "m", opt.m, "support shots per class");
    k.add_int(*adapt_cmd, "steps", opt.adapt_steps, "gradient steps on the support set");
    k.add_str(*adapt_cmd, "out", opt.out_path, "adapted checkpoint to write");
    add_seed(*adapt_cmd, opt, k);
  }
  {
    Knobs& k = knob_map[eval_cmd];
    k.add_str(*eval_cmd, "ckpt", opt.ckpt_path, "meta checkpoint");
    add_data(*eval_cmd, opt, k);
    k.add_str(*eval_cmd, "out", opt.out_path, "evaluation report JSON to write");
    add_eval_knobs(*eval_cmd, opt, k, true);
    k.add_flag(*eval_cmd, "with-scratch", opt.with_scratch,
               "also score adaptation from a random initialization");
    k.add_str(*eval_cmd, "trials-csv", opt.trials_csv, "per-trial F1 table (optional)");
    add_seed(*eval_cmd, opt, k);
  }
  {
    Knobs& k = knob_map[summary];
    add_data(*summary, opt, k);
  }
  {
    Knobs& k = knob_map[pipeline];
    add_data(*pipeline, opt, k);
    k.add_str(*pipeline, "out-dir", opt.out_dir, "directory for all stage artifacts");
    add_select_knobs(*pipeline, opt, k);
    add_train_knobs(*pipeline, opt, k);
    add_eval_knobs(*pipeline, opt, k, false);  // m shared with the training knob
    add_seed(*pipeline, opt, k);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;  // --help/--version exit 0, real parse errors 1
  }

  CLI::App* active = app.get_subcommands().front();
  Knobs& knobs = knob_map[active];

  if (!opt.config_path.empty()) {
    std::string text = read_text_file(opt.config_path);
    std::string lead = trim(text);
    if (!lead.empty() && lead[0] == '{') {
      nlohmann::json doc;
      try {
        doc = nlohmann::json::parse(text);
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(opt.config_path + ": bad JSON: " + e.what());
      }
      if (!doc.contains("config")) {
        throw UsageError(opt.config_path + ": manifest JSON lacks a 'config' block");
      }
      knobs.resolve_manifest(opt.config_path, doc["config"]);
    } else {
      knobs.resolve(opt.config_path);
    }
  } else {
    knobs.resolve("");
  }

  const std::string& name = names[active];
  if (name == "extract") return run_extract(opt, knobs);
  if (name == "select") return run_select(opt, knobs);
  if (name == "meta-train") return run_meta_train(opt, knobs);
  if (name == "adapt") return run_adapt(opt, knobs);
  if (name == "eval") return run_eval(opt, knobs);
  if (name == "summary") return run_summary(opt, knobs);
  if (name == "pipeline") return run_pipeline(opt, knobs);
  throw UsageError("unknown subcommand '" + name + "'");
}

}  // namespace

std::vector<std::string> config_keys_for(const std::string& subcommand) {
  // Kept in lockstep with the registrations above; the manifest-completeness
  // test cross-checks manifests against this list.
  std::vector<std::string> keys = {"quiet"};
  auto push = [&keys](std::initializer_list<const char*> more) {
    for (const char* k : more) keys.emplace_back(k);
  };
  if (subcommand == "extract") {
    push({"in", "out", "labels", "idle-timeout-s"});
  } else if (subcommand == "select") {
    push({"in", "out-manifest", "label-col", "missing", "bottom", "trees", "max-depth",
          "min-split", "feature-subsample", "seed"});
  } else if (subcommand == "meta-train") {
    push({"data", "label-col", "normal-label", "manifest", "out", "k", "m", "n", "beta",
          "episodes", "mode", "alpha-init", "inner-steps", "patience", "monitor-stride", "hidden",
          "test-classes", "test-class-count", "adapt-steps", "seed"});
  } else if (subcommand == "adapt") {
    push({"ckpt", "data", "label-col", "normal-label", "class", "m", "steps", "out", "seed"});
  } else if (subcommand == "eval") {
    push({"ckpt", "data", "label-col", "normal-label", "out", "m", "adapt-steps", "trials",
          "trial-offset", "with-scratch", "trials-csv", "seed"});
  } else if (subcommand == "summary") {
    push({"data", "label-col", "normal-label"});
  } else if (subcommand == "pipeline") {
    push({"data", "label-col", "normal-label", "out-dir", "missing", "bottom", "trees",
          "max-depth", "min-split", "feature-subsample", "k", "m", "n", "beta", "episodes",
          "mode", "alpha-init", "inner-steps", "patience", "monitor-stride", "hidden",
          "test-classes", "test-class-count", "adapt-steps", "trials", "trial-offset", "seed"});
  } else {
    throw UsageError("unknown subcommand '" + subcommand + "'");
  }
  return keys;
}

int dispatch(int argc, const char* const* argv) {
  try {
    return dispatch_inner(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const PreconditionError& e) {
    std::cerr << "precondition violated: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace metauad
