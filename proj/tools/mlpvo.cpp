// Command-line front end: synthetic scene generation, discriminator training,
// classifier evaluation, and the coarse-to-fine visual odometry pipeline.
//
// Exit codes: 0 success, 2 configuration/usage error, 3 data error,
// 4 numerical failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mlpvo/baselines.hpp"
#include "mlpvo/config.hpp"
#include "mlpvo/dataset.hpp"
#include "mlpvo/metrics.hpp"
#include "mlpvo/mlp.hpp"
#include "mlpvo/pipeline.hpp"
#include "mlpvo/scene.hpp"

namespace fs = std::filesystem;
using namespace mlpvo;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write " + path.string());
  }
  out << content;
}

ConfigMap load_config_file(const std::string& path) {
  if (path.empty()) return {};
  const std::string text = read_file(path);
  std::istringstream in(text);
  return parse_config(in);
}

std::vector<FeatureRecord> load_records(const std::string& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  try {
    return parse_records(in);
  } catch (const ParseError& e) {
    throw DataError(path + ": " + e.what());
  }
}

MlpModel load_model_file(const std::string& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  try {
    return load_model(in);
  } catch (const std::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

/// Renders a comma-separated table with aligned columns.
void print_aligned(const std::vector<std::vector<std::string>>& rows, std::ostream& out) {
  std::vector<std::size_t> widths;
  for (const auto& row : rows) {
    if (widths.size() < row.size()) widths.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c) {
      widths[c] = std::max(widths[c], row[c].size());
    }
  }
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << row[c];
      if (c + 1 < row.size()) {
        out << std::string(widths[c] - row[c].size() + 2, ' ');
      }
    }
    out << '\n';
  }
}

std::string metric_cell(double value, bool undefined) {
  return undefined ? "0 (undefined)" : format_double(value);
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
};

int cmd_gen(const GenArgs& args) {
  ConfigReader reader(load_config_file(args.config_path));
  const SceneConfig cfg = scene_config_from_reader(reader);
  const double dataset_fraction = reader.get_double("dataset_dynamic_fraction", -1.0);
  reader.finish();

  const SyntheticScene scene = generate_scene(cfg, args.seed);
  const std::vector<FramePair> pairs = observe_all(scene);
  const std::vector<FeatureRecord> records =
      balance_records(collect_records(pairs), dataset_fraction, args.seed);

  const fs::path out(args.out_dir);
  {
    std::ostringstream body;
    write_records(records, body);
    write_file(out / "dataset.csv", body.str());
  }
  {
    std::ostringstream body;
    body << "frame,track_id,class,u_min,v_min,u_max,v_max\n";
    for (const auto& pair : pairs) {
      for (const auto& box : pair.boxes) {
        body << pair.current_frame << ',' << box.track_id << ','
             << (box.object_class == ObjectClass::kPotentiallyDynamic ? "dynamic"
                                                                      : "static")
             << ',' << format_double(box.u_min) << ',' << format_double(box.v_min)
             << ',' << format_double(box.u_max) << ',' << format_double(box.v_max)
             << '\n';
      }
    }
    write_file(out / "boxes.csv", body.str());
  }
  {
    std::ostringstream body;
    write_trajectory(scene.trajectory, body);
    write_file(out / "groundtruth.txt", body.str());
  }
  {
    ConfigMap resolved = scene_config_to_map(cfg);
    resolved["seed"] = std::to_string(args.seed);
    resolved["dataset_dynamic_fraction"] = format_double(dataset_fraction);
    std::ostringstream body;
    write_config(resolved, body);
    write_file(out / "config_resolved.cfg", body.str());
  }

  std::size_t dynamic = 0;
  for (const auto& r : records) dynamic += r.label == 1;
  std::cout << "wrote " << records.size() << " records (" << dynamic << " dynamic) and "
            << scene.trajectory.size() << " ground-truth poses to " << out.string()
            << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data_path;
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  TrainConfig train;
  // which flags were passed explicitly (they win over the config file)
  bool epochs_set = false, batch_set = false, lr_set = false, gamma_set = false,
       milestones_set = false;
};

// Defaults, overridden by the config file, overridden by explicit flags.
TrainConfig resolve_train_config(const TrainArgs& args) {
  TrainConfig cfg = args.train;
  ConfigReader reader(load_config_file(args.config_path));
  const int file_epochs = reader.get_int("epochs", cfg.epochs);
  const int file_batch = reader.get_int("batch_size", cfg.batch_size);
  const double file_lr = reader.get_double("learning_rate", cfg.learning_rate);
  const double file_gamma = reader.get_double("gamma", cfg.lr_decay_gamma);
  std::vector<int> file_milestones = cfg.lr_milestones;
  if (reader.has("milestones")) {
    file_milestones.clear();
    for (const auto& field : split(reader.get_string("milestones", ""), ',')) {
      std::int64_t v = 0;
      if (!parse_int64(trim(field), v)) {
        throw ConfigError("config key 'milestones': bad list entry '" +
                          std::string(trim(field)) + "'");
      }
      file_milestones.push_back(static_cast<int>(v));
    }
  }
  reader.finish();

  if (!args.epochs_set) cfg.epochs = file_epochs;
  if (!args.batch_set) cfg.batch_size = file_batch;
  if (!args.lr_set) cfg.learning_rate = file_lr;
  if (!args.gamma_set) cfg.lr_decay_gamma = file_gamma;
  if (!args.milestones_set) cfg.lr_milestones = file_milestones;
  cfg.seed = args.seed;
  if (!cfg.valid()) {
    throw ConfigError("invalid training configuration (epochs/batch/gamma/milestones)");
  }
  return cfg;
}

int cmd_train(const TrainArgs& args) {
  const TrainConfig cfg = resolve_train_config(args);
  const std::vector<FeatureRecord> records = load_records(args.data_path);
  if (records.size() < 10) {
    throw DataError("dataset too small to split: " + std::to_string(records.size()));
  }
  const DatasetSplit parts = split_dataset(records, args.seed);
  const TrainResult result =
      train(to_labeled_features(parts.train), to_labeled_features(parts.val), cfg);

  // held-out test metrics for the summary line
  std::vector<int> truth, predicted;
  for (const auto& r : parts.test) {
    truth.push_back(r.label);
    predicted.push_back(predict(result.model, to_feature_vector(r)).label);
  }
  const ConfusionCounts counts = confusion(truth, predicted);

  const fs::path out(args.out_dir);
  {
    std::ostringstream body;
    save_model(result.model, body);
    write_file(out / "model.txt", body.str());
  }
  {
    std::ostringstream body;
    body << "epoch,train_loss,train_accuracy,val_loss,val_accuracy,learning_rate\n";
    for (std::size_t e = 0; e < result.history.size(); ++e) {
      const EpochStats& s = result.history[e];
      body << e + 1 << ',' << format_double(s.train_loss) << ','
           << format_double(s.train_accuracy) << ',' << format_double(s.val_loss) << ','
           << format_double(s.val_accuracy) << ',' << format_double(s.learning_rate)
           << '\n';
    }
    write_file(out / "history.csv", body.str());
  }
  {
    ConfigMap resolved;
    resolved["data"] = args.data_path;
    resolved["seed"] = std::to_string(args.seed);
    resolved["epochs"] = std::to_string(cfg.epochs);
    resolved["batch_size"] = std::to_string(cfg.batch_size);
    resolved["learning_rate"] = format_double(cfg.learning_rate);
    resolved["gamma"] = format_double(cfg.lr_decay_gamma);
    std::string milestones;
    for (int m : cfg.lr_milestones) {
      milestones += milestones.empty() ? std::to_string(m) : ("," + std::to_string(m));
    }
    resolved["milestones"] = milestones;
    std::ostringstream body;
    write_config(resolved, body);
    write_file(out / "config_resolved.cfg", body.str());
  }

  std::cout << "trained " << records.size() << " records; best epoch "
            << result.best_epoch + 1 << ", validation accuracy "
            << format_double(
                   result.history[static_cast<std::size_t>(result.best_epoch)].val_accuracy)
            << ", test accuracy " << format_double(accuracy(counts)) << ", test F1 "
            << format_double(f1_score(counts)) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string data_path;
  std::string model_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool baselines = true;
};

int cmd_eval(const EvalArgs& args) {
  const std::vector<FeatureRecord> records = load_records(args.data_path);
  if (records.size() < 10) {
    throw DataError("dataset too small to split: " + std::to_string(records.size()));
  }
  const DatasetSplit parts = split_dataset(records, args.seed);

  std::vector<FeatureVector> train_features;
  std::vector<int> train_labels;
  for (const auto& r : parts.train) {
    train_features.push_back(to_feature_vector(r));
    train_labels.push_back(r.label);
  }
  std::vector<FeatureVector> test_features;
  std::vector<int> test_labels;
  for (const auto& r : parts.test) {
    test_features.push_back(to_feature_vector(r));
    test_labels.push_back(r.label);
  }

  struct Row {
    std::string method;
    ConfusionCounts counts;
  };
  std::vector<Row> rows;

  if (!args.model_path.empty()) {
    const MlpModel model = load_model_file(args.model_path);
    std::vector<int> predicted;
    for (const Prediction& p : predict_batch(model, test_features)) {
      predicted.push_back(p.label);
    }
    rows.push_back({"mlp", confusion(test_labels, predicted)});
  }

  if (args.baselines) {
    const auto evaluate_spec = [&](const std::string& name, const ThresholdSpec& spec) {
      const ThresholdClassifier c = fit_thresholds(train_features, train_labels, spec);
      std::vector<int> predicted;
      for (const auto& f : test_features) predicted.push_back(classify(c, f));
      rows.push_back({name, confusion(test_labels, predicted)});
    };
    ThresholdSpec reproj;
    reproj.use_reprojection = true;
    evaluate_spec("threshold-reprojection", reproj);
    ThresholdSpec combined;
    combined.use_reprojection = true;
    combined.use_epipolar = true;
    evaluate_spec("threshold-reprojection-epipolar", combined);
    ThresholdSpec epipolar;
    epipolar.use_epipolar = true;
    evaluate_spec("threshold-epipolar", epipolar);
  }
  if (rows.empty()) {
    throw ConfigError("nothing to evaluate: pass --model and/or keep baselines enabled");
  }

  std::ostringstream csv;
  csv << "method,accuracy,precision,recall,f1\n";
  std::vector<std::vector<std::string>> table{
      {"method", "accuracy", "precision", "recall", "f1"}};
  for (const Row& row : rows) {
    bool p_undef = false, r_undef = false, f_undef = false;
    const double acc = accuracy(row.counts);
    const double prec = precision(row.counts, &p_undef);
    const double rec = recall(row.counts, &r_undef);
    const double f1 = f1_score(row.counts, &f_undef);
    csv << row.method << ',' << format_double(acc) << ',' << format_double(prec) << ','
        << format_double(rec) << ',' << format_double(f1) << '\n';
    table.push_back({row.method, format_double(acc), metric_cell(prec, p_undef),
                     metric_cell(rec, r_undef), metric_cell(f1, f_undef)});
  }

  if (!args.out_dir.empty()) {
    write_file(fs::path(args.out_dir) / "metrics.csv", csv.str());
    ConfigMap resolved;
    resolved["data"] = args.data_path;
    resolved["model"] = args.model_path;
    resolved["seed"] = std::to_string(args.seed);
    resolved["baselines"] = args.baselines ? "1" : "0";
    std::ostringstream body;
    write_config(resolved, body);
    write_file(fs::path(args.out_dir) / "config_resolved.cfg", body.str());
  }
  print_aligned(table, std::cout);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct VoArgs {
  std::string scene_dir;
  std::string model_path;
  std::string out_dir;
  double eta = 1.2;
  double huber = 2.0;
};

int cmd_vo(const VoArgs& args) {
  const fs::path scene_dir(args.scene_dir);
  const std::string config_text = read_file(scene_dir / "config_resolved.cfg");
  std::istringstream config_in(config_text);
  ConfigReader reader(parse_config(config_in));
  const SceneConfig cfg = scene_config_from_reader(reader);
  const auto seed = static_cast<std::uint64_t>(
      reader.get_double("seed", 0.0));
  (void)reader.get_double("dataset_dynamic_fraction", -1.0);
  reader.finish();

  const MlpModel model = load_model_file(args.model_path);
  const SyntheticScene scene = generate_scene(cfg, seed);
  const std::vector<FramePair> pairs = observe_all(scene);

  DepthFilterParams filter_params;
  filter_params.eta = args.eta;
  RobustSolverConfig solver_cfg;
  solver_cfg.huber_delta = args.huber;
  if (!filter_params.valid() || !solver_cfg.valid()) {
    throw ConfigError("invalid --eta or --huber value");
  }

  const CameraIntrinsics k = cfg.intrinsics();
  const SequenceResult mlp_run = run_sequence(pairs, k, ClassifierMode::kMlp, &model,
                                              filter_params, solver_cfg);
  const SequenceResult naive_run = run_sequence(
      pairs, k, ClassifierMode::kAllPoints, nullptr, filter_params, solver_cfg);
  const SequenceResult oracle_run = run_sequence(
      pairs, k, ClassifierMode::kOracle, nullptr, filter_params, solver_cfg);

  const double mlp_ate = ate_rmse(mlp_run.trajectory, scene.trajectory);
  const double naive_ate = ate_rmse(naive_run.trajectory, scene.trajectory);
  const double oracle_ate = ate_rmse(oracle_run.trajectory, scene.trajectory);

  const fs::path out(args.out_dir);
  const auto dump_trajectory = [&](const char* name, const SequenceResult& run) {
    std::ostringstream body;
    write_trajectory(run.trajectory, body);
    write_file(out / name, body.str());
  };
  dump_trajectory("trajectory_mlp.txt", mlp_run);
  dump_trajectory("trajectory_naive.txt", naive_run);
  dump_trajectory("trajectory_oracle.txt", oracle_run);
  {
    std::ostringstream body;
    write_trajectory(scene.trajectory, body);
    write_file(out / "trajectory_groundtruth.txt", body.str());
  }
  {
    std::ostringstream body;
    body << "method,ate_m\n";
    body << "pipeline-mlp," << format_double(mlp_ate) << '\n';
    body << "naive-all-points," << format_double(naive_ate) << '\n';
    body << "oracle-classifier," << format_double(oracle_ate) << '\n';
    write_file(out / "ate_report.csv", body.str());
  }
  {
    std::ostringstream body;
    body << "frame,total,outside_box,depth_background,classified_static,"
            "classified_dynamic,coarse_iterations,fine_iterations,coarse_insufficient,"
            "fine_insufficient\n";
    for (std::size_t i = 0; i < mlp_run.frames.size(); ++i) {
      const FrameDiagnostics& d = mlp_run.frames[i].diagnostics;
      body << pairs[i].current_frame << ',' << d.total_points << ',' << d.outside_box
           << ',' << d.depth_background << ',' << d.classified_static << ','
           << d.classified_dynamic << ',' << d.coarse_iterations << ','
           << d.fine_iterations << ',' << (d.coarse_insufficient ? 1 : 0) << ','
           << (d.fine_insufficient ? 1 : 0) << '\n';
    }
    write_file(out / "diagnostics_mlp.csv", body.str());
  }
  {
    ConfigMap resolved = scene_config_to_map(cfg);
    resolved["seed"] = std::to_string(seed);
    resolved["eta"] = format_double(args.eta);
    resolved["huber"] = format_double(args.huber);
    resolved["model"] = args.model_path;
    resolved["scene"] = args.scene_dir;
    std::ostringstream body;
    write_config(resolved, body);
    write_file(out / "config_resolved.cfg", body.str());
  }

  print_aligned({{"method", "ate_m"},
                 {"pipeline-mlp", format_double(mlp_ate)},
                 {"naive-all-points", format_double(naive_ate)},
                 {"oracle-classifier", format_double(oracle_ate)}},
                std::cout);
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_report(const std::string& in_path) {
  const std::string text = read_file(in_path);
  std::istringstream in(text);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    const std::string_view content = trim(line);
    if (content.empty() || content.front() == '#') continue;
    std::vector<std::string> row;
    for (const auto& field : split(content, ',')) {
      row.emplace_back(trim(field));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    throw DataError(in_path + ": no table rows");
  }
  print_aligned(rows, std::cout);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MLP-based dynamic/static feature discrimination and stereo "
               "visual odometry on synthetic scenes"};
  app.require_subcommand(1);

  GenArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic scene and dataset");
  gen->add_option("--config", gen_args.config_path, "generator config file (key = value)");
  gen->add_option("--seed", gen_args.seed, "RNG seed")->required();
  gen->add_option("--out", gen_args.out_dir, "output directory")->required();

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "train the discriminator");
  train_cmd->add_option("--data", train_args.data_path, "dataset file")->required();
  train_cmd->add_option("--config", train_args.config_path, "training config file");
  train_cmd->add_option("--out", train_args.out_dir, "output directory")->required();
  train_cmd->add_option("--seed", train_args.seed, "RNG seed")->required();
  auto* epochs_opt =
      train_cmd->add_option("--epochs", train_args.train.epochs, "training epochs");
  auto* batch_opt =
      train_cmd->add_option("--batch-size", train_args.train.batch_size, "batch size");
  auto* lr_opt =
      train_cmd->add_option("--lr", train_args.train.learning_rate, "learning rate");
  auto* gamma_opt = train_cmd->add_option("--gamma", train_args.train.lr_decay_gamma,
                                          "learning-rate decay factor");
  auto* milestones_opt =
      train_cmd->add_option("--milestones", train_args.train.lr_milestones,
                            "decay epochs, comma separated")
          ->delimiter(',');

  EvalArgs eval_args;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate the discriminator and threshold baselines");
  eval_cmd->add_option("--data", eval_args.data_path, "dataset file")->required();
  eval_cmd->add_option("--model", eval_args.model_path, "trained model file");
  eval_cmd->add_option("--out", eval_args.out_dir, "output directory (metrics.csv)");
  eval_cmd->add_option("--seed", eval_args.seed, "split seed")->required();
  eval_cmd->add_flag("!--no-baselines", eval_args.baselines,
                     "skip the threshold baselines");

  VoArgs vo_args;
  CLI::App* vo_cmd = app.add_subcommand(
      "vo", "run the visual odometry pipeline variants on a generated scene");
  vo_cmd->add_option("--scene", vo_args.scene_dir, "scene directory from gen")->required();
  vo_cmd->add_option("--model", vo_args.model_path, "trained model file")->required();
  vo_cmd->add_option("--out", vo_args.out_dir, "output directory")->required();
  vo_cmd->add_option("--eta", vo_args.eta, "depth filter band width");
  vo_cmd->add_option("--huber", vo_args.huber, "robust kernel threshold, px");

  std::string report_path;
  CLI::App* report_cmd =
      app.add_subcommand("report", "render a comma-separated report aligned");
  report_cmd->add_option("--in", report_path, "report file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  train_args.epochs_set = epochs_opt->count() > 0;
  train_args.batch_set = batch_opt->count() > 0;
  train_args.lr_set = lr_opt->count() > 0;
  train_args.gamma_set = gamma_opt->count() > 0;
  train_args.milestones_set = milestones_opt->count() > 0;

  try {
    if (gen->parsed()) return cmd_gen(gen_args);
    if (train_cmd->parsed()) return cmd_train(train_args);
    if (eval_cmd->parsed()) return cmd_eval(eval_args);
    if (vo_cmd->parsed()) return cmd_vo(vo_args);
    if (report_cmd->parsed()) return cmd_report(report_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitConfig;
}
