#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "devmf/data.hpp"
#include "devmf/dlr.hpp"
#include "devmf/error.hpp"
#include "devmf/eval.hpp"
#include "devmf/optimizer.hpp"
#include "devmf/serialize.hpp"

namespace devmf::cli {

namespace fs = std::filesystem;

namespace {

const std::map<std::string, data::Format> kFormats{
    {"movielens", data::Format::movielens_dat},
    {"csv3", data::Format::csv_triplet},
    {"csv4", data::Format::csv_quad},
};

const std::map<std::string, ModelKind> kKinds{
    {"biased-mf", ModelKind::biased_mf},
    {"dmf", ModelKind::dmf},
    {"ptf", ModelKind::ptf},
    {"dtf", ModelKind::dtf},
};

const std::map<std::string, PriorScaling> kScaling{
    {"unbiased", PriorScaling::unbiased},
    {"per-sample", PriorScaling::per_sample},
};

const std::map<std::string, Schedule> kSchedules{
    {"adagrad", Schedule::adagrad},
    {"constant", Schedule::constant},
};

const std::map<std::string, data::NoiseKind> kNoise{
    {"none", data::NoiseKind::none},
    {"homo", data::NoiseKind::homoscedastic},
    {"hetero", data::NoiseKind::lowrank_hetero},
};

std::string extension(data::Format f) { return f == data::Format::movielens_dat ? ".dat" : ".csv"; }

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  return out;
}

void close_checked(std::ofstream& out, const fs::path& path) {
  out.close();
  if (!out) throw Error("failed writing " + path.string());
}

std::string fmt(double v) { return format_exact(v); }

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> sizes;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(part, &used);
      if (used != part.size() || v == 0) throw std::invalid_argument(part);
      sizes.push_back(v);
    } catch (const std::logic_error&) {
      throw ConfigError("bad size list '" + text + "', expected e.g. 200x200 or 20x20x5");
    }
  }
  if (sizes.size() < 2 || sizes.size() > kMaxModes) throw ConfigError("sizes need 2 or 3 modes");
  return sizes;
}

std::vector<data::IdMap> read_maps(const std::string& model_path, std::size_t modes) {
  std::vector<data::IdMap> maps;
  for (std::size_t m = 0; m < modes; ++m) {
    const std::string path = id_map_path(model_path, m);
    std::ifstream in(path);
    if (!in) throw Error("missing ID map " + path);
    maps.push_back(data::IdMap::read_csv(in));
  }
  return maps;
}

/// Drops entries whose IDs are unknown to the first `sizes` dense IDs of each mode.
ObservationSet restrict_to(const ObservationSet& obs, const std::vector<std::size_t>& sizes) {
  ObservationSet out{sizes, {}};
  for (const Entry& e : obs.entries) {
    bool inside = true;
    for (std::size_t m = 0; m < sizes.size(); ++m) inside = inside && e.index[m] < sizes[m];
    if (inside) out.entries.push_back(e);
  }
  return out;
}

// ---- split -----------------------------------------------------------------

struct SplitArgs {
  std::string input;
  std::string format = "csv3";
  std::string out_dir;
  data::SplitSpec spec;
};

void cmd_split(const SplitArgs& a, std::ostream& out) {
  const data::Format format = kFormats.at(a.format);
  const auto loaded = data::load_observations(a.input, format);
  const data::Split parts = data::split(loaded.obs, a.spec);

  const fs::path dir(a.out_dir);
  const std::pair<const char*, const ObservationSet*> files[] = {
      {"train", &parts.train}, {"val", &parts.val}, {"test", &parts.test}};
  for (const auto& [name, set] : files) {
    const fs::path path = dir / (std::string(name) + extension(format));
    auto f = open_out(path);
    data::write_observations(f, *set, format, loaded.maps);
    close_checked(f, path);
  }
  const fs::path manifest = dir / "split.manifest";
  auto f = open_out(manifest);
  f << "input=" << a.input << "\nformat=" << a.format << "\nseed=" << a.spec.seed
    << "\ntest_fraction=" << fmt(a.spec.test_fraction)
    << "\nval_fraction=" << fmt(a.spec.val_fraction_of_train) << "\nn_total=" << loaded.obs.size()
    << "\nn_train=" << parts.train.size() << "\nn_val=" << parts.val.size()
    << "\nn_test=" << parts.test.size() << '\n';
  close_checked(f, manifest);
  out << "train=" << parts.train.size() << " val=" << parts.val.size() << " test=" << parts.test.size()
      << '\n';
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string train_path;
  std::string val_path;
  std::string format = "csv3";
  std::string model = "dmf";
  std::string prior_scaling = "unbiased";
  std::string schedule = "adagrad";
  std::optional<std::size_t> dev_rank;
  std::optional<double> dev_lr;
  bool no_biases = false;
  bool no_shuffle = false;
  bool timing = false;
  std::string model_out;
  std::string metrics_out;
  TrainConfig cfg;
};

void cmd_train(TrainArgs a, std::ostream& out) {
  const data::Format format = kFormats.at(a.format);
  TrainConfig cfg = a.cfg;
  cfg.model_kind = kKinds.at(a.model);
  cfg.hp.prior_scaling = kScaling.at(a.prior_scaling);
  cfg.schedule = kSchedules.at(a.schedule);
  cfg.hp.rank_dev = a.dev_rank.value_or(cfg.hp.rank_mean);
  cfg.hp.dev_learning_rate = a.dev_lr;
  cfg.hp.use_biases = !a.no_biases;
  cfg.shuffle = !a.no_shuffle;
  if (data::mode_count(format) != mode_count(cfg.model_kind))
    throw ConfigError("--model " + a.model + " does not match --format " + a.format);

  const auto loaded = data::load_observations(a.train_path, format);
  if (loaded.obs.empty()) throw ConfigError("training file has no observations");
  std::optional<ObservationSet> val;
  if (!a.val_path.empty()) {
    const auto v = data::load_observations(a.val_path, format, &loaded.maps);
    val = restrict_to(v.obs, loaded.obs.mode_sizes);
  }

  const TrainResult result = train(loaded.obs, cfg, val ? &*val : nullptr);

  save_model(a.model_out, result.mean, result.dev);
  for (std::size_t m = 0; m < loaded.maps.size(); ++m) {
    const fs::path path = id_map_path(a.model_out, m);
    auto f = open_out(path);
    loaded.maps[m].write_csv(f);
    close_checked(f, path);
  }
  if (!a.metrics_out.empty()) {
    auto f = open_out(a.metrics_out);
    write_report_csv(f, result.report, a.timing);
    close_checked(f, a.metrics_out);
  }

  out << "epochs=" << result.report.epochs.size() << " best_epoch=" << result.report.best_epoch;
  if (!result.report.epochs.empty()) {
    const EpochRecord& last = result.report.epochs.back();
    out << " final_train_rmse=" << fmt(last.train_rmse);
    std::optional<double> best_val;
    for (const EpochRecord& r : result.report.epochs)
      if (r.val_rmse) best_val = std::min(best_val.value_or(INFINITY), *r.val_rmse);
    if (best_val) out << " best_val_rmse=" << fmt(*best_val);
  }
  out << '\n';
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string model;
  std::string test;
  std::string format = "csv3";
  std::optional<double> default_rating;
  std::string metrics_out;
};

void cmd_eval(const EvalArgs& a, std::ostream& out) {
  const data::Format format = kFormats.at(a.format);
  const ModelPair model = load_model(a.model);
  if (model.mean.modes() != data::mode_count(format))
    throw ShapeError("model has " + std::to_string(model.mean.modes()) + " modes but --format " + a.format +
                     " has " + std::to_string(data::mode_count(format)));
  const auto maps = read_maps(a.model, model.mean.modes());
  const auto sizes = model.mean.mode_sizes();
  for (std::size_t m = 0; m < sizes.size(); ++m)
    if (maps[m].size() != sizes[m]) throw ShapeError("ID map of mode " + std::to_string(m) + " does not match the model");

  const auto test = data::load_observations(a.test, format, &maps);
  const data::ColdStartKind kind =
      format == data::Format::movielens_dat ? data::ColdStartKind::rating : data::ColdStartKind::global_mean;
  eval::ColdStartPolicy policy;
  policy.default_value = a.default_rating.value_or(data::cold_start_default(kind, model.mean.mu));
  for (std::size_t n : sizes) policy.seen.emplace_back(n, true);

  const eval::MetricReport report = eval::evaluate_model(model.mean, test.obs, &policy);
  out << "rmse=" << fmt(report.rmse) << " mse=" << fmt(report.mse) << " n=" << report.n
      << " cold_start_count=" << report.cold_start_count << '\n';
  if (!a.metrics_out.empty()) {
    auto f = open_out(a.metrics_out);
    eval::write_metrics_header(f);
    eval::write_metrics_row(f, fs::path(a.model).filename().string(), 1.0, 0, report);
    close_checked(f, a.metrics_out);
  }
}

// ---- synth -----------------------------------------------------------------

struct SynthArgs {
  std::string sizes = "200x200";
  std::string noise = "hetero";
  std::string out_dir;
  data::SyntheticSpec spec;
};

void write_field(const fs::path& path, const data::SyntheticData& syn, const std::vector<double>& field) {
  ObservationSet cells = syn.clean_cells();
  for (std::size_t k = 0; k < cells.size(); ++k) cells.entries[k].value = field[k];
  const data::Format format = cells.modes() == 3 ? data::Format::csv_quad : data::Format::csv_triplet;
  std::vector<data::IdMap> maps;
  for (std::size_t n : cells.mode_sizes) maps.push_back(data::IdMap::identity(n));
  auto f = open_out(path);
  data::write_observations(f, cells, format, maps);
  close_checked(f, path);
}

void cmd_synth(SynthArgs a, std::ostream& out) {
  a.spec.mode_sizes = parse_sizes(a.sizes);
  a.spec.noise = kNoise.at(a.noise);
  const data::SyntheticData syn = data::synthesize(a.spec);

  const fs::path dir(a.out_dir);
  const data::Format format = syn.observed.modes() == 3 ? data::Format::csv_quad : data::Format::csv_triplet;
  std::vector<data::IdMap> maps;
  for (std::size_t n : syn.observed.mode_sizes) maps.push_back(data::IdMap::identity(n));
  {
    const fs::path path = dir / "observed.csv";
    auto f = open_out(path);
    data::write_observations(f, syn.observed, format, maps);
    close_checked(f, path);
  }
  write_field(dir / "clean.csv", syn, syn.clean);
  write_field(dir / "variance.csv", syn, syn.variance);

  const fs::path manifest = dir / "synth.manifest";
  auto f = open_out(manifest);
  f << "sizes=" << a.sizes << "\nrank_mean=" << a.spec.rank_mean << "\nrank_dev=" << a.spec.rank_dev
    << "\nobserved_fraction=" << fmt(a.spec.observed_fraction) << "\nnoise=" << a.noise
    << "\nnoise_level=" << fmt(a.spec.noise_level) << "\nseed=" << a.spec.seed
    << "\nformat=" << (format == data::Format::csv_quad ? "csv4" : "csv3")
    << "\nn_observed=" << syn.observed.size()
    << "\nobserved=observed.csv\nclean=clean.csv\nvariance=variance.csv\n";
  close_checked(f, manifest);
  out << "observed=" << syn.observed.size() << " cells=" << syn.clean.size() << '\n';
}

// ---- demo-dlr --------------------------------------------------------------

struct DemoArgs {
  std::size_t n = 20;
  std::size_t seeds = 100;
  unsigned seed = 0;
  double noise_variance = 0.01;
  std::string out_path;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void cmd_demo_dlr(const DemoArgs& a, std::ostream& out) {
  if (a.seeds == 0) throw ConfigError("--seeds must be positive");
  std::vector<double> ols, dlr, ratio;
  std::size_t wins = 0;
  std::ostringstream csv;
  csv << "seed,n,ols_error,dlr_error\n";
  for (std::size_t k = 0; k < a.seeds; ++k) {
    dlr::LineFitOptions opt;
    opt.n = a.n;
    opt.seed = a.seed + static_cast<unsigned>(k);
    opt.noise_variance = a.noise_variance;
    const auto r = dlr::line_fit_experiment(opt);
    ols.push_back(r.ols_param_error);
    dlr.push_back(r.dlr_param_error);
    if (r.ols_param_error > 0.0) ratio.push_back(r.dlr_param_error / r.ols_param_error);
    wins += r.dlr_param_error < r.ols_param_error;
    csv << opt.seed << ',' << opt.n << ',' << fmt(r.ols_param_error) << ',' << fmt(r.dlr_param_error) << '\n';
  }
  if (!a.out_path.empty()) {
    auto f = open_out(a.out_path);
    f << csv.str();
    close_checked(f, a.out_path);
  }
  out << "median_ols_error=" << fmt(median(ols)) << " median_dlr_error=" << fmt(median(dlr));
  if (!ratio.empty()) out << " median_ratio=" << fmt(median(ratio));
  out << " dlr_wins=" << wins << '/' << a.seeds << '\n';
}

template <class T>
void add_choice(CLI::App* app, const std::string& flag, std::string& target,
                const std::map<std::string, T>& choices, const std::string& help) {
  std::vector<std::string> names;
  for (const auto& [k, v] : choices) names.push_back(k);
  app->add_option(flag, target, help)->check(CLI::IsMember(names))->capture_default_str();
}

/// Expands `--config <file>` into the flags it lists. The file holds key=value
/// lines whose keys are long flag names; a key also given on the command line
/// keeps the command-line value. Boolean flags take true or false.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::optional<std::string> path;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--config" && k + 1 < args.size()) {
      path = args[k + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(k), args.begin() + static_cast<std::ptrdiff_t>(k + 2));
      break;
    }
    if (args[k].rfind("--config=", 0) == 0) {
      path = args[k].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(k));
      break;
    }
  }
  if (!path) return args;

  std::ifstream in(*path);
  if (!in) throw ConfigError("cannot open config file " + *path);
  const auto given = [&](const std::string& flag) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  std::vector<std::string> extra;
  for (const CLI::ConfigItem& item : CLI::ConfigINI().from_config(in)) {
    const std::string flag = "--" + item.name;
    if (item.name.empty() || given(flag)) continue;
    if (item.inputs.size() == 1 && (item.inputs[0] == "true" || item.inputs[0] == "false")) {
      if (item.inputs[0] == "true") extra.push_back(flag);
      continue;
    }
    extra.push_back(flag);
    extra.insert(extra.end(), item.inputs.begin(), item.inputs.end());
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

}  // namespace

std::string id_map_path(const std::string& model_path, std::size_t mode) {
  return model_path + ".mode" + std::to_string(mode) + ".csv";
}

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deviation-driven matrix and tensor factorization"};
  app.require_subcommand(1);
  std::string config_path;

  SplitArgs split_args;
  auto* split_cmd = app.add_subcommand("split", "Split an observation file into train/val/test");
  split_cmd->add_option("--config", config_path, "key=value file; flags override it");
  split_cmd->add_option("--input", split_args.input, "Observation file")->required();
  add_choice(split_cmd, "--format", split_args.format, kFormats, "Input format");
  split_cmd->add_option("--test-fraction", split_args.spec.test_fraction)->capture_default_str();
  split_cmd->add_option("--val-fraction", split_args.spec.val_fraction_of_train,
                        "Validation share of the non-test part")->capture_default_str();
  split_cmd->add_option("--seed", split_args.spec.seed)->capture_default_str();
  split_cmd->add_option("--out-dir", split_args.out_dir)->required();

  TrainArgs train_args;
  Hyperparams& hp = train_args.cfg.hp;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write it with per-epoch metrics");
  train_cmd->add_option("--config", config_path, "key=value file; flags override it");
  train_cmd->add_option("--train", train_args.train_path, "Training observations")->required();
  train_cmd->add_option("--val", train_args.val_path, "Validation observations (enables early stopping)");
  add_choice(train_cmd, "--format", train_args.format, kFormats, "Input format");
  add_choice(train_cmd, "--model", train_args.model, kKinds, "Model kind");
  train_cmd->add_option("--rank", hp.rank_mean, "Mean rank D")->capture_default_str();
  train_cmd->add_option("--dev-rank", train_args.dev_rank, "Deviation rank D' (default: --rank)");
  train_cmd->add_option("--lr", hp.learning_rate, "Base learning rate")->capture_default_str();
  train_cmd->add_option("--dev-lr", train_args.dev_lr, "Deviation base learning rate (default: --lr)");
  train_cmd->add_option("--epochs", hp.epochs)->capture_default_str();
  train_cmd->add_option("--sigma-u2", hp.sigma_u2)->capture_default_str();
  train_cmd->add_option("--sigma-v2", hp.sigma_v2)->capture_default_str();
  train_cmd->add_option("--sigma-w2", hp.sigma_w2, "Third-mode prior variance")->capture_default_str();
  train_cmd->add_option("--lambda-p", hp.lambda_p)->capture_default_str();
  train_cmd->add_option("--lambda-q", hp.lambda_q)->capture_default_str();
  train_cmd->add_option("--lambda-s", hp.lambda_s, "Third-mode exponential prior rate")->capture_default_str();
  train_cmd->add_option("--delta-sigma2", hp.delta_sigma2)->capture_default_str();
  add_choice(train_cmd, "--prior-scaling", train_args.prior_scaling, kScaling, "Prior gradient scaling");
  add_choice(train_cmd, "--schedule", train_args.schedule, kSchedules, "Learning-rate schedule");
  train_cmd->add_option("--patience", train_args.cfg.early_stop_patience, "Early-stopping patience, 0 disables")
      ->capture_default_str();
  train_cmd->add_option("--val-fraction", train_args.cfg.val_fraction,
                        "Holdout share of --train when --val is absent")->capture_default_str();
  train_cmd->add_flag("--no-biases", train_args.no_biases, "Do not learn bias terms");
  train_cmd->add_flag("--no-shuffle", train_args.no_shuffle, "Visit observations in file order");
  train_cmd->add_flag("--timing", train_args.timing, "Record per-epoch seconds in the metrics CSV");
  train_cmd->add_option("--seed", hp.seed)->capture_default_str();
  train_cmd->add_option("--model-out", train_args.model_out)->required();
  train_cmd->add_option("--metrics-out", train_args.metrics_out);

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model on a test file");
  eval_cmd->add_option("--config", config_path, "key=value file; flags override it");
  eval_cmd->add_option("--model", eval_args.model)->required();
  eval_cmd->add_option("--test", eval_args.test)->required();
  add_choice(eval_cmd, "--format", eval_args.format, kFormats, "Input format");
  eval_cmd->add_option("--default-rating", eval_args.default_rating,
                       "Cold-start prediction (default: 3 for movielens, else the training mean)");
  eval_cmd->add_option("--metrics-out", eval_args.metrics_out);
  unsigned eval_seed = 0;
  eval_cmd->add_option("--seed", eval_seed, "Accepted for uniformity; evaluation is deterministic");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic low-rank dataset");
  synth_cmd->add_option("--config", config_path, "key=value file; flags override it");
  synth_cmd->add_option("--sizes", synth_args.sizes, "Mode sizes, e.g. 200x200 or 20x20x5")->capture_default_str();
  synth_cmd->add_option("--rank", synth_args.spec.rank_mean)->capture_default_str();
  synth_cmd->add_option("--dev-rank", synth_args.spec.rank_dev)->capture_default_str();
  synth_cmd->add_option("--observed-fraction", synth_args.spec.observed_fraction)->capture_default_str();
  add_choice(synth_cmd, "--noise", synth_args.noise, kNoise, "Noise model");
  synth_cmd->add_option("--noise-level", synth_args.spec.noise_level,
                        "Variance (homo) or variance floor (hetero)")->capture_default_str();
  synth_cmd->add_option("--seed", synth_args.spec.seed)->capture_default_str();
  synth_cmd->add_option("--out-dir", synth_args.out_dir)->required();

  DemoArgs demo_args;
  auto* demo_cmd = app.add_subcommand("demo-dlr", "Compare OLS and deviation-weighted regression on y = x + noise");
  demo_cmd->add_option("--config", config_path, "key=value file; flags override it");
  demo_cmd->add_option("--n", demo_args.n, "Samples per run")->capture_default_str();
  demo_cmd->add_option("--seeds", demo_args.seeds, "Number of seeds")->capture_default_str();
  demo_cmd->add_option("--seed", demo_args.seed, "First seed")->capture_default_str();
  demo_cmd->add_option("--noise-variance", demo_args.noise_variance)->capture_default_str();
  demo_cmd->add_option("--out", demo_args.out_path, "CSV output");

  std::vector<std::string> args;
  try {
    args = expand_config(std::vector<std::string>(argv.begin() + (argv.empty() ? 0 : 1), argv.end()));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*split_cmd) cmd_split(split_args, out);
    else if (*train_cmd) cmd_train(train_args, out);
    else if (*eval_cmd) cmd_eval(eval_args, out);
    else if (*synth_cmd) cmd_synth(synth_args, out);
    else if (*demo_cmd) cmd_demo_dlr(demo_args, out);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace devmf::cli
