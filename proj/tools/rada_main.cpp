// rada: command-line front end for dataset generation, training, sweeps and
// evaluation.

#include <CLI11.hpp>

#include <charconv>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rada/checkpoint.hpp"
#include "rada/config.hpp"
#include "rada/datasets.hpp"
#include "rada/diagnostics.hpp"
#include "rada/trainer.hpp"

namespace {

constexpr int kUsage = 2;
constexpr int kFailure = 1;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// --config plus one --<key> flag per config key.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "key = value configuration file")
        ->check(CLI::ExistingFile);
    for (const auto& key : rada::config_keys()) {
      std::string name = "--" + std::string(key.name);
      if (key.name == "master_seed") name += ",--seed";
      app.add_option_function<std::string>(
          name, [this, k = std::string(key.name)](const std::string& v) { overrides[k] = v; },
          std::string(key.help));
    }
  }

  rada::RunConfig resolve() const {
    rada::RunConfig cfg = config_path.empty() ? rada::RunConfig{} : rada::load_config(config_path);
    for (const auto& [k, v] : overrides) {
      try {
        rada::set_config_value(cfg, k, v);
      } catch (const rada::ConfigError& e) {
        throw UsageError(std::string("--") + e.what());
      }
    }
    return cfg;
  }
};

rada::Dataset dataset_for(const rada::RunConfig& cfg, const std::string& data_path) {
  return data_path.empty() ? rada::make_dataset(cfg) : rada::read_dataset(data_path);
}

void write_features(std::ostream& os, const rada::Dataset& ds, const rada::Tensor& f) {
  os << "domain,label";
  for (std::size_t j = 0; j < f.cols(); ++j) os << ",f" << j;
  os << '\n';
  char buf[64];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    os << rada::domain_tag(ds.domain_labels[i]) << ',' << ds.class_labels[i];
    for (double v : f.row(i)) {
      auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
      os << ',' << std::string_view(buf, static_cast<std::size_t>(r.ptr - buf));
    }
    os << '\n';
  }
}

std::string g9(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 9);
  return std::string(buf, r.ptr);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relabeling-based adversarial domain adaptation experiments"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  // gen
  auto* gen = app.add_subcommand("gen", "Write a generated dataset as CSV");
  ConfigFlags gen_flags;
  gen_flags.attach(*gen);
  std::string gen_output;
  gen->add_option("-o,--output", gen_output, "Destination CSV")->required();

  // train
  auto* train = app.add_subcommand("train", "Train one run");
  ConfigFlags train_flags;
  train_flags.attach(*train);
  std::string resume_path;
  bool quiet = false;
  train->add_option("--resume", resume_path, "Continue from a checkpoint")
      ->check(CLI::ExistingFile);
  train->add_flag("-q,--quiet", quiet, "Do not echo metrics rows");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Train once per value of one parameter");
  ConfigFlags sweep_flags;
  sweep_flags.attach(*sweep);
  std::string sweep_param, sweep_output = "sweep";
  std::vector<std::string> sweep_values;
  sweep->add_option("--param", sweep_param, "Config key to vary")->required();
  sweep->add_option("--values", sweep_values, "Comma separated values")
      ->required()
      ->delimiter(',');
  sweep->add_option("--output", sweep_output, "Parent directory of the run directories");

  // eval
  auto* eval = app.add_subcommand("eval", "Print diagnostics of a checkpoint");
  std::string eval_ckpt, eval_data;
  eval->add_option("checkpoint", eval_ckpt, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--data", eval_data, "Dataset CSV (default: regenerate from the config)")
      ->check(CLI::ExistingFile);

  // features
  auto* feat = app.add_subcommand("features", "Dump F(x) for every sample as CSV");
  std::string feat_ckpt, feat_data, feat_output;
  feat->add_option("checkpoint", feat_ckpt, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  feat->add_option("--data", feat_data, "Dataset CSV (default: regenerate from the config)")
      ->check(CLI::ExistingFile);
  feat->add_option("-o,--output", feat_output, "Destination CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (gen->parsed()) {
      const auto cfg = gen_flags.resolve();
      if (cfg.dataset == rada::DatasetKind::Csv) throw UsageError("gen needs a generator dataset");
      rada::write_dataset(gen_output, rada::make_dataset(cfg));
    } else if (train->parsed()) {
      const auto cfg = train_flags.resolve();
      rada::RunOptions opts;
      if (!resume_path.empty()) opts.resume_from = resume_path;
      if (!quiet) {
        std::cout << rada::metrics_header() << '\n';
        opts.progress = &std::cout;
      }
      rada::run_training(cfg, opts);
    } else if (sweep->parsed()) {
      const auto base = sweep_flags.resolve();
      for (const auto& v : sweep_values) {
        rada::RunConfig cfg = base;
        try {
          rada::set_config_value(cfg, sweep_param, v);
        } catch (const rada::ConfigError& e) {
          throw UsageError(std::string("--param/--values: ") + e.what());
        }
        cfg.output_dir = (std::filesystem::path(sweep_output) / (sweep_param + "=" + v)).string();
        rada::run_training(cfg);
        std::cout << cfg.output_dir << '\n';
      }
    } else if (eval->parsed()) {
      const auto ckpt = rada::load_checkpoint(eval_ckpt);
      const auto cfg = rada::parse_config(ckpt.config_text);
      const auto ds = dataset_for(cfg, eval_data);
      const auto d = rada::diagnose(rada::model_from_checkpoint(ckpt, ds), ds, cfg.mmd);
      std::cout << "epoch,mean_domain_entropy,mmd,target_accuracy\n"
                << ckpt.epoch << ',' << g9(d.mean_domain_entropy) << ',' << g9(d.mmd) << ','
                << g9(d.target_accuracy) << '\n';
    } else if (feat->parsed()) {
      const auto ckpt = rada::load_checkpoint(feat_ckpt);
      const auto cfg = rada::parse_config(ckpt.config_text);
      const auto ds = dataset_for(cfg, feat_data);
      const auto f = rada::dataset_features(rada::model_from_checkpoint(ckpt, ds), ds);
      if (feat_output.empty()) {
        write_features(std::cout, ds, f);
      } else {
        std::ofstream os(feat_output, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write " + feat_output);
        write_features(os, ds, f);
      }
    }
  } catch (const UsageError& e) {
    std::cerr << "rada: " << e.what() << '\n';
    return kUsage;
  } catch (const rada::ConfigError& e) {
    std::cerr << "rada: config: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "rada: " << e.what() << '\n';
    return kFailure;
  }
  return 0;
}
