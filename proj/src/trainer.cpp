#include "rada/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "rada/autodiff.hpp"
#include "rada/losses.hpp"

namespace rada {

TrainingError::TrainingError(std::size_t epoch, std::size_t batch, const std::string& what)
    : std::runtime_error("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
                         ": " + what),
      epoch_(epoch),
      batch_(batch) {}

Dataset make_dataset(const RunConfig& cfg) {
  const auto seed = stream_seed(cfg.master_seed, Stream::Data);
  switch (cfg.dataset) {
    case DatasetKind::Moons: return generate_moons(cfg.moons, seed);
    case DatasetKind::Blobs: return generate_blobs(cfg.blobs, seed);
    case DatasetKind::Csv:
      if (cfg.csv_path.empty()) throw std::invalid_argument("dataset = csv needs csv.path");
      return read_dataset(cfg.csv_path);
  }
  throw std::invalid_argument("unknown dataset kind");
}

namespace {

ModelSpec spec_for(ModelSpec spec, const Dataset& data) {
  spec.input_dim = data.feature_dim;
  spec.num_classes = data.num_classes;
  spec.validate();
  return spec;
}

ModelBundle initial_model(const RunConfig& cfg, const Dataset& data) {
  data.validate_for_training();
  Rng init(cfg.master_seed, Stream::Init);
  return ModelBundle::initialize(spec_for(cfg.model, data), init);
}

std::string fmt9(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 9);
  return std::string(buf, r.ptr);
}

}  // namespace

Trainer::Trainer(RunConfig cfg, Dataset data)
    : cfg_(std::move(cfg)),
      data_(std::move(data)),
      model_(initial_model(cfg_, data_)),
      opt_(OptimizerState::for_params(model_.parameters(), cfg_.learning_rate, cfg_.momentum)),
      shuffle_rng_(cfg_.master_seed, Stream::Shuffle),
      mixup_rng_(cfg_.master_seed, Stream::Mixup) {
  cfg_.loss.validate();
  cfg_.rada.validate();
  cfg_.mmd.validate();
  if (cfg_.rada.relabel_persistent) persistent_.assign(data_.size(), 0);
}

void Trainer::restore(const Checkpoint& ckpt) {
  if (ckpt.config_hash != config_hash(cfg_)) {
    throw std::runtime_error("checkpoint was written by a run with a different configuration");
  }
  if (ckpt.names != model_.parameter_names()) {
    throw std::runtime_error("checkpoint parameter names do not match the model");
  }
  model_ = ModelBundle::from_parameters(model_.spec(), ckpt.params);
  for (std::size_t i = 0; i < ckpt.velocities.size(); ++i) {
    if (ckpt.velocities[i].shape() != opt_.velocities[i].shape()) {
      throw std::runtime_error("checkpoint velocity shape mismatch for " + ckpt.names[i]);
    }
  }
  opt_.velocities = ckpt.velocities;
  if (ckpt.persistent_relabel.size() != persistent_.size()) {
    throw std::runtime_error("checkpoint relabel flags do not match the dataset");
  }
  persistent_ = ckpt.persistent_relabel;
  rada_ = ckpt.rada;
  shuffle_rng_.load_state(ckpt.shuffle_rng);
  mixup_rng_.load_state(ckpt.mixup_rng);
  epoch_ = ckpt.epoch;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config_hash = config_hash(cfg_);
  c.config_text = write_config(cfg_);
  c.epoch = epoch_;
  c.names = model_.parameter_names();
  c.params.assign(model_.parameters().begin(), model_.parameters().end());
  c.velocities = opt_.velocities;
  c.rada = rada_;
  c.shuffle_rng = shuffle_rng_.save_state();
  c.mixup_rng = mixup_rng_.save_state();
  c.persistent_relabel = persistent_;
  return c;
}

BatchResult Trainer::train_batch(const Batch& input, double progress) {
  const double eps = cfg_.loss.clamp_eps;
  const double lambda = cfg_.loss.lambda_at(progress);
  BatchResult out;
  out.target_rows = static_cast<std::size_t>(
      std::count(input.original_domain.begin(), input.original_domain.end(), Domain::Target));

  ad::Graph g;
  const BoundModel m = bind(g, model_);
  const ad::Var f = feature_extract(g, m, g.constant(input.features));
  const ad::Var lp = classify(g, m, f);
  const ad::Var cls = classification_loss(g, lp, input.class_labels, input.class_mask);
  const ad::Var p = discriminate(
      g, m, g.gradient_reversal(discriminator_input(g, model_, f, lp), lambda));
  const auto preds = domain_predictions(g.value(p), eps);

  Batch batch = input;
  if (cfg_.rada_enabled && rada_.active) {
    if (!persistent_.empty()) {
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (persistent_[batch.dataset_index[i]]) batch.working_domain[i] = Domain::Source;
      }
    }
    std::vector<double> p0(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) p0[i] = preds[i].p0;
    const auto decision = select_batch_relabels(batch, p0, cfg_.rada.tau);
    batch = relabel_batch(std::move(batch), decision);
  }

  std::vector<std::size_t> source_rows, relabeled_rows;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch.original_domain[i] == Domain::Source) {
      source_rows.push_back(i);
    } else if (batch.working_domain[i] == Domain::Source) {
      relabeled_rows.push_back(i);
      if (!persistent_.empty()) persistent_[batch.dataset_index[i]] = 1;
    }
  }
  out.relabeled = relabeled_rows.size();

  ReweightMode mode = cfg_.loss.reweight;
  if (mode == ReweightMode::InverseEntropy && progress < 0.5) mode = ReweightMode::Entropy;
  std::vector<Domain> labels = batch.working_domain;
  std::vector<double> weights =
      sample_weights(mode, object_entropy(g.value(lp)), preds, labels);

  ad::Var d_out = p;
  if (cfg_.rada_enabled && cfg_.rada.mixup_enabled && !relabeled_rows.empty()) {
    const MixupPlan plan = draw_mixup(source_rows, relabeled_rows, mixup_rng_);
    const ad::Var base = cfg_.rada.mixup_feature_grad ? f : g.detach(f);
    ad::Var z = mixup_features(g, base, plan);
    if (model_.spec().conditioning == Conditioning::Cdan) {
      ad::Var probs = g.exp(lp);
      if (model_.spec().condition_detach || !cfg_.rada.mixup_feature_grad) probs = g.detach(probs);
      z = cdan_condition(g, z, mixup_features(g, probs, plan));
    }
    const ad::Var pm = discriminate(g, m, g.gradient_reversal(z, lambda));
    d_out = g.concat_rows(std::vector<ad::Var>{p, pm});
    labels.insert(labels.end(), plan.alphas.size(), Domain::Source);
    weights.insert(weights.end(), plan.alphas.size(), 1.0);
    out.mixed = plan.alphas.size();
  }

  const AdversarialLoss adv = adversarial_loss(g, d_out, labels, weights, eps);
  const ad::Var total = g.add(cls, adv.value);
  out.loss_cls = g.value(cls).item();
  out.loss_adv = g.value(adv.value).item();
  out.degenerate = adv.degenerate;
  if (!std::isfinite(g.value(total).item())) {
    throw TrainingError(epoch_ + 1, batch_in_epoch_ + 1,
                        "non-finite loss (cls " + fmt9(out.loss_cls) + ", adv " +
                            fmt9(out.loss_adv) + ")");
  }
  const auto grads = g.backward(total);
  sgd_momentum_step(model_.parameters(), grads, opt_);
  return out;
}

MetricsRow Trainer::train_epoch() {
  const auto batches = make_batches(data_, cfg_.batch_size, shuffle_rng_);
  const double epochs = static_cast<double>(cfg_.epochs);
  const bool active = cfg_.rada_enabled && rada_.active;
  double cls = 0.0, adv = 0.0;
  std::size_t targets = 0, relabeled = 0;
  for (batch_in_epoch_ = 0; batch_in_epoch_ < batches.size(); ++batch_in_epoch_) {
    const double progress =
        (static_cast<double>(epoch_) +
         static_cast<double>(batch_in_epoch_) / static_cast<double>(batches.size())) /
        epochs;
    const auto r = train_batch(batches[batch_in_epoch_], std::min(progress, 1.0));
    cls += r.loss_cls;
    adv += r.loss_adv;
    targets += r.target_rows;
    relabeled += r.relabeled;
    if (r.degenerate) ++degenerate_;
  }
  ++epoch_;

  const Diagnostics d = diagnose(model_, data_, cfg_.mmd);
  MetricsRow row;
  row.epoch = epoch_;
  row.loss_cls = cls / static_cast<double>(batches.size());
  row.loss_adv = adv / static_cast<double>(batches.size());
  row.mean_domain_entropy = d.mean_domain_entropy;
  row.mmd = d.mmd;
  row.target_accuracy = d.target_accuracy;
  row.relabel_fraction =
      targets ? static_cast<double>(relabeled) / static_cast<double>(targets) : 0.0;
  row.rada_active = active;
  if (cfg_.rada_enabled) rada_ = controller_step(d.mean_domain_entropy, rada_, cfg_.rada);
  return row;
}

ModelBundle model_from_checkpoint(const Checkpoint& ckpt, const Dataset& data) {
  const RunConfig cfg = parse_config(ckpt.config_text);
  return ModelBundle::from_parameters(spec_for(cfg.model, data), ckpt.params);
}

std::string metrics_header() {
  return "epoch,loss_cls,loss_adv,mean_domain_entropy,mmd,target_accuracy,relabel_fraction,"
         "rada_active";
}

std::string format_metrics_row(const MetricsRow& r) {
  return std::to_string(r.epoch) + "," + fmt9(r.loss_cls) + "," + fmt9(r.loss_adv) + "," +
         fmt9(r.mean_domain_entropy) + "," + fmt9(r.mmd) + "," + fmt9(r.target_accuracy) + "," +
         fmt9(r.relabel_fraction) + "," + (r.rada_active ? "1" : "0");
}

MetricsRow parse_metrics_row(std::string_view line) {
  std::vector<std::string_view> cells;
  while (true) {
    const auto pos = line.find(',');
    cells.push_back(line.substr(0, pos));
    if (pos == std::string_view::npos) break;
    line = line.substr(pos + 1);
  }
  if (cells.size() != 8) throw std::runtime_error("metrics row: expected 8 columns");
  auto num = [](std::string_view s, auto& v) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
      throw std::runtime_error("metrics row: bad value `" + std::string(s) + "`");
    }
  };
  MetricsRow r;
  std::size_t active = 0;
  num(cells[0], r.epoch);
  num(cells[1], r.loss_cls);
  num(cells[2], r.loss_adv);
  num(cells[3], r.mean_domain_entropy);
  num(cells[4], r.mmd);
  num(cells[5], r.target_accuracy);
  num(cells[6], r.relabel_fraction);
  num(cells[7], active);
  if (active > 1) throw std::runtime_error("metrics row: rada_active must be 0 or 1");
  r.rada_active = active == 1;
  return r;
}

namespace {

std::string checkpoint_name(std::size_t epoch) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "checkpoint_epoch_%04zu.bin", epoch);
  return buf;
}

// Rows of an existing metrics.csv up to and including `epoch`.
std::string kept_metrics(const std::filesystem::path& path, std::size_t epoch) {
  std::ifstream is(path, std::ios::binary);
  std::string out = metrics_header() + "\n";
  if (!is) return out;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (parse_metrics_row(line).epoch > epoch) break;
    out += line + "\n";
  }
  return out;
}

}  // namespace

RunResult run_training(const RunConfig& cfg, const RunOptions& options) {
  Trainer trainer(cfg, make_dataset(cfg));
  if (options.resume_from) trainer.restore(load_checkpoint(*options.resume_from));

  const std::filesystem::path dir = cfg.output_dir;
  std::ofstream metrics;
  if (options.write_files) {
    std::filesystem::create_directories(dir);
    {
      std::ofstream c(dir / "config.cfg", std::ios::binary | std::ios::trunc);
      c << write_config(cfg);
    }
    const std::string kept = options.resume_from
                                 ? kept_metrics(dir / "metrics.csv", trainer.epoch())
                                 : metrics_header() + "\n";
    metrics.open(dir / "metrics.csv", std::ios::binary | std::ios::trunc);
    if (!metrics) throw std::runtime_error("cannot write " + (dir / "metrics.csv").string());
    metrics << kept << std::flush;
  }

  RunResult result{{}, trainer.model(), trainer.rada_state()};
  while (trainer.epoch() < cfg.epochs) {
    const MetricsRow row = trainer.train_epoch();
    result.rows.push_back(row);
    if (options.progress) *options.progress << format_metrics_row(row) << '\n';
    if (options.write_files) {
      metrics << format_metrics_row(row) << '\n' << std::flush;
      if (cfg.checkpoint_every && row.epoch % cfg.checkpoint_every == 0) {
        save_checkpoint(dir / checkpoint_name(row.epoch), trainer.checkpoint());
      }
    }
  }
  if (options.write_files) save_checkpoint(dir / "checkpoint.bin", trainer.checkpoint());
  result.model = trainer.model();
  result.rada = trainer.rada_state();
  return result;
}

}  // namespace rada
