#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "rada/trainer.hpp"

using namespace rada;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config() {
  RunConfig c;
  c.moons.n_per_domain = 40;
  c.model.feature_widths = {8, 4};
  c.model.discriminator_hidden = {4};
  c.batch_size = 16;
  c.epochs = 2;
  c.mmd.max_samples_per_domain = 40;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("rada_trainer_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// Plain-loop CDAN+E objective. Conditioning probabilities and adversarial
// weights are passed in fixed, as the training loop treats them as constants.
struct Oracle {
  std::size_t d_in = 2, d_f = 3, n_cls = 2, d_h = 4;
  double lambda = 0.7;

  // params: F.w [d_in,d_f], F.b, C.w [d_f,n_cls], C.b, D0.w [d_f*n_cls,d_h], D0.b, D1.w [d_h,1], D1.b
  struct Parts {
    std::vector<std::vector<double>> probs;
    std::vector<double> weights;
    double cls = 0.0, adv = 0.0;
  };

  Parts eval(const std::vector<Tensor>& p, const Batch& b, const Parts* fixed) const {
    const std::size_t n = b.size();
    Parts out;
    std::vector<std::vector<double>> f(n, std::vector<double>(d_f)), lp(n, std::vector<double>(n_cls));
    std::vector<double> ent(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d_f; ++j) {
        double s = p[1][j];
        for (std::size_t k = 0; k < d_in; ++k) s += b.features.at(i, k) * p[0].at(k, j);
        f[i][j] = std::max(s, 0.0);
      }
      std::vector<double> logit(n_cls);
      double mx = -INFINITY;
      for (std::size_t c = 0; c < n_cls; ++c) {
        logit[c] = p[3][c];
        for (std::size_t j = 0; j < d_f; ++j) logit[c] += f[i][j] * p[2].at(j, c);
        mx = std::max(mx, logit[c]);
      }
      double z = 0.0;
      for (double v : logit) z += std::exp(v - mx);
      std::vector<double> pr(n_cls);
      for (std::size_t c = 0; c < n_cls; ++c) {
        lp[i][c] = logit[c] - mx - std::log(z);
        pr[c] = std::exp(lp[i][c]);
        ent[i] -= pr[c] * lp[i][c];
      }
      out.probs.push_back(pr);
    }
    const auto& probs = fixed ? fixed->probs : out.probs;

    double cls = 0.0;
    std::size_t ns = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!b.class_mask[i]) continue;
      cls -= lp[i][b.class_labels[i]];
      ++ns;
    }
    out.cls = cls / static_cast<double>(ns);

    if (fixed) {
      out.weights = fixed->weights;
    } else {
      out.weights.resize(n);
      for (Domain d : {Domain::Source, Domain::Target}) {
        double sum = 0.0;
        std::size_t cnt = 0;
        for (std::size_t i = 0; i < n; ++i)
          if (b.working_domain[i] == d) sum += 1.0 + std::exp(-ent[i]), ++cnt;
        for (std::size_t i = 0; i < n; ++i)
          if (b.working_domain[i] == d) out.weights[i] = (1.0 + std::exp(-ent[i])) * cnt / sum;
      }
    }

    double num[2] = {0, 0}, den[2] = {0, 0};
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> zin(d_f * n_cls);
      for (std::size_t j = 0; j < d_f; ++j)
        for (std::size_t c = 0; c < n_cls; ++c) zin[j * n_cls + c] = f[i][j] * probs[i][c];
      double o = p[7][0];
      for (std::size_t h = 0; h < d_h; ++h) {
        double s = p[5][h];
        for (std::size_t k = 0; k < zin.size(); ++k) s += zin[k] * p[4].at(k, h);
        o += std::max(s, 0.0) * p[6].at(h, 0);
      }
      const double ps = 1.0 / (1.0 + std::exp(-o));
      const int t = b.working_domain[i] == Domain::Target;
      num[t] -= out.weights[i] * std::log(t ? 1.0 - ps : ps);
      den[t] += out.weights[i];
    }
    out.adv = num[0] / den[0] + num[1] / den[1];
    return out;
  }

  // Gradient of cls + adv with the adversarial part reversed (scaled by
  // -lambda) for F and C.
  std::vector<Tensor> grads(std::vector<Tensor> p, const Batch& b) const {
    const Parts base = eval(p, b, nullptr);
    std::vector<Tensor> g;
    const double h = 1e-6;
    for (std::size_t t = 0; t < p.size(); ++t) {
      Tensor gt(p[t].shape());
      for (std::size_t i = 0; i < p[t].numel(); ++i) {
        const double keep = p[t][i];
        p[t][i] = keep + h;
        const Parts up = eval(p, b, &base);
        p[t][i] = keep - h;
        const Parts down = eval(p, b, &base);
        p[t][i] = keep;
        const double dc = (up.cls - down.cls) / (2 * h), da = (up.adv - down.adv) / (2 * h);
        gt[i] = dc + (t < 4 ? -lambda : 1.0) * da;
      }
      g.push_back(gt);
    }
    return g;
  }
};

}  // namespace

TEST_CASE("disabled controller reports zeros") {
  RunConfig c = tiny_config();
  c.rada_enabled = false;
  c.epochs = 3;
  RunOptions o;
  o.write_files = false;
  const auto r = run_training(c, o);
  REQUIRE(r.rows.size() == 3);
  for (const auto& row : r.rows) {
    CHECK(row.relabel_fraction == 0.0);
    CHECK_FALSE(row.rada_active);
  }
  CHECK(r.rada == RadaState{});
}

TEST_CASE("same config and seed give byte-identical metrics") {
  RunConfig c = tiny_config();
  c.output_dir = fresh_dir("det_a").string();
  run_training(c);
  RunConfig d = c;
  d.output_dir = fresh_dir("det_b").string();
  run_training(d);
  const std::string a = slurp(fs::path(c.output_dir) / "metrics.csv");
  CHECK(a == slurp(fs::path(d.output_dir) / "metrics.csv"));
  CHECK(a.rfind(metrics_header() + "\n", 0) == 0);
  CHECK(a.find('\r') == std::string::npos);
  RunConfig e = c;
  e.master_seed = 1;
  e.output_dir = fresh_dir("det_c").string();
  run_training(e);
  CHECK(a != slurp(fs::path(e.output_dir) / "metrics.csv"));
  for (const auto& p : {c.output_dir, d.output_dir, e.output_dir}) fs::remove_all(p);
}

TEST_CASE("resume continues the metrics sequence") {
  RunConfig straight = tiny_config();
  straight.epochs = 4;
  straight.checkpoint_every = 2;
  straight.rada.patience_k = 1;
  straight.output_dir = fresh_dir("straight").string();
  run_training(straight);
  CHECK(fs::exists(fs::path(straight.output_dir) / "checkpoint_epoch_0002.bin"));
  CHECK(fs::exists(fs::path(straight.output_dir) / "checkpoint_epoch_0004.bin"));

  RunConfig first = straight;
  first.epochs = 2;
  first.output_dir = fresh_dir("resumed").string();
  run_training(first);
  RunConfig rest = straight;
  rest.output_dir = first.output_dir;
  RunOptions o;
  o.resume_from = fs::path(first.output_dir) / "checkpoint.bin";
  const auto r = run_training(rest, o);
  CHECK(r.rows.size() == 2);
  CHECK(slurp(fs::path(straight.output_dir) / "metrics.csv") ==
        slurp(fs::path(rest.output_dir) / "metrics.csv"));
  auto a = load_checkpoint(fs::path(straight.output_dir) / "checkpoint.bin");
  auto b = load_checkpoint(fs::path(rest.output_dir) / "checkpoint.bin");
  CHECK(a.config_hash == b.config_hash);
  a.config_text = b.config_text = "";
  CHECK(a == b);

  RunConfig other = rest;
  other.rada.tau = 0.2;
  CHECK_THROWS_AS(run_training(other, o), std::runtime_error);
  fs::remove_all(straight.output_dir);
  fs::remove_all(first.output_dir);
}

TEST_CASE("activation and relabel accounting") {
  RunConfig c = tiny_config();
  c.epochs = 8;
  c.rada.patience_k = 1;
  c.rada.tau = 0.05;
  RunOptions o;
  o.write_files = false;
  const auto r = run_training(c, o);
  bool seen_active = false;
  for (const auto& row : r.rows) {
    CHECK(row.relabel_fraction >= 0.0);
    CHECK(row.relabel_fraction <= 1.0);
    if (!row.rada_active) {
      CHECK_FALSE(seen_active);
      CHECK(row.relabel_fraction == 0.0);
    }
    seen_active = seen_active || row.rada_active;
  }
  CHECK(seen_active);
  CHECK(r.rows.back().relabel_fraction > 0.0);
}

TEST_CASE("mixup draws do not disturb shuffling") {
  RunConfig on = tiny_config();
  on.rada.patience_k = 1;
  on.rada.tau = 0.05;
  on.epochs = 4;
  RunConfig off = on;
  off.rada.mixup_enabled = false;
  Trainer a(on, make_dataset(on)), b(off, make_dataset(off));
  for (int e = 0; e < 4; ++e) {
    a.train_epoch();
    b.train_epoch();
    CHECK(a.checkpoint().shuffle_rng == b.checkpoint().shuffle_rng);
  }
  CHECK(a.rada_state().active);
  CHECK(a.checkpoint().mixup_rng != b.checkpoint().mixup_rng);
  CHECK(b.checkpoint().mixup_rng == Rng(off.master_seed, Stream::Mixup).save_state());
}

TEST_CASE("baseline step equals a hand-assembled CDAN+E objective") {
  RunConfig c;
  c.model.feature_widths = {3};
  c.model.discriminator_hidden = {4};
  c.model.conditioning = Conditioning::Cdan;
  c.loss.reweight = ReweightMode::Entropy;
  c.loss.lambda = 0.7;
  c.rada_enabled = false;
  c.learning_rate = 0.1;
  c.momentum = 0.9;
  c.batch_size = 8;
  c.moons.n_per_domain = 8;
  Trainer t(c, make_dataset(c));
  Rng shuffle(5);
  const auto batches = make_batches(t.data(), 8, shuffle);
  REQUIRE(batches.size() >= 2);

  const Oracle oracle;
  std::vector<Tensor> p(t.model().parameters().begin(), t.model().parameters().end());
  std::vector<Tensor> v;
  for (const auto& x : p) v.emplace_back(x.shape());
  for (int step = 0; step < 2; ++step) {
    const auto expect = oracle.eval(p, batches[step], nullptr);
    const auto g = oracle.grads(p, batches[step]);
    const auto got = t.train_batch(batches[step], 0.5);
    CHECK(got.loss_cls == doctest::Approx(expect.cls).epsilon(1e-12));
    CHECK(got.loss_adv == doctest::Approx(expect.adv).epsilon(1e-12));
    for (std::size_t k = 0; k < p.size(); ++k) {
      for (std::size_t i = 0; i < p[k].numel(); ++i) {
        v[k][i] = c.momentum * v[k][i] + g[k][i];
        p[k][i] -= c.learning_rate * v[k][i];
      }
    }
    for (std::size_t k = 0; k < p.size(); ++k)
      for (std::size_t i = 0; i < p[k].numel(); ++i)
        CHECK(std::abs(t.model().parameters()[k][i] - p[k][i]) < 1e-8);
  }
}

TEST_CASE("non-finite loss raises TrainingError") {
  RunConfig c = tiny_config();
  Trainer t(c, make_dataset(c));
  t.model().bias(ModelBundle::Net::C, 0)[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    t.train_epoch();
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(e.epoch() == 1);
    CHECK(e.batch() == 1);
  }
}

TEST_CASE("training leaves the dataset untouched") {
  RunConfig c = tiny_config();
  c.rada.patience_k = 1;
  c.rada.tau = 0.05;
  c.epochs = 3;
  const Dataset before = make_dataset(c);
  Trainer t(c, before);
  for (int e = 0; e < 3; ++e) t.train_epoch();
  CHECK(t.data() == before);
}

TEST_CASE("metrics rows") {
  MetricsRow r{3, 0.5, 1.25, 0.693147181, 0.1, 0.875, 0.25, true};
  CHECK(format_metrics_row(r) == "3,0.5,1.25,0.693147181,0.1,0.875,0.25,1");
  CHECK(parse_metrics_row(format_metrics_row(r)) == r);
  CHECK_THROWS_AS(parse_metrics_row("1,2,3"), std::runtime_error);
  CHECK_THROWS_AS(parse_metrics_row("1,2,3,4,5,6,7,2"), std::runtime_error);
}
