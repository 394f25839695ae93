#include <doctest.h>

#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "rada/checkpoint.hpp"
#include "rada/config.hpp"
#include "support.hpp"

using namespace rada;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

Checkpoint sample_checkpoint() {
  Rng rng(9);
  Checkpoint c;
  c.config_hash = 0x0123456789abcdefULL;
  c.config_text = write_config(RunConfig{});
  c.epoch = 12;
  c.names = {"F.0.weight", "F.0.bias"};
  c.params = {rada::testing::random_tensor(rng, {2, 3}), rada::testing::random_tensor(rng, {3})};
  c.velocities = {rada::testing::random_tensor(rng, {2, 3}), rada::testing::random_tensor(rng, {3})};
  c.rada.active = true;
  c.rada.best_entropy = 0.41;
  c.rada.plateau_counter = 5;
  c.rada.entropy_history = {0.6, 0.5, 0.41};
  c.shuffle_rng = rng.save_state();
  rng.next_u64();
  c.mixup_rng = rng.save_state();
  c.persistent_relabel = {0, 1, 1, 0};
  return c;
}

std::string bytes_of(const Checkpoint& c) {
  std::ostringstream os(std::ios::binary);
  write_checkpoint(os, c);
  return os.str();
}

Checkpoint from_bytes(const std::string& b) {
  std::istringstream is(b, std::ios::binary);
  return read_checkpoint(is);
}

}  // namespace

TEST_CASE("empty config gives defaults") {
  const RunConfig c = parse_config("");
  CHECK(c == RunConfig{});
  CHECK(c.rada.tau == 0.35);
  CHECK(c.rada.patience_k == 5);
  CHECK(c.rada.epsilon_improve == 1e-3);
  CHECK(c.loss.lambda == 1.0);
  CHECK_FALSE(c.loss.lambda_ramp);
  CHECK(c.model.feature_widths == std::vector<std::size_t>{64, 32});
  CHECK(c.model.discriminator_hidden == std::vector<std::size_t>{32});
  CHECK(c.learning_rate == 1e-3);
  CHECK(c.momentum == 0.9);
  CHECK(c.batch_size == 32);
  CHECK(c.epochs == 100);
  CHECK(c.moons.rotation_deg == 45.0);
  CHECK(c.moons.n_per_domain == 1000);
}

TEST_CASE("config values and comments") {
  const RunConfig c = parse_config("# run\n  tau = 0.2  # lower\n\nconditioning=cdan\nfeature_widths = 8,4\nmixup = 0\n");
  CHECK(c.rada.tau == 0.2);
  CHECK(c.model.conditioning == Conditioning::Cdan);
  CHECK(c.model.feature_widths == std::vector<std::size_t>{8, 4});
  CHECK_FALSE(c.rada.mixup_enabled);
}

TEST_CASE("config errors name key and line") {
  const auto tau = error_of("lr = 0.1\ntau = 0.9\n");
  CHECK(tau.find("line 2") != std::string::npos);
  CHECK(tau.find("tau") != std::string::npos);
  CHECK(error_of("colour = red\n").find("unknown key") != std::string::npos);
  CHECK(error_of("epochs = many\n").find("epochs") != std::string::npos);
  CHECK(error_of("epochs = -3\n").find("epochs") != std::string::npos);
  CHECK(error_of("mixup = maybe\n").find("mixup") != std::string::npos);
  CHECK(error_of("\n\njust words\n").find("line 3") != std::string::npos);
  CHECK(error_of("batch_size = 31\n").find("batch_size") != std::string::npos);

  RunConfig c;
  CHECK_THROWS_AS(set_config_value(c, "nope", "1"), ConfigError);
  try {
    parse_config("tau = 0.9");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "tau");
    CHECK(e.line() == 1);
  }
}

TEST_CASE("config roundtrip") {
  RunConfig c;
  c.rada.tau = 0.1 + 0.2;
  c.loss.reweight = ReweightMode::InverseEntropy;
  c.model.classifier_hidden = {7};
  c.master_seed = 18446744073709551615ULL;
  c.mmd.bandwidth_multipliers = {0.3, 3.0};
  c.output_dir = "out dir";
  CHECK(parse_config(write_config(c)) == c);
  for (const auto& key : config_keys()) {
    RunConfig d;
    set_config_value(d, key.name, get_config_value(c, key.name));
    CHECK(get_config_value(d, key.name) == get_config_value(c, key.name));
  }
}

TEST_CASE("config hash ignores resume-neutral keys only") {
  RunConfig a, b;
  b.epochs = 7;
  b.output_dir = "elsewhere";
  b.checkpoint_every = 1;
  CHECK(config_hash(a) == config_hash(b));
  b.rada.tau = 0.3;
  CHECK(config_hash(a) != config_hash(b));
  RunConfig seed;
  seed.master_seed = 1;
  CHECK(config_hash(a) != config_hash(seed));
}

TEST_CASE("checkpoint roundtrip is bitwise") {
  const Checkpoint c = sample_checkpoint();
  const std::string b = bytes_of(c);
  CHECK(b.substr(0, 8) == "RADACKPT");
  const Checkpoint back = from_bytes(b);
  CHECK(back == c);
  CHECK(bytes_of(back) == b);

  const auto path = std::filesystem::temp_directory_path() / "rada_test_roundtrip.bin";
  save_checkpoint(path, c);
  CHECK(load_checkpoint(path) == c);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint rejects damage") {
  const std::string good = bytes_of(sample_checkpoint());

  std::string version = good;
  version[8] = static_cast<char>(kCheckpointVersion + 1);
  CHECK_THROWS_WITH_AS(from_bytes(version), doctest::Contains("version"), std::runtime_error);

  std::string magic = good;
  magic[0] = 'X';
  CHECK_THROWS_AS(from_bytes(magic), std::runtime_error);

  for (std::size_t cut : {std::size_t{4}, std::size_t{20}, good.size() / 2, good.size() - 1})
    CHECK_THROWS_AS(from_bytes(good.substr(0, cut)), std::runtime_error);

  CHECK_THROWS_WITH_AS(from_bytes(good + "x"), doctest::Contains("trailing"), std::runtime_error);

  Checkpoint bad = sample_checkpoint();
  bad.velocities[0] = Tensor({3, 2});
  CHECK_THROWS_AS(bytes_of(bad), std::invalid_argument);

  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.bin"), std::runtime_error);
}
