#include "cotlab/checkpoint.hpp"

#include "cotlab/config.hpp"
#include "cotlab/metrics_io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

using namespace cotlab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("cotlab_ckpt_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::unique_ptr<TinyLM> make_model(std::uint64_t seed) {
  TinyLmConfig cfg;
  cfg.embed_dim = 8;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.ff_dim = 16;
  cfg.context_len = 32;
  return std::make_unique<TinyLM>(std::make_shared<Vocab>(builtin_vocab()), cfg, seed);
}

}  // namespace

TEST_CASE("checkpoint round trip: params at float32, state exact") {
  TempDir tmp;
  auto model = make_model(5);
  OptimizerState opt;
  opt.init(model->param_count());
  opt.t = 17;
  opt.m.setConstant(0.25);
  opt.v.setConstant(0.0625);

  save_checkpoint(tmp.path / "ck", *model, {9, 42}, &opt);
  CHECK(fs::exists(tmp.path / "ck" / "manifest.json"));
  CHECK(fs::exists(tmp.path / "ck" / "params.bin"));
  CHECK(fs::exists(tmp.path / "ck" / "opt.bin"));

  const LoadedCheckpoint loaded = load_checkpoint(tmp.path / "ck");
  CHECK(loaded.meta.seed == 9);
  CHECK(loaded.meta.step == 42);
  CHECK(loaded.exact_params);
  REQUIRE(loaded.opt.has_value());
  CHECK(loaded.opt->t == 17);
  CHECK((loaded.opt->m.array() == 0.25).all());
  // opt.bin restores parameters bit-for-bit
  CHECK((loaded.model->params() - model->params()).lpNorm<Eigen::Infinity>() == 0.0);

  // without training state, params.bin alone is float32 precision
  save_checkpoint(tmp.path / "ck32", *model, {9, 42});
  const LoadedCheckpoint rounded = load_checkpoint(tmp.path / "ck32");
  CHECK_FALSE(rounded.opt.has_value());
  CHECK((rounded.model->params() - model->params()).lpNorm<Eigen::Infinity>() < 1e-6);
  for (Eigen::Index i = 0; i < model->param_count(); ++i) {
    CHECK(static_cast<double>(static_cast<float>(model->params()[i])) == rounded.model->params()[i]);
  }
}

TEST_CASE("params.bin is little-endian float32 in segment order") {
  TempDir tmp;
  auto model = make_model(7);
  save_checkpoint(tmp.path / "ck", *model, {1, 0});
  std::ifstream f(tmp.path / "ck" / "params.bin", std::ios::binary);
  REQUIRE(f.good());
  f.seekg(0, std::ios::end);
  CHECK(static_cast<Eigen::Index>(f.tellg()) ==
        model->param_count() * static_cast<Eigen::Index>(sizeof(float)));
  f.seekg(0);
  float first = 0.0f;
  f.read(reinterpret_cast<char*>(&first), sizeof(first));
  CHECK(static_cast<double>(first) == doctest::Approx(model->params()[0]).epsilon(1e-7));
}

TEST_CASE("manifest carries the architecture and loads reject mismatches") {
  TempDir tmp;
  auto model = make_model(11);
  save_checkpoint(tmp.path / "ck", *model, {3, 5});

  auto manifest_path = tmp.path / "ck" / "manifest.json";
  std::ifstream in(manifest_path);
  nlohmann::json manifest = nlohmann::json::parse(in);
  in.close();
  CHECK(manifest.at("model").at("embed_dim") == 8);
  CHECK(manifest.at("param_count").get<Eigen::Index>() == model->param_count());
  CHECK(manifest.at("segments").size() == model->segments().size());

  manifest["model"]["embed_dim"] = 16;
  std::ofstream out(manifest_path, std::ios::trunc);
  out << manifest.dump(2);
  out.close();
  CHECK_THROWS(load_checkpoint(tmp.path / "ck"));
}

TEST_CASE("saving twice produces byte-identical files") {
  TempDir tmp;
  auto model = make_model(13);
  OptimizerState opt;
  opt.init(model->param_count());
  save_checkpoint(tmp.path / "a", *model, {2, 7}, &opt);
  save_checkpoint(tmp.path / "b", *model, {2, 7}, &opt);
  for (const char* name : {"manifest.json", "params.bin", "opt.bin"}) {
    std::ifstream fa(tmp.path / "a" / name, std::ios::binary);
    std::ifstream fb(tmp.path / "b" / name, std::ios::binary);
    const std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    const std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(ca == cb);
  }
}

TEST_CASE("run config json round trip and pointer errors") {
  nlohmann::json j = {
      {"algorithm", "rl"},
      {"data", {{"task", {{"kind", "modsum"}, {"size", 100}, {"seed", 3}}}}},
      {"reward", {{"variant", "logprob"}}},
      {"train", {{"total_steps", 10}, {"seed", 5}}},
  };
  const RunConfig cfg = parse_run_config(j);
  CHECK(cfg.train.total_steps == 10);
  CHECK(cfg.train.reward.variant == RewardVariant::Logprob);
  CHECK(cfg.data.task.has_value());

  const RunConfig round = parse_run_config(run_config_to_json(cfg));
  CHECK(run_config_to_json(round) == run_config_to_json(cfg));

  nlohmann::json bad = j;
  bad["reward"]["variant"] = "bogus";
  try {
    (void)parse_run_config(bad);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.pointer == "/reward/variant");
  }

  nlohmann::json missing = j;
  missing["train"].erase("total_steps");
  try {
    (void)parse_run_config(missing);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.pointer == "/train/total_steps");
  }
}

TEST_CASE("metric record json round trip") {
  MetricRecord rec;
  rec.step = 12;
  rec.greedy_success = 0.5;
  rec.sampled_success_t1 = 0.25;
  rec.sampled_success_wilson_half = 0.05;
  rec.success_rate_expectation = 0.3;
  rec.per_token_logprob_mc1 = -1.25;
  rec.per_answer_logprob_mc1 = -1.5;
  rec.per_answer_logprob_mc32 = -1.4;
  rec.perplexity = std::exp(1.5);
  rec.mean_cot_length = 7.5;
  rec.n_examples = 64;
  rec.n_cot_samples = 64;

  const MetricRecord back = metric_record_from_json(to_json(rec));
  CHECK(back.step == rec.step);
  CHECK(back.per_answer_logprob_mc32.has_value());
  CHECK(*back.per_answer_logprob_mc32 == -1.4);
  CHECK_FALSE(back.per_token_logprob_mc32.has_value());
  CHECK(back.perplexity == rec.perplexity);
}
