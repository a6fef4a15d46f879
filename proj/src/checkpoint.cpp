#include "cotlab/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>

namespace cotlab {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr char kFormat[] = "cotlab-checkpoint-v1";
constexpr char kOptMagic[] = "COTLABO1";

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void append_f64(std::string& buf, const Vec& v) {
  buf.append(reinterpret_cast<const char*>(v.data()), sizeof(double) * static_cast<size_t>(v.size()));
}

Vec take_f64(const std::string& buf, size_t& off, Eigen::Index n) {
  Vec v(n);
  std::memcpy(v.data(), buf.data() + off, sizeof(double) * static_cast<size_t>(n));
  off += sizeof(double) * static_cast<size_t>(n);
  return v;
}

}  // namespace

void save_checkpoint(const fs::path& dir, const TinyLM& model, const CheckpointMeta& meta,
                     const OptimizerState* opt) {
  fs::create_directories(dir);

  json manifest;
  manifest["format"] = kFormat;
  manifest["model"] = {
      {"type", "tiny_lm"},
      {"embed_dim", model.config().embed_dim},
      {"n_layers", model.config().n_layers},
      {"n_heads", model.config().n_heads},
      {"ff_dim", model.config().ff_dim},
      {"context_len", model.config().context_len},
      {"init_std", model.config().init_std},
  };
  manifest["vocab"] = model.vocab().ordinary_symbols();
  manifest["seed"] = meta.seed;
  manifest["step"] = meta.step;
  manifest["param_count"] = model.param_count();
  json segs = json::array();
  for (const auto& s : model.segments()) {
    segs.push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}});
  }
  manifest["segments"] = segs;
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");

  const Vec& theta = model.params();
  std::string params;
  params.resize(sizeof(float) * static_cast<size_t>(theta.size()));
  auto* out = reinterpret_cast<float*>(params.data());
  for (Eigen::Index i = 0; i < theta.size(); ++i) out[i] = static_cast<float>(theta[i]);
  write_file(dir / "params.bin", params);

  if (opt != nullptr) {
    std::string blob(kOptMagic, 8);
    const std::uint64_t n = static_cast<std::uint64_t>(theta.size());
    blob.append(reinterpret_cast<const char*>(&n), sizeof(n));
    const std::uint64_t t = static_cast<std::uint64_t>(opt->t);
    blob.append(reinterpret_cast<const char*>(&t), sizeof(t));
    append_f64(blob, opt->m);
    append_f64(blob, opt->v);
    append_f64(blob, theta);
    write_file(dir / "opt.bin", blob);
  }
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  const json manifest = json::parse(read_file(dir / "manifest.json"));
  if (manifest.at("format").get<std::string>() != kFormat) {
    throw std::runtime_error("unsupported checkpoint format in " + dir.string());
  }
  const json& m = manifest.at("model");
  if (m.at("type").get<std::string>() != "tiny_lm") {
    throw std::runtime_error("unsupported model type in checkpoint");
  }
  TinyLmConfig cfg;
  cfg.embed_dim = m.at("embed_dim").get<int>();
  cfg.n_layers = m.at("n_layers").get<int>();
  cfg.n_heads = m.at("n_heads").get<int>();
  cfg.ff_dim = m.at("ff_dim").get<int>();
  cfg.context_len = m.at("context_len").get<int>();
  cfg.init_std = m.at("init_std").get<double>();

  auto vocab = std::make_shared<Vocab>(manifest.at("vocab").get<std::vector<std::string>>());

  LoadedCheckpoint loaded;
  loaded.model = std::make_unique<TinyLM>(vocab, cfg);
  loaded.meta.seed = manifest.at("seed").get<std::uint64_t>();
  loaded.meta.step = manifest.at("step").get<long>();

  const Eigen::Index n = loaded.model->param_count();
  if (manifest.at("param_count").get<Eigen::Index>() != n) {
    throw std::runtime_error("checkpoint param_count does not match architecture");
  }
  const std::string params = read_file(dir / "params.bin");
  if (params.size() != sizeof(float) * static_cast<size_t>(n)) {
    throw std::runtime_error("params.bin has unexpected size");
  }
  const auto* in = reinterpret_cast<const float*>(params.data());
  Vec& theta = loaded.model->params();
  for (Eigen::Index i = 0; i < n; ++i) theta[i] = static_cast<double>(in[i]);

  const fs::path opt_path = dir / "opt.bin";
  if (fs::exists(opt_path)) {
    const std::string blob = read_file(opt_path);
    const size_t need = 8 + 2 * sizeof(std::uint64_t) + 3 * sizeof(double) * static_cast<size_t>(n);
    if (blob.size() != need || blob.compare(0, 8, kOptMagic) != 0) {
      throw std::runtime_error("opt.bin is corrupt in " + dir.string());
    }
    size_t off = 8;
    std::uint64_t count = 0, t = 0;
    std::memcpy(&count, blob.data() + off, sizeof(count));
    off += sizeof(count);
    std::memcpy(&t, blob.data() + off, sizeof(t));
    off += sizeof(t);
    if (count != static_cast<std::uint64_t>(n)) throw std::runtime_error("opt.bin size mismatch");
    OptimizerState opt;
    opt.t = static_cast<long>(t);
    opt.m = take_f64(blob, off, n);
    opt.v = take_f64(blob, off, n);
    theta = take_f64(blob, off, n);
    loaded.opt = std::move(opt);
    loaded.exact_params = true;
  }
  return loaded;
}

}  // namespace cotlab
