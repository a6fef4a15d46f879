#include "cotlab/tiny_lm.hpp"

#include "cotlab/logmath.hpp"

#include <cmath>

namespace cotlab {

namespace {

constexpr double kLnEps = 1e-5;
const double kGeluC = std::sqrt(2.0 / M_PI);
constexpr double kGeluA = 0.044715;

inline double gelu(double u) {
  return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + kGeluA * u * u * u)));
}

inline double gelu_grad(double u) {
  const double t = std::tanh(kGeluC * (u + kGeluA * u * u * u));
  return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * u * u);
}

/// y = g .* (x - mean)/sqrt(var + eps) + b columnwise; returns mean/rstd per column.
void layer_norm(const Mat& x, const Eigen::Map<const Mat>& g, const Eigen::Map<const Mat>& b,
                Mat& y, Vec& mean, Vec& rstd) {
  const Eigen::Index c = x.rows(), t = x.cols();
  y.resize(c, t);
  mean.resize(t);
  rstd.resize(t);
  for (Eigen::Index j = 0; j < t; ++j) {
    const double mu = x.col(j).mean();
    const double var = (x.col(j).array() - mu).square().mean();
    const double r = 1.0 / std::sqrt(var + kLnEps);
    mean[j] = mu;
    rstd[j] = r;
    y.col(j) = ((x.col(j).array() - mu) * r * g.col(0).array() + b.col(0).array()).matrix();
  }
}

/// Accumulates dx and the gain/bias gradients for the layer_norm above.
void layer_norm_backward(const Mat& x, const Eigen::Map<const Mat>& g, const Vec& mean,
                         const Vec& rstd, const Mat& dy, Mat& dx, Eigen::Map<Mat> dg,
                         Eigen::Map<Mat> db) {
  const Eigen::Index c = x.rows(), t = x.cols();
  dx.resize(c, t);
  for (Eigen::Index j = 0; j < t; ++j) {
    const auto xhat = ((x.col(j).array() - mean[j]) * rstd[j]).eval();
    const auto dxhat = (dy.col(j).array() * g.col(0).array()).eval();
    dg.col(0).array() += dy.col(j).array() * xhat;
    db.col(0).array() += dy.col(j).array();
    const double m1 = dxhat.mean();
    const double m2 = (dxhat * xhat).mean();
    dx.col(j) = (rstd[j] * (dxhat - m1 - xhat * m2)).matrix();
  }
}

}  // namespace

void TinyLmConfig::validate() const {
  if (embed_dim < 1 || n_layers < 1 || n_heads < 1 || ff_dim < 1 || context_len < 2) {
    throw std::invalid_argument("tiny_lm: all dimensions must be positive");
  }
  if (embed_dim % n_heads != 0) {
    throw std::invalid_argument("tiny_lm: embed_dim must be divisible by n_heads");
  }
  if (!(init_std > 0.0)) throw std::invalid_argument("tiny_lm: init_std must be positive");
}

struct TinyLM::Cache {
  struct Layer {
    Mat x_in;             // residual stream entering the block [C x T]
    Mat a;                // LN1 output
    Vec ln1_mean, ln1_rstd;
    Mat q, k, v;          // [C x T]
    std::vector<Mat> p;   // per-head attention probs [T x T]
    Mat o;                // merged head outputs [C x T]
    Mat x_mid;            // after attention residual
    Mat m;                // LN2 output
    Vec ln2_mean, ln2_rstd;
    Mat f1_pre, f1;       // MLP hidden, pre/post activation [F x T]
  };
  std::vector<Layer> layers;
  Mat x_last;             // residual stream after the last block
  Mat y;                  // final layer norm output [C x T]
  Vec lnf_mean, lnf_rstd;
  TokenSeq tokens;
};

TinyLM::TinyLM(std::shared_ptr<const Vocab> vocab, TinyLmConfig config)
    : vocab_(std::move(vocab)), cfg_(config) {
  cfg_.validate();
  build_segments();
  Eigen::Index total = 0;
  for (const auto& s : segments_) total += s.size();
  params_ = Vec::Zero(total);
}

TinyLM::TinyLM(std::shared_ptr<const Vocab> vocab, TinyLmConfig config, std::uint64_t init_seed)
    : TinyLM(std::move(vocab), config) {
  CounterRng rng(StreamKey(init_seed).with("tiny_lm_init"));
  for (const auto& s : segments_) {
    const auto dot = s.name.rfind('.');
    const std::string leaf = dot == std::string::npos ? s.name : s.name.substr(dot + 1);
    auto block = params_.segment(s.offset, s.size());
    if (leaf == "g") {
      block.setOnes();
    } else if (!leaf.empty() && leaf[0] == 'b') {
      block.setZero();
    } else {
      for (Eigen::Index i = 0; i < block.size(); ++i) block[i] = cfg_.init_std * rng.normal();
    }
  }
}

void TinyLM::build_segments() {
  const Eigen::Index v = vocab_->size();
  const Eigen::Index c = cfg_.embed_dim;
  const Eigen::Index f = cfg_.ff_dim;
  Eigen::Index off = 0;
  auto push = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    segments_.push_back({name, rows, cols, off});
    seg_index_.emplace(name, static_cast<Eigen::Index>(segments_.size()) - 1);
    off += rows * cols;
  };
  push("wte", c, v);
  push("wpe", c, cfg_.context_len);
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "l" + std::to_string(l) + ".";
    push(p + "ln1.g", c, 1);
    push(p + "ln1.b", c, 1);
    push(p + "wq", c, c);
    push(p + "bq", c, 1);
    push(p + "wk", c, c);
    push(p + "bk", c, 1);
    push(p + "wv", c, c);
    push(p + "bv", c, 1);
    push(p + "wo", c, c);
    push(p + "bo", c, 1);
    push(p + "ln2.g", c, 1);
    push(p + "ln2.b", c, 1);
    push(p + "fc1", f, c);
    push(p + "b1", f, 1);
    push(p + "fc2", c, f);
    push(p + "b2", c, 1);
  }
  push("lnf.g", c, 1);
  push("lnf.b", c, 1);
  push("lm", v, c);
}

Eigen::Index TinyLM::offset_of(const std::string& name) const {
  auto it = seg_index_.find(name);
  if (it == seg_index_.end()) throw std::logic_error("unknown segment: " + name);
  return it->second;
}

Eigen::Map<const Mat> TinyLM::mat(const Vec& theta, const std::string& name) const {
  const auto& s = segments_[offset_of(name)];
  return {theta.data() + s.offset, s.rows, s.cols};
}

Eigen::Map<Mat> TinyLM::mat(Vec& theta, const std::string& name) const {
  const auto& s = segments_[offset_of(name)];
  return {theta.data() + s.offset, s.rows, s.cols};
}

void TinyLM::forward(TokenSpan tokens, Cache& cache) const {
  const Eigen::Index t = static_cast<Eigen::Index>(tokens.size());
  if (t < 1) throw std::invalid_argument("tiny_lm forward: empty sequence");
  if (t > cfg_.context_len) throw ContextTooLongError("tiny_lm forward: sequence exceeds context");
  const Eigen::Index c = cfg_.embed_dim;
  const int hd = cfg_.embed_dim / cfg_.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  cache.tokens.assign(tokens.begin(), tokens.end());
  cache.layers.resize(cfg_.n_layers);

  const auto wte = mat(params_, "wte");
  const auto wpe = mat(params_, "wpe");
  Mat x(c, t);
  for (Eigen::Index j = 0; j < t; ++j) x.col(j) = wte.col(tokens[j]) + wpe.col(j);

  for (int l = 0; l < cfg_.n_layers; ++l) {
    auto& lc = cache.layers[l];
    const std::string p = "l" + std::to_string(l) + ".";
    lc.x_in = x;
    layer_norm(lc.x_in, mat(params_, p + "ln1.g"), mat(params_, p + "ln1.b"), lc.a, lc.ln1_mean,
               lc.ln1_rstd);
    lc.q.noalias() = mat(params_, p + "wq") * lc.a;
    lc.q.colwise() += mat(params_, p + "bq").col(0);
    lc.k.noalias() = mat(params_, p + "wk") * lc.a;
    lc.k.colwise() += mat(params_, p + "bk").col(0);
    lc.v.noalias() = mat(params_, p + "wv") * lc.a;
    lc.v.colwise() += mat(params_, p + "bv").col(0);

    lc.p.assign(cfg_.n_heads, Mat());
    lc.o.resize(c, t);
    for (int h = 0; h < cfg_.n_heads; ++h) {
      const auto qh = lc.q.middleRows(h * hd, hd);
      const auto kh = lc.k.middleRows(h * hd, hd);
      const auto vh = lc.v.middleRows(h * hd, hd);
      Mat s = (qh.transpose() * kh) * scale;  // s(i, j) = q_i . k_j
      Mat& probs = lc.p[h];
      probs = Mat::Zero(t, t);
      for (Eigen::Index i = 0; i < t; ++i) {
        const auto row = s.row(i).head(i + 1);
        const double hi = row.maxCoeff();
        Eigen::RowVectorXd e = (row.array() - hi).exp();
        probs.row(i).head(i + 1) = e / e.sum();
      }
      lc.o.middleRows(h * hd, hd).noalias() = vh * probs.transpose();
    }
    x.noalias() += mat(params_, p + "wo") * lc.o;
    x.colwise() += mat(params_, p + "bo").col(0);
    lc.x_mid = x;

    layer_norm(lc.x_mid, mat(params_, p + "ln2.g"), mat(params_, p + "ln2.b"), lc.m, lc.ln2_mean,
               lc.ln2_rstd);
    lc.f1_pre.noalias() = mat(params_, p + "fc1") * lc.m;
    lc.f1_pre.colwise() += mat(params_, p + "b1").col(0);
    lc.f1 = lc.f1_pre.unaryExpr([](double u) { return gelu(u); });
    x.noalias() += mat(params_, p + "fc2") * lc.f1;
    x.colwise() += mat(params_, p + "b2").col(0);
  }

  cache.x_last = x;
  layer_norm(cache.x_last, mat(params_, "lnf.g"), mat(params_, "lnf.b"), cache.y, cache.lnf_mean,
             cache.lnf_rstd);
}

Vec TinyLM::next_token_logprobs(TokenSpan context) const {
  if (context.empty()) throw std::invalid_argument("tiny_lm: empty context");
  Cache cache;
  forward(context, cache);
  Vec logits = mat(params_, "lm") * cache.y.col(cache.y.cols() - 1);
  log_softmax_inplace(logits);
  return logits;
}

std::vector<double> TinyLM::score_continuation(TokenSpan prefix, TokenSpan continuation) const {
  if (prefix.empty()) throw std::invalid_argument("tiny_lm: empty prefix");
  if (static_cast<int>(prefix.size() + continuation.size()) > cfg_.context_len) {
    throw ContextTooLongError("tiny_lm score: sequence exceeds context limit");
  }
  if (continuation.empty()) return {};
  TokenSeq seq = concat(prefix, continuation);
  Cache cache;
  forward(seq, cache);
  const auto lm = mat(params_, "lm");
  std::vector<double> out;
  out.reserve(continuation.size());
  for (size_t i = 0; i < continuation.size(); ++i) {
    const Eigen::Index pos = static_cast<Eigen::Index>(prefix.size() + i) - 1;
    Vec logits = lm * cache.y.col(pos);
    out.push_back(logits[continuation[i]] - log_sum_exp(logits));
  }
  return out;
}

void TinyLM::accumulate_logprob_grad(TokenSpan prefix, TokenSpan continuation,
                                     std::span<const double> token_weights,
                                     GradBuffer& buffer) const {
  if (token_weights.size() != continuation.size()) {
    throw std::invalid_argument("token_weights size mismatch");
  }
  if (buffer.g.size() != params_.size()) throw std::invalid_argument("grad buffer size mismatch");
  if (prefix.empty()) throw std::invalid_argument("tiny_lm: empty prefix");
  if (continuation.empty()) return;
  if (static_cast<int>(prefix.size() + continuation.size()) > cfg_.context_len) {
    throw ContextTooLongError("tiny_lm grad: sequence exceeds context limit");
  }

  const TokenSeq seq = concat(prefix, continuation);
  Cache cache;
  forward(seq, cache);

  const Eigen::Index t = static_cast<Eigen::Index>(seq.size());
  const Eigen::Index c = cfg_.embed_dim;
  const Eigen::Index v = vocab_->size();
  const int hd = cfg_.embed_dim / cfg_.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const auto lm = mat(params_, "lm");

  // ascent gradient of sum_t w_t * log softmax(logits_pos)[y_t]
  Mat dlogits = Mat::Zero(v, t);
  bool any = false;
  for (size_t i = 0; i < continuation.size(); ++i) {
    const double w = token_weights[i];
    if (w == 0.0) continue;
    any = true;
    const Eigen::Index pos = static_cast<Eigen::Index>(prefix.size() + i) - 1;
    Vec logits = lm * cache.y.col(pos);
    Vec p = softmax(logits);
    dlogits.col(pos) -= w * p;
    dlogits(continuation[i], pos) += w;
  }
  if (!any) return;

  Vec& g = buffer.g;
  mat(g, "lm").noalias() += dlogits * cache.y.transpose();
  Mat dy = lm.transpose() * dlogits;

  Mat dx;
  layer_norm_backward(cache.x_last, mat(params_, "lnf.g"), cache.lnf_mean, cache.lnf_rstd, dy, dx,
                      mat(g, "lnf.g"), mat(g, "lnf.b"));

  for (int l = cfg_.n_layers - 1; l >= 0; --l) {
    const auto& lc = cache.layers[l];
    const std::string p = "l" + std::to_string(l) + ".";

    // MLP branch: x = x_mid + fc2 * gelu(fc1 * LN2(x_mid) + b1) + b2
    const Mat& df2 = dx;
    mat(g, p + "fc2").noalias() += df2 * lc.f1.transpose();
    mat(g, p + "b2").col(0) += df2.rowwise().sum();
    Mat df1 = mat(params_, p + "fc2").transpose() * df2;
    df1.array() *= lc.f1_pre.unaryExpr([](double u) { return gelu_grad(u); }).array();
    mat(g, p + "fc1").noalias() += df1 * lc.m.transpose();
    mat(g, p + "b1").col(0) += df1.rowwise().sum();
    Mat dm = mat(params_, p + "fc1").transpose() * df1;
    Mat dx_mid;
    layer_norm_backward(lc.x_mid, mat(params_, p + "ln2.g"), lc.ln2_mean, lc.ln2_rstd, dm, dx_mid,
                        mat(g, p + "ln2.g"), mat(g, p + "ln2.b"));
    dx_mid += dx;  // residual

    // Attention branch: x_mid = x_in + wo * o + bo
    mat(g, p + "wo").noalias() += dx_mid * lc.o.transpose();
    mat(g, p + "bo").col(0) += dx_mid.rowwise().sum();
    Mat dout = mat(params_, p + "wo").transpose() * dx_mid;

    Mat dq = Mat::Zero(c, t), dk = Mat::Zero(c, t), dv = Mat::Zero(c, t);
    for (int h = 0; h < cfg_.n_heads; ++h) {
      const auto qh = lc.q.middleRows(h * hd, hd);
      const auto kh = lc.k.middleRows(h * hd, hd);
      const auto vh = lc.v.middleRows(h * hd, hd);
      const auto doh = dout.middleRows(h * hd, hd);
      const Mat& probs = lc.p[h];
      dv.middleRows(h * hd, hd).noalias() = doh * probs;
      Mat dp = doh.transpose() * vh;  // [T x T]
      Mat ds(t, t);
      for (Eigen::Index i = 0; i < t; ++i) {
        const auto pr = probs.row(i);
        const double dot = (dp.row(i).array() * pr.array()).sum();
        ds.row(i) = (pr.array() * (dp.row(i).array() - dot)).matrix();
      }
      dq.middleRows(h * hd, hd).noalias() = (kh * ds.transpose()) * scale;
      dk.middleRows(h * hd, hd).noalias() = (qh * ds) * scale;
    }
    mat(g, p + "wq").noalias() += dq * lc.a.transpose();
    mat(g, p + "bq").col(0) += dq.rowwise().sum();
    mat(g, p + "wk").noalias() += dk * lc.a.transpose();
    mat(g, p + "bk").col(0) += dk.rowwise().sum();
    mat(g, p + "wv").noalias() += dv * lc.a.transpose();
    mat(g, p + "bv").col(0) += dv.rowwise().sum();
    Mat da = mat(params_, p + "wq").transpose() * dq;
    da.noalias() += mat(params_, p + "wk").transpose() * dk;
    da.noalias() += mat(params_, p + "wv").transpose() * dv;
    Mat dx_in;
    layer_norm_backward(lc.x_in, mat(params_, p + "ln1.g"), lc.ln1_mean, lc.ln1_rstd, da, dx_in,
                        mat(g, p + "ln1.g"), mat(g, p + "ln1.b"));
    dx = dx_in + dx_mid;
  }

  auto dwte = mat(g, "wte");
  auto dwpe = mat(g, "wpe");
  for (Eigen::Index j = 0; j < t; ++j) {
    dwte.col(seq[j]) += dx.col(j);
    dwpe.col(j) += dx.col(j);
  }
}

class TinyLmSession final : public DecodeSession {
 public:
  TinyLmSession(const TinyLM& model, const TinyLmConfig& cfg, TokenSpan prefix)
      : model_(model), cfg_(cfg) {
    const Eigen::Index c = cfg_.embed_dim;
    k_cache_.assign(cfg_.n_layers, Mat(c, cfg_.context_len));
    v_cache_.assign(cfg_.n_layers, Mat(c, cfg_.context_len));
    if (prefix.empty()) throw std::invalid_argument("tiny_lm session: empty prefix");
    for (TokenId tok : prefix) push(tok);
  }

  const Vec& next_logprobs() override { return logprobs_; }

  void push(TokenId token) override;

  int context_length() const override { return length_; }

 private:
  const TinyLM& model_;
  const TinyLmConfig& cfg_;
  std::vector<Mat> k_cache_, v_cache_;
  int length_ = 0;
  Vec logprobs_;
};

void TinyLmSession::push(TokenId token) {
  if (length_ >= cfg_.context_len) throw ContextTooLongError("tiny_lm session: context full");
  const Eigen::Index pos = length_;
  const int hd = cfg_.embed_dim / cfg_.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const Vec& theta = model_.params();

  Vec x = model_.mat(theta, "wte").col(token) + model_.mat(theta, "wpe").col(pos);
  Vec a(cfg_.embed_dim), m(cfg_.embed_dim);
  auto ln_col = [&](const Vec& in, const std::string& gname, const std::string& bname, Vec& out) {
    const double mu = in.mean();
    const double var = (in.array() - mu).square().mean();
    const double r = 1.0 / std::sqrt(var + kLnEps);
    out = ((in.array() - mu) * r * model_.mat(theta, gname).col(0).array() +
           model_.mat(theta, bname).col(0).array())
              .matrix();
  };

  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "l" + std::to_string(l) + ".";
    ln_col(x, p + "ln1.g", p + "ln1.b", a);
    Vec q = model_.mat(theta, p + "wq") * a + model_.mat(theta, p + "bq").col(0);
    k_cache_[l].col(pos) = model_.mat(theta, p + "wk") * a + model_.mat(theta, p + "bk").col(0);
    v_cache_[l].col(pos) = model_.mat(theta, p + "wv") * a + model_.mat(theta, p + "bv").col(0);

    Vec o(cfg_.embed_dim);
    for (int h = 0; h < cfg_.n_heads; ++h) {
      const auto kh = k_cache_[l].middleRows(h * hd, hd).leftCols(pos + 1);
      const auto vh = v_cache_[l].middleRows(h * hd, hd).leftCols(pos + 1);
      Vec s = (kh.transpose() * q.segment(h * hd, hd)) * scale;
      const double hi = s.maxCoeff();
      Vec e = (s.array() - hi).exp();
      e /= e.sum();
      o.segment(h * hd, hd).noalias() = vh * e;
    }
    x.noalias() += model_.mat(theta, p + "wo") * o;
    x += model_.mat(theta, p + "bo").col(0);

    ln_col(x, p + "ln2.g", p + "ln2.b", m);
    Vec f1 = model_.mat(theta, p + "fc1") * m + model_.mat(theta, p + "b1").col(0);
    f1 = f1.unaryExpr([](double u) { return gelu(u); });
    x.noalias() += model_.mat(theta, p + "fc2") * f1;
    x += model_.mat(theta, p + "b2").col(0);
  }

  Vec y(cfg_.embed_dim);
  ln_col(x, "lnf.g", "lnf.b", y);
  logprobs_ = model_.mat(theta, "lm") * y;
  log_softmax_inplace(logprobs_);
  ++length_;
}

std::unique_ptr<DecodeSession> TinyLM::start_session(TokenSpan prefix) const {
  return std::make_unique<TinyLmSession>(*this, cfg_, prefix);
}

}  // namespace cotlab
