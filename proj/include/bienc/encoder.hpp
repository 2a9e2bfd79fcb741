#ifndef BIENC_ENCODER_HPP
#define BIENC_ENCODER_HPP

// Small pre-layer-norm transformer encoder with hand-written reverse mode.
//
//   x_0     = token_embedding[ids] + position_embedding
//   a       = LN_1(x)
//   x'      = x + dropout(MultiHeadAttention(a) W_o + b_o)
//   x_next  = x' + dropout(GELU(LN_2(x') W_1 + b_1) W_2 + b_2)
//   h_L     = LN_f(x_L)          (identity when layers == 0)
//
// Only the attention-length prefix of a sequence is run through the stack, so
// padding never enters attention and padded rows of h_L are zero.

#include <cmath>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "bienc/common.hpp"
#include "bienc/templates.hpp"

namespace bienc {

struct EncoderConfig {
  std::size_t dim = 64;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t ff_dim = 256;
  std::size_t max_len = 32;
  std::size_t vocab_size = 0;
  double dropout = 0.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (dim == 0 || heads == 0 || dim % heads != 0)
      throw std::invalid_argument("encoder dim must be a positive multiple of heads");
    if (max_len < 4) throw std::invalid_argument("encoder max_len must be at least 4");
    if (vocab_size == 0) throw std::invalid_argument("encoder vocab_size must be positive");
    if (layers > 0 && ff_dim == 0) throw std::invalid_argument("encoder ff_dim must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
  }

  bool operator==(const EncoderConfig&) const = default;
};

struct LayerParams {
  Matrix ln1_gain, ln1_bias;
  Matrix wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix ln2_gain, ln2_bias;
  Matrix w1, b1, w2, b2;

  template <typename Self, typename F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "ln1.gain", self.ln1_gain);
    f(prefix + "ln1.bias", self.ln1_bias);
    f(prefix + "attn.wq", self.wq);
    f(prefix + "attn.bq", self.bq);
    f(prefix + "attn.wk", self.wk);
    f(prefix + "attn.bk", self.bk);
    f(prefix + "attn.wv", self.wv);
    f(prefix + "attn.bv", self.bv);
    f(prefix + "attn.wo", self.wo);
    f(prefix + "attn.bo", self.bo);
    f(prefix + "ln2.gain", self.ln2_gain);
    f(prefix + "ln2.bias", self.ln2_bias);
    f(prefix + "ffn.w1", self.w1);
    f(prefix + "ffn.b1", self.b1);
    f(prefix + "ffn.w2", self.w2);
    f(prefix + "ffn.b2", self.b2);
  }
};

/// All trainable tensors of one encoder. Also used as the gradient container.
struct EncoderParams {
  EncoderConfig config;
  Matrix token_embedding;     // vocab x D
  Matrix position_embedding;  // max_len x D
  std::vector<LayerParams> layers;
  Matrix final_gain, final_bias;

  /// Visits every tensor in declared (checkpoint) order.
  template <typename F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

  /// Same shapes, all zeros.
  EncoderParams zeros_like() const {
    EncoderParams z = *this;
    z.for_each([](const std::string&, Matrix& m) { m.setZero(); });
    return z;
  }

  bool operator==(const EncoderParams& other) const {
    if (!(config == other.config) || layers.size() != other.layers.size()) return false;
    std::vector<const Matrix*> mine, theirs;
    for_each([&](const std::string&, const Matrix& m) { mine.push_back(&m); });
    other.for_each([&](const std::string&, const Matrix& m) { theirs.push_back(&m); });
    for (std::size_t i = 0; i < mine.size(); ++i) {
      if (mine[i]->rows() != theirs[i]->rows() || mine[i]->cols() != theirs[i]->cols()) return false;
      if (std::memcmp(mine[i]->data(), theirs[i]->data(), sizeof(double) * static_cast<std::size_t>(mine[i]->size())))
        return false;
    }
    return true;
  }

 private:
  template <typename Self, typename F>
  static void visit(Self& self, F& f) {
    f(std::string("embeddings.token"), self.token_embedding);
    f(std::string("embeddings.position"), self.position_embedding);
    for (std::size_t l = 0; l < self.layers.size(); ++l)
      LayerParams::visit(self.layers[l], "layer" + std::to_string(l) + ".", f);
    f(std::string("final_ln.gain"), self.final_gain);
    f(std::string("final_ln.bias"), self.final_bias);
  }
};

/// N(0, 0.02^2) weights and embeddings, zero biases, unit layer-norm gains.
inline EncoderParams init_params(const EncoderConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const auto D = static_cast<Eigen::Index>(cfg.dim);
  const auto F = static_cast<Eigen::Index>(cfg.ff_dim);
  auto normal = [&](Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 0.02 * rng.normal();
    return m;
  };
  auto ones = [](Eigen::Index c) { return Matrix::Ones(1, c); };
  auto zeros = [](Eigen::Index r, Eigen::Index c) { return Matrix::Zero(r, c); };

  EncoderParams p;
  p.config = cfg;
  p.token_embedding = normal(static_cast<Eigen::Index>(cfg.vocab_size), D);
  p.position_embedding = normal(static_cast<Eigen::Index>(cfg.max_len), D);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    LayerParams L;
    L.ln1_gain = ones(D);
    L.ln1_bias = zeros(1, D);
    L.wq = normal(D, D);
    L.bq = zeros(1, D);
    L.wk = normal(D, D);
    L.bk = zeros(1, D);
    L.wv = normal(D, D);
    L.bv = zeros(1, D);
    L.wo = normal(D, D);
    L.bo = zeros(1, D);
    L.ln2_gain = ones(D);
    L.ln2_bias = zeros(1, D);
    L.w1 = normal(D, F);
    L.b1 = zeros(1, F);
    L.w2 = normal(F, D);
    L.b2 = zeros(1, D);
    p.layers.push_back(std::move(L));
  }
  p.final_gain = ones(D);
  p.final_bias = zeros(1, D);
  return p;
}

/// Last-layer token representations h_L (max_len x D); rows at or beyond
/// attention_length are zero.
struct HiddenStates {
  Matrix values;
  std::size_t attention_length = 0;
};

namespace detail {

inline constexpr double kLayerNormEps = 1e-12;

struct LayerNormCache {
  Matrix normalized;  // xhat
  Vector inv_std;
};

inline Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, LayerNormCache& cache) {
  const auto n = x.rows();
  const auto d = static_cast<double>(x.cols());
  cache.normalized.resize(n, x.cols());
  cache.inv_std.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).sum() / d;
    const RowVector centered = x.row(i).array() - mean;
    const double var = centered.squaredNorm() / d;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.inv_std(i) = inv;
    cache.normalized.row(i) = centered * inv;
  }
  Matrix y = cache.normalized.array().rowwise() * gain.row(0).array();
  y.rowwise() += bias.row(0);
  return y;
}

/// Returns d(input); accumulates gain/bias gradients.
inline Matrix layer_norm_backward(const Matrix& dy, const Matrix& gain, const LayerNormCache& cache, Matrix& dgain,
                                  Matrix& dbias) {
  dgain.row(0) += (dy.array() * cache.normalized.array()).colwise().sum().matrix();
  dbias.row(0) += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * gain.row(0).array();
  const double d = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double mean_g = dxhat.row(i).sum() / d;
    const double mean_gx = dxhat.row(i).dot(cache.normalized.row(i)) / d;
    dx.row(i) = cache.inv_std(i) * (dxhat.row(i).array() - mean_g - cache.normalized.row(i).array() * mean_gx).matrix();
  }
  return dx;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * 0.70710678118654752440)); }
inline double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x * 0.70710678118654752440)) + x * std::exp(-0.5 * x * x) * 0.39894228040143267794;
}

inline void check_finite(const Matrix& m, const std::string& where) {
  if (!m.allFinite()) throw NumericError("non-finite activation in " + where);
}

inline Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng* rng) {
  if (!rng || rate <= 0.0) return Matrix();
  Matrix mask(rows, cols);
  const double keep = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng->uniform() < rate ? 0.0 : keep;
  return mask;
}

}  // namespace detail

/// Activations kept by encode_forward for encode_backward.
struct ForwardCache {
  struct Layer {
    Matrix input;  // x
    detail::LayerNormCache ln1;
    Matrix ln1_out;
    Matrix q, k, v;
    std::vector<Matrix> probs;  // per head, len x len
    Matrix context;             // concatenated heads
    Matrix attn_mask;           // dropout mask, empty when unused
    detail::LayerNormCache ln2;
    Matrix ln2_out;
    Matrix ff_pre;  // U = LN_2(x') W_1 + b_1
    Matrix ff_act;  // GELU(U)
    Matrix ff_mask;
  };
  std::vector<TokenId> ids;  // real tokens only
  std::size_t max_len = 0;
  std::vector<Layer> layers;
  detail::LayerNormCache final_ln;
};

/// T(t): runs the encoder over one templated sequence. Pass `cache` to keep
/// activations for backward; pass `dropout_rng` to enable dropout.
inline HiddenStates encode_forward(const EncoderParams& params, const TokenSequence& seq,
                                   ForwardCache* cache = nullptr, Rng* dropout_rng = nullptr) {
  const auto& cfg = params.config;
  if (seq.ids.size() != cfg.max_len)
    throw std::invalid_argument("sequence length " + std::to_string(seq.ids.size()) + " != encoder max_len " +
                                std::to_string(cfg.max_len));
  const std::size_t len = seq.attention_length;
  if (len == 0 || len > cfg.max_len) throw std::invalid_argument("invalid attention length");
  const auto n = static_cast<Eigen::Index>(len);
  const auto D = static_cast<Eigen::Index>(cfg.dim);
  const auto H = static_cast<Eigen::Index>(cfg.heads);
  const Eigen::Index dh = D / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix x(n, D);
  for (Eigen::Index i = 0; i < n; ++i) {
    const TokenId id = seq.ids[static_cast<std::size_t>(i)];
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
      throw std::invalid_argument("token id " + std::to_string(id) + " outside encoder vocabulary");
    x.row(i) = params.token_embedding.row(id) + params.position_embedding.row(i);
  }
  detail::check_finite(x, "embeddings");

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.ids.assign(seq.ids.begin(), seq.ids.begin() + static_cast<std::ptrdiff_t>(len));
  c.max_len = cfg.max_len;
  c.layers.assign(params.layers.size(), {});

  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& P = params.layers[l];
    auto& C = c.layers[l];
    C.input = x;
    C.ln1_out = detail::layer_norm(x, P.ln1_gain, P.ln1_bias, C.ln1);
    C.q.noalias() = C.ln1_out * P.wq;
    C.q.rowwise() += P.bq.row(0);
    C.k.noalias() = C.ln1_out * P.wk;
    C.k.rowwise() += P.bk.row(0);
    C.v.noalias() = C.ln1_out * P.wv;
    C.v.rowwise() += P.bv.row(0);

    C.context.resize(n, D);
    C.probs.resize(static_cast<std::size_t>(H));
    for (Eigen::Index h = 0; h < H; ++h) {
      Matrix s = (C.q.middleCols(h * dh, dh) * C.k.middleCols(h * dh, dh).transpose()) * scale;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp().matrix();
        s.row(i) /= s.row(i).sum();
      }
      C.context.middleCols(h * dh, dh).noalias() = s * C.v.middleCols(h * dh, dh);
      C.probs[static_cast<std::size_t>(h)] = std::move(s);
    }
    Matrix attn = C.context * P.wo;
    attn.rowwise() += P.bo.row(0);
    C.attn_mask = detail::dropout_mask(n, D, cfg.dropout, dropout_rng);
    if (C.attn_mask.size()) attn.array() *= C.attn_mask.array();
    x += attn;

    C.ln2_out = detail::layer_norm(x, P.ln2_gain, P.ln2_bias, C.ln2);
    C.ff_pre.noalias() = C.ln2_out * P.w1;
    C.ff_pre.rowwise() += P.b1.row(0);
    C.ff_act = C.ff_pre.unaryExpr([](double v) { return detail::gelu(v); });
    Matrix ff = C.ff_act * P.w2;
    ff.rowwise() += P.b2.row(0);
    C.ff_mask = detail::dropout_mask(n, D, cfg.dropout, dropout_rng);
    if (C.ff_mask.size()) ff.array() *= C.ff_mask.array();
    x += ff;
    detail::check_finite(x, "layer " + std::to_string(l));
  }

  HiddenStates out;
  out.attention_length = len;
  out.values = Matrix::Zero(static_cast<Eigen::Index>(cfg.max_len), D);
  if (params.layers.empty()) {
    out.values.topRows(n) = x;
  } else {
    out.values.topRows(n) = detail::layer_norm(x, params.final_gain, params.final_bias, c.final_ln);
    detail::check_finite(out.values, "final layer norm");
  }
  return out;
}

/// Accumulates into `grads` the parameter gradients of <upstream, h_L> for the
/// forward pass recorded in `cache`.
inline void encode_backward(const EncoderParams& params, const ForwardCache& cache, const Matrix& upstream,
                            EncoderParams& grads) {
  const auto& cfg = params.config;
  const auto D = static_cast<Eigen::Index>(cfg.dim);
  if (upstream.rows() != static_cast<Eigen::Index>(cfg.max_len) || upstream.cols() != D)
    throw std::invalid_argument("upstream gradient shape mismatch");
  if (cache.layers.size() != params.layers.size() || cache.max_len != cfg.max_len || cache.ids.empty())
    throw std::invalid_argument("forward cache does not match encoder");
  if (grads.layers.size() != params.layers.size() || grads.token_embedding.rows() != params.token_embedding.rows() ||
      grads.token_embedding.cols() != D)
    throw std::invalid_argument("gradient container shape mismatch");

  const auto n = static_cast<Eigen::Index>(cache.ids.size());
  const auto H = static_cast<Eigen::Index>(cfg.heads);
  const Eigen::Index dh = D / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix dx = upstream.topRows(n);
  if (!params.layers.empty())
    dx = detail::layer_norm_backward(dx, params.final_gain, cache.final_ln, grads.final_gain, grads.final_bias);

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& P = params.layers[li];
    const auto& C = cache.layers[li];
    auto& G = grads.layers[li];

    // Feed-forward branch.
    Matrix dff = dx;
    if (C.ff_mask.size()) dff.array() *= C.ff_mask.array();
    G.w2.noalias() += C.ff_act.transpose() * dff;
    G.b2.row(0) += dff.colwise().sum();
    Matrix dpre = dff * P.w2.transpose();
    dpre.array() *= C.ff_pre.unaryExpr([](double v) { return detail::gelu_grad(v); }).array();
    G.w1.noalias() += C.ln2_out.transpose() * dpre;
    G.b1.row(0) += dpre.colwise().sum();
    const Matrix dln2 = dpre * P.w1.transpose();
    dx += detail::layer_norm_backward(dln2, P.ln2_gain, C.ln2, G.ln2_gain, G.ln2_bias);

    // Attention branch.
    Matrix dattn = dx;
    if (C.attn_mask.size()) dattn.array() *= C.attn_mask.array();
    G.wo.noalias() += C.context.transpose() * dattn;
    G.bo.row(0) += dattn.colwise().sum();
    const Matrix dcontext = dattn * P.wo.transpose();
    Matrix dq(n, D), dk(n, D), dv(n, D);
    for (Eigen::Index h = 0; h < H; ++h) {
      const Matrix& prob = C.probs[static_cast<std::size_t>(h)];
      const auto dctx = dcontext.middleCols(h * dh, dh);
      dv.middleCols(h * dh, dh).noalias() = prob.transpose() * dctx;
      const Matrix dprob = dctx * C.v.middleCols(h * dh, dh).transpose();
      Matrix ds = prob.array() * (dprob.colwise() - (dprob.array() * prob.array()).rowwise().sum().matrix()).array();
      ds *= scale;
      dq.middleCols(h * dh, dh).noalias() = ds * C.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh).noalias() = ds.transpose() * C.q.middleCols(h * dh, dh);
    }
    G.wq.noalias() += C.ln1_out.transpose() * dq;
    G.bq.row(0) += dq.colwise().sum();
    G.wk.noalias() += C.ln1_out.transpose() * dk;
    G.bk.row(0) += dk.colwise().sum();
    G.wv.noalias() += C.ln1_out.transpose() * dv;
    G.bv.row(0) += dv.colwise().sum();
    Matrix dln1 = dq * P.wq.transpose();
    dln1.noalias() += dk * P.wk.transpose();
    dln1.noalias() += dv * P.wv.transpose();
    dx += detail::layer_norm_backward(dln1, P.ln1_gain, C.ln1, G.ln1_gain, G.ln1_bias);
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    grads.token_embedding.row(cache.ids[static_cast<std::size_t>(i)]) += dx.row(i);
    grads.position_embedding.row(i) += dx.row(i);
  }
}

inline EncoderParams encode_backward(const EncoderParams& params, const ForwardCache& cache, const Matrix& upstream) {
  EncoderParams grads = params.zeros_like();
  encode_backward(params, cache, upstream, grads);
  return grads;
}

// Checkpoint: 8-byte magic, config header, tensor count, then each tensor as
// (rows, cols, row-major data), all little-endian 64-bit. A sidecar
// `<path>.manifest` lists `name<TAB>rows<TAB>cols` in the same order.

inline constexpr char kCheckpointMagic[8] = {'B', 'I', 'E', 'N', 'C', 'C', 'K', '1'};

inline void save_checkpoint(const EncoderParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path);
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  const auto& c = params.config;
  for (std::uint64_t v : {std::uint64_t{c.dim}, std::uint64_t{c.layers}, std::uint64_t{c.heads}, std::uint64_t{c.ff_dim},
                          std::uint64_t{c.max_len}, std::uint64_t{c.vocab_size}})
    detail::write_u64(out, v);
  detail::write_f64(out, c.dropout);
  detail::write_u64(out, c.seed);
  std::uint64_t count = 0;
  params.for_each([&](const std::string&, const Matrix&) { ++count; });
  detail::write_u64(out, count);
  std::ofstream manifest(path + ".manifest");
  if (!manifest) throw Error("cannot write manifest for " + path);
  params.for_each([&](const std::string& name, const Matrix& m) {
    detail::write_matrix(out, m);
    manifest << name << '\t' << m.rows() << '\t' << m.cols() << '\n';
  });
  if (!out) throw Error("failed writing checkpoint " + path);
}

inline EncoderParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw Error(path + " is not an encoder checkpoint");
  EncoderConfig c;
  c.dim = detail::read_u64(in);
  c.layers = detail::read_u64(in);
  c.heads = detail::read_u64(in);
  c.ff_dim = detail::read_u64(in);
  c.max_len = detail::read_u64(in);
  c.vocab_size = detail::read_u64(in);
  c.dropout = detail::read_f64(in);
  c.seed = detail::read_u64(in);
  c.validate();
  EncoderParams p = init_params(c).zeros_like();
  std::uint64_t expected = 0;
  p.for_each([&](const std::string&, const Matrix&) { ++expected; });
  if (detail::read_u64(in) != expected) throw Error(path + ": tensor count does not match its config");
  p.for_each([&](const std::string& name, Matrix& m) {
    Matrix loaded = detail::read_matrix(in);
    if (loaded.rows() != m.rows() || loaded.cols() != m.cols()) throw Error(path + ": shape mismatch for " + name);
    m = std::move(loaded);
  });
  return p;
}

}  // namespace bienc

#endif  // BIENC_ENCODER_HPP
