#pragma once

#include <json.hpp>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "landval/common.hpp"
#include "landval/neural/ops.hpp"

namespace landval::nn {

enum class LayerType : std::uint8_t { conv, embedding, normalizer, linear };

inline std::string_view to_string(LayerType t) {
  switch (t) {
    case LayerType::conv: return "conv";
    case LayerType::embedding: return "embedding";
    case LayerType::normalizer: return "normalizer";
    case LayerType::linear: return "linear";
  }
  return "?";
}

template <class T>
struct Param {
  std::string name;
  LayerType type = LayerType::linear;
  std::vector<T> value;
  std::vector<T> grad;
  bool frozen = false;
};

struct NetConfig {
  int image_side = 64;
  int in_channels = 6;  // 3 per tile kind
  std::vector<int> tower_widths{8, 16, 32, 32};
  int freeze_blocks = 1;
  std::vector<int> vocab_sizes;  // one lookup table per categorical input, OOV row excluded
  int n_continuous = 0;
  std::vector<int> hidden{400, 200, 100, 50};
  double dropout = 0.07;
  bool symmetric = false;  // combine parcel encodings as (a+b, |a-b|) instead of concatenating
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
  std::uint64_t seed = 0;

  static int embed_dim(int vocab) { return std::min(16, std::max(1, (vocab + 1) / 2)); }

  [[nodiscard]] int tower_dim() const { return tower_widths.empty() ? 0 : tower_widths.back(); }

  [[nodiscard]] int parcel_dim() const {
    int d = tower_dim();
    for (int v : vocab_sizes) d += embed_dim(v);
    return d;
  }

  [[nodiscard]] int input_dim() const { return 2 * parcel_dim() + n_continuous; }
  [[nodiscard]] int latent_dim() const { return hidden.empty() ? input_dim() : hidden.back(); }

  void validate() const {
    if (in_channels < 1) throw ConfigError("network needs at least one image channel");
    if (tower_widths.empty()) throw ConfigError("tower needs at least one block");
    if (image_side < 1 || image_side % (1 << tower_widths.size()) != 0)
      throw ConfigError("image side must be divisible by 2^(number of tower blocks)");
    for (int w : tower_widths)
      if (w < 1) throw ConfigError("tower widths must be >= 1");
    if (freeze_blocks < 0 || freeze_blocks > int(tower_widths.size()))
      throw ConfigError("freeze_blocks must lie in [0, number of tower blocks]");
    for (int v : vocab_sizes)
      if (v < 0) throw ConfigError("vocabulary sizes must be >= 0");
    if (n_continuous < 0) throw ConfigError("n_continuous must be >= 0");
    for (int h : hidden)
      if (h < 1) throw ConfigError("hidden sizes must be >= 1");
    if (!(dropout >= 0 && dropout < 1)) throw ConfigError("dropout must lie in [0,1)");
    if (!(bn_momentum > 0 && bn_momentum <= 1)) throw ConfigError("normalizer momentum must lie in (0,1]");
  }

  [[nodiscard]] nlohmann::json to_json() const {
    return {{"image_side", image_side},   {"in_channels", in_channels},   {"tower_widths", tower_widths},
            {"freeze_blocks", freeze_blocks}, {"vocab_sizes", vocab_sizes}, {"n_continuous", n_continuous},
            {"hidden", hidden},           {"dropout", dropout},           {"symmetric", symmetric},
            {"bn_momentum", bn_momentum}, {"bn_eps", bn_eps},             {"seed", seed}};
  }

  static NetConfig from_json(const nlohmann::json& j) {
    NetConfig c;
    c.image_side = j.at("image_side");
    c.in_channels = j.at("in_channels");
    c.tower_widths = j.at("tower_widths").get<std::vector<int>>();
    c.freeze_blocks = j.at("freeze_blocks");
    c.vocab_sizes = j.at("vocab_sizes").get<std::vector<int>>();
    c.n_continuous = j.at("n_continuous");
    c.hidden = j.at("hidden").get<std::vector<int>>();
    c.dropout = j.at("dropout");
    c.symmetric = j.at("symmetric");
    c.bn_momentum = j.at("bn_momentum");
    c.bn_eps = j.at("bn_eps");
    c.seed = j.at("seed");
    return c;
  }
};

/// Parcel-level inputs (images and categorical codes) for the unique parcels
/// of a batch, plus pair-level inputs that index into them.
template <class T>
struct Batch {
  std::size_t n_parcels = 0;
  std::vector<T> images;   // n_parcels x C x S x S
  std::vector<int> codes;  // n_parcels x n_tables; -1 selects the OOV row
  std::vector<std::size_t> primary;
  std::vector<std::size_t> neighbor;
  std::vector<T> continuous;  // n_pairs x n_continuous
  std::vector<T> labels;

  [[nodiscard]] std::size_t n_pairs() const { return primary.size(); }
};

struct Mode {
  bool batch_stats = false;  // normalizer uses and updates batch statistics
  bool dropout = false;
  bool keep = false;  // retain activations for backward

  static Mode train() { return {true, true, true}; }
  static Mode eval() { return {false, false, false}; }
  static Mode check() { return {false, false, true}; }
};

/// Twin-tower similarity network: a shared CNN embeds each parcel's tiles,
/// categorical lookups are appended, the two parcel encodings are combined
/// with the normalized continuous pair features, and an MLP scores the pair.
template <class T>
class SimilarityNet {
 public:
  explicit SimilarityNet(NetConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    build();
    initialize();
  }

  [[nodiscard]] const NetConfig& config() const { return cfg_; }
  std::vector<Param<T>>& params() { return params_; }
  [[nodiscard]] const std::vector<Param<T>>& params() const { return params_; }
  std::vector<T>& running_mean() { return running_mean_; }
  std::vector<T>& running_var() { return running_var_; }
  [[nodiscard]] const std::vector<T>& running_mean() const { return running_mean_; }
  [[nodiscard]] const std::vector<T>& running_var() const { return running_var_; }

  [[nodiscard]] std::size_t n_blocks() const { return cfg_.tower_widths.size(); }
  [[nodiscard]] std::size_t n_tables() const { return cfg_.vocab_sizes.size(); }

  Param<T>& param(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return p;
    throw ShapeError("no parameter named '" + name + "'");
  }

  void set_frozen_blocks(int n) {
    if (n < 0 || n > int(n_blocks())) throw ConfigError("freeze_blocks out of range");
    cfg_.freeze_blocks = n;
    for (std::size_t b = 0; b < n_blocks(); ++b) {
      params_[conv_w_[b]].frozen = int(b) < n;
      params_[conv_b_[b]].frozen = int(b) < n;
    }
  }

  void zero_grad() {
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), T(0));
  }

  // -------------------------------------------------------------------------
  // Forward
  // -------------------------------------------------------------------------

  /// Encodes the batch's parcels (tower + lookups) into rows of parcel_dim().
  std::vector<T> encode(const Batch<T>& b, Mode mode) {
    const std::size_t U = b.n_parcels;
    const std::size_t S = std::size_t(cfg_.image_side);
    if (b.images.size() != U * std::size_t(cfg_.in_channels) * S * S)
      throw ShapeError("batch images do not match the network's channels/side");
    if (b.codes.size() != U * n_tables()) throw ShapeError("batch categorical codes do not match the network");

    auto& c = cache_;
    c.U = U;
    const std::size_t nb = n_blocks();
    c.block_in.assign(nb, {});
    c.block_out.assign(nb, {});
    c.argmax.assign(nb, {});

    std::vector<T> cur = b.images;
    int C = cfg_.in_channels, H = cfg_.image_side;
    for (std::size_t k = 0; k < nb; ++k) {
      const int O = cfg_.tower_widths[k];
      const int h = H / 2;
      const std::size_t HW = std::size_t(H) * H, K9 = std::size_t(C) * 9, hw = std::size_t(h) * h;
      const bool keep = mode.keep && int(k) >= cfg_.freeze_blocks;
      std::vector<T> next(U * O * hw);
      std::vector<int> arg(U * O * hw);
      col_.resize(K9 * HW);
      conv_.resize(std::size_t(O) * HW);
      const auto& W = params_[conv_w_[k]].value;
      const auto& bias = params_[conv_b_[k]].value;
      for (std::size_t u = 0; u < U; ++u) {
        im2col3(cur.data() + u * C * HW, C, H, H, col_.data());
        for (int o = 0; o < O; ++o) std::fill(conv_.begin() + o * HW, conv_.begin() + (o + 1) * HW, bias[o]);
        gemm_nn(std::size_t(O), HW, K9, W.data(), col_.data(), conv_.data());
        for (auto& v : conv_) v = v > T(0) ? v : T(0);
        maxpool2(conv_.data(), O, H, H, next.data() + u * O * hw, arg.data() + u * O * hw);
      }
      if (keep) {
        c.block_in[k] = std::move(cur);
        c.argmax[k] = std::move(arg);
        c.block_out[k] = next;
      }
      cur = std::move(next);
      C = O;
      H = h;
    }
    c.last_hw = std::size_t(H) * H;

    const std::size_t P = std::size_t(cfg_.parcel_dim()), D = std::size_t(cfg_.tower_dim());
    std::vector<T> enc(U * P, T(0));
    for (std::size_t u = 0; u < U; ++u) {
      T* e = enc.data() + u * P;
      for (std::size_t d = 0; d < D; ++d) {
        const T* src = cur.data() + (u * D + d) * c.last_hw;
        T s = 0;
        for (std::size_t i = 0; i < c.last_hw; ++i) s += src[i];
        e[d] = s / T(c.last_hw);
      }
      std::size_t off = D;
      for (std::size_t t = 0; t < n_tables(); ++t) {
        const std::size_t dim = std::size_t(NetConfig::embed_dim(cfg_.vocab_sizes[t]));
        const auto& tab = params_[embed_[t]].value;
        const std::size_t row = table_row(t, b.codes[u * n_tables() + t]);
        std::copy_n(tab.begin() + row * dim, dim, e + off);
        off += dim;
      }
    }
    if (mode.keep) c.codes = b.codes;
    return enc;
  }

  /// Scores pairs from precomputed parcel encodings. Returns the mean BCE
  /// when labels are present (0 otherwise); logits and latents are cached.
  T head(const std::vector<T>& enc, const Batch<T>& b, Mode mode, std::uint64_t dropout_seed = 0) {
    const std::size_t B = b.n_pairs(), P = std::size_t(cfg_.parcel_dim());
    const std::size_t nc = std::size_t(cfg_.n_continuous), in0 = std::size_t(cfg_.input_dim());
    if (b.neighbor.size() != B || b.continuous.size() != B * nc) throw ShapeError("batch pair inputs are inconsistent");
    auto& c = cache_;
    c.B = B;

    // normalizer over the continuous pair features
    c.xhat.assign(B * nc, T(0));
    std::vector<T> mean(nc, T(0)), var(nc, T(0));
    if (mode.batch_stats && B > 0) {
      for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < nc; ++j) mean[j] += b.continuous[i * nc + j];
      for (auto& m : mean) m /= T(B);
      for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < nc; ++j) {
          const T d = b.continuous[i * nc + j] - mean[j];
          var[j] += d * d;
        }
      const T mom = T(cfg_.bn_momentum);
      for (std::size_t j = 0; j < nc; ++j) {
        const T biased = var[j] / T(B);
        const T unbiased = B > 1 ? var[j] / T(B - 1) : biased;
        running_mean_[j] = (T(1) - mom) * running_mean_[j] + mom * mean[j];
        running_var_[j] = (T(1) - mom) * running_var_[j] + mom * unbiased;
        var[j] = biased;
      }
    } else {
      mean = running_mean_;
      var = running_var_;
    }
    const auto& gamma = params_[gamma_].value;
    const auto& beta = params_[beta_].value;

    // pair input row: combined parcel encodings, then normalized continuous features
    std::vector<T> x0(B * in0);
    for (std::size_t i = 0; i < B; ++i) {
      const std::size_t p = b.primary[i], q = b.neighbor[i];
      if (p >= enc.size() / P || q >= enc.size() / P)
        throw ShapeError("pair references a parcel outside the batch");
      const T* ep = enc.data() + p * P;
      const T* eq = enc.data() + q * P;
      T* x = x0.data() + i * in0;
      if (cfg_.symmetric) {
        for (std::size_t d = 0; d < P; ++d) {
          x[d] = ep[d] + eq[d];
          x[P + d] = std::abs(ep[d] - eq[d]);
        }
      } else {
        std::copy_n(ep, P, x);
        std::copy_n(eq, P, x + P);
      }
      for (std::size_t j = 0; j < nc; ++j) {
        const T xh = (b.continuous[i * nc + j] - mean[j]) / std::sqrt(var[j] + T(cfg_.bn_eps));
        c.xhat[i * nc + j] = xh;
        x[2 * P + j] = gamma[j] * xh + beta[j];
      }
    }

    // MLP
    const std::size_t L = cfg_.hidden.size();
    c.acts.assign(L + 1, {});
    c.masks.assign(L, {});
    c.acts[0] = std::move(x0);
    std::mt19937_64 rng(dropout_seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const bool drop = mode.dropout && cfg_.dropout > 0;
    const T keep_scale = T(1.0 / (1.0 - cfg_.dropout));
    std::size_t width = in0;
    for (std::size_t l = 0; l < L; ++l) {
      const std::size_t out = std::size_t(cfg_.hidden[l]);
      const auto& W = params_[fc_w_[l]].value;
      const auto& bias = params_[fc_b_[l]].value;
      std::vector<T> z(B * out);
      for (std::size_t i = 0; i < B; ++i) std::copy(bias.begin(), bias.end(), z.begin() + i * out);
      gemm_nn(B, out, width, c.acts[l].data(), W.data(), z.data());
      for (auto& v : z) v = v > T(0) ? v : T(0);
      if (drop) {
        auto& m = c.masks[l];
        m.resize(z.size());
        for (std::size_t k = 0; k < z.size(); ++k) {
          m[k] = u01(rng) < cfg_.dropout ? T(0) : keep_scale;
          z[k] *= m[k];
        }
      }
      c.acts[l + 1] = std::move(z);
      width = out;
    }
    const auto& wo = params_[fc_w_[L]].value;
    const T bo = params_[fc_b_[L]].value[0];
    c.logits.resize(B);
    for (std::size_t i = 0; i < B; ++i) c.logits[i] = bo + dot(c.acts[L].data() + i * width, wo.data(), width);
    c.latent_width = width;

    c.labels = b.labels;
    if (b.labels.size() != B) return T(0);
    T loss = 0;
    for (std::size_t i = 0; i < B; ++i) loss += bce_with_logit(c.logits[i], b.labels[i]);
    return B ? loss / T(B) : T(0);
  }

  T forward(const Batch<T>& b, Mode mode, std::uint64_t dropout_seed = 0) {
    enc_ = encode(b, mode);
    if (mode.keep) cache_.primary = b.primary, cache_.neighbor = b.neighbor;
    return head(enc_, b, mode, dropout_seed);
  }

  [[nodiscard]] const std::vector<T>& logits() const { return cache_.logits; }

  [[nodiscard]] std::vector<T> scores() const {
    std::vector<T> s(cache_.logits.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = sigmoid(cache_.logits[i]);
    return s;
  }

  /// Last hidden activations of the most recent head() call (B x latent width).
  [[nodiscard]] const std::vector<T>& latents() const { return cache_.acts.back(); }
  [[nodiscard]] std::size_t latent_width() const { return cache_.latent_width; }

  // -------------------------------------------------------------------------
  // Backward: gradient of the mean BCE of the last forward(keep=true) call.
  // Gradients accumulate into Param::grad; frozen parameters get none.
  // -------------------------------------------------------------------------

  void backward() {
    auto& c = cache_;
    const std::size_t B = c.B, P = std::size_t(cfg_.parcel_dim()), nc = std::size_t(cfg_.n_continuous);
    const std::size_t in0 = std::size_t(cfg_.input_dim()), L = cfg_.hidden.size();
    if (c.acts.empty() || c.labels.size() != B) throw ShapeError("backward needs a labeled forward pass");

    std::vector<T> dz(B);
    for (std::size_t i = 0; i < B; ++i) dz[i] = (sigmoid(c.logits[i]) - c.labels[i]) / T(B);

    // output layer
    std::size_t width = c.latent_width;
    std::vector<T> dA(B * width, T(0));
    {
      auto& pw = params_[fc_w_[L]];
      auto& pb = params_[fc_b_[L]];
      for (std::size_t i = 0; i < B; ++i) {
        if (!pw.frozen) axpy(dz[i], c.acts[L].data() + i * width, pw.grad.data(), width);
        if (!pb.frozen) pb.grad[0] += dz[i];
        axpy(dz[i], pw.value.data(), dA.data() + i * width, width);
      }
    }
    // hidden layers
    for (std::size_t l = L; l-- > 0;) {
      const std::size_t out = width;
      const std::size_t in = l == 0 ? in0 : std::size_t(cfg_.hidden[l - 1]);
      const auto& act = c.acts[l + 1];
      const auto& mask = c.masks[l];
      for (std::size_t k = 0; k < dA.size(); ++k)
        dA[k] = act[k] > T(0) ? dA[k] * (mask.empty() ? T(1) : mask[k]) : T(0);
      auto& pw = params_[fc_w_[l]];
      auto& pb = params_[fc_b_[l]];
      if (!pw.frozen) gemm_tn(in, out, B, c.acts[l].data(), dA.data(), pw.grad.data());
      if (!pb.frozen)
        for (std::size_t i = 0; i < B; ++i) axpy(T(1), dA.data() + i * out, pb.grad.data(), out);
      std::vector<T> dprev(B * in, T(0));
      gemm_nt(B, in, out, dA.data(), pw.value.data(), dprev.data());
      dA = std::move(dprev);
      width = in;
    }

    // normalizer affine parameters
    {
      auto& pg = params_[gamma_];
      auto& pbeta = params_[beta_];
      for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < nc; ++j) {
          const T g = dA[i * in0 + 2 * P + j];
          if (!pg.frozen) pg.grad[j] += g * c.xhat[i * nc + j];
          if (!pbeta.frozen) pbeta.grad[j] += g;
        }
    }

    // parcel encodings
    std::vector<T> denc(c.U * P, T(0));
    for (std::size_t i = 0; i < B; ++i) {
      const T* g = dA.data() + i * in0;
      T* dp = denc.data() + c.primary[i] * P;
      T* dq = denc.data() + c.neighbor[i] * P;
      if (cfg_.symmetric) {
        const T* ep = enc_.data() + c.primary[i] * P;
        const T* eq = enc_.data() + c.neighbor[i] * P;
        for (std::size_t d = 0; d < P; ++d) {
          const T diff = ep[d] - eq[d];
          const T sgn = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
          dp[d] += g[d] + sgn * g[P + d];
          dq[d] += g[d] - sgn * g[P + d];
        }
      } else {
        axpy(T(1), g, dp, P);
        axpy(T(1), g + P, dq, P);
      }
    }

    // embedding tables
    const std::size_t D = std::size_t(cfg_.tower_dim());
    {
      std::size_t off = D;
      for (std::size_t t = 0; t < n_tables(); ++t) {
        const std::size_t dim = std::size_t(NetConfig::embed_dim(cfg_.vocab_sizes[t]));
        auto& tab = params_[embed_[t]];
        if (!tab.frozen)
          for (std::size_t u = 0; u < c.U; ++u) {
            const std::size_t row = table_row(t, c.codes[u * n_tables() + t]);
            axpy(T(1), denc.data() + u * P + off, tab.grad.data() + row * dim, dim);
          }
        off += dim;
      }
    }

    // tower
    const std::size_t nb = n_blocks();
    if (int(nb) <= cfg_.freeze_blocks) return;
    std::vector<T> dpool(c.U * D * c.last_hw);
    for (std::size_t u = 0; u < c.U; ++u)
      for (std::size_t d = 0; d < D; ++d) {
        const T g = denc[u * P + d] / T(c.last_hw);
        std::fill_n(dpool.begin() + (u * D + d) * c.last_hw, c.last_hw, g);
      }
    for (std::size_t k = nb; k-- > std::size_t(cfg_.freeze_blocks);) {
      const int O = cfg_.tower_widths[k];
      const int C = k == 0 ? cfg_.in_channels : cfg_.tower_widths[k - 1];
      const int H = cfg_.image_side >> k;
      const int h = H / 2;
      const std::size_t HW = std::size_t(H) * H, hw = std::size_t(h) * h, K9 = std::size_t(C) * 9;
      auto& pw = params_[conv_w_[k]];
      auto& pb = params_[conv_b_[k]];
      const bool need_input = int(k) > cfg_.freeze_blocks;
      std::vector<T> din(need_input ? c.U * C * HW : 0, T(0));
      std::vector<T> dpre(std::size_t(O) * HW);
      col_.resize(K9 * HW);
      std::vector<T> dcol(need_input ? K9 * HW : 0);
      for (std::size_t u = 0; u < c.U; ++u) {
        std::fill(dpre.begin(), dpre.end(), T(0));
        const T* out = c.block_out[k].data() + u * O * hw;
        const int* arg = c.argmax[k].data() + u * O * hw;
        const T* dp = dpool.data() + u * O * hw;
        for (int o = 0; o < O; ++o)
          for (std::size_t i = 0; i < hw; ++i) {
            const std::size_t idx = std::size_t(o) * hw + i;
            if (out[idx] > T(0)) dpre[std::size_t(o) * HW + std::size_t(arg[idx])] += dp[idx];
          }
        for (int o = 0; o < O; ++o) {
          T s = 0;
          for (std::size_t i = 0; i < HW; ++i) s += dpre[std::size_t(o) * HW + i];
          pb.grad[o] += s;
        }
        im2col3(c.block_in[k].data() + u * C * HW, C, H, H, col_.data());
        gemm_nt(std::size_t(O), K9, HW, dpre.data(), col_.data(), pw.grad.data());
        if (need_input) {
          std::fill(dcol.begin(), dcol.end(), T(0));
          gemm_tn(K9, HW, std::size_t(O), pw.value.data(), dpre.data(), dcol.data());
          col2im3(dcol.data(), C, H, H, din.data() + u * C * HW);
        }
      }
      dpool = std::move(din);
    }
  }

  // -------------------------------------------------------------------------
  // Conversion and serialization
  // -------------------------------------------------------------------------

  template <class U>
  [[nodiscard]] SimilarityNet<U> cast() const {
    SimilarityNet<U> out(cfg_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& dst = out.params()[i];
      dst.value.assign(params_[i].value.begin(), params_[i].value.end());
      dst.frozen = params_[i].frozen;
    }
    out.running_mean().assign(running_mean_.begin(), running_mean_.end());
    out.running_var().assign(running_var_.begin(), running_var_.end());
    return out;
  }

  [[nodiscard]] std::vector<std::vector<T>> snapshot() const {
    std::vector<std::vector<T>> s;
    for (const auto& p : params_) s.push_back(p.value);
    s.push_back(running_mean_);
    s.push_back(running_var_);
    return s;
  }

  void restore(const std::vector<std::vector<T>>& s) {
    if (s.size() != params_.size() + 2) throw ShapeError("snapshot does not match the network");
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].value = s[i];
    running_mean_ = s[params_.size()];
    running_var_ = s[params_.size() + 1];
  }

 private:
  struct Cache {
    std::size_t U = 0, B = 0, last_hw = 0, latent_width = 0;
    std::vector<std::vector<T>> block_in, block_out;
    std::vector<std::vector<int>> argmax;
    std::vector<int> codes;
    std::vector<std::size_t> primary, neighbor;
    std::vector<T> xhat, logits, labels;
    std::vector<std::vector<T>> acts, masks;
  };

  std::size_t table_row(std::size_t t, int code) const {
    const int v = cfg_.vocab_sizes[t];
    return std::size_t(code >= 0 && code < v ? code : v);
  }

  std::size_t add(std::string name, LayerType type, std::size_t n) {
    params_.push_back({std::move(name), type, std::vector<T>(n, T(0)), std::vector<T>(n, T(0)), false});
    return params_.size() - 1;
  }

  void build() {
    int C = cfg_.in_channels;
    for (std::size_t k = 0; k < cfg_.tower_widths.size(); ++k) {
      const int O = cfg_.tower_widths[k];
      conv_w_.push_back(add("tower.block" + std::to_string(k) + ".weight", LayerType::conv, std::size_t(O) * C * 9));
      conv_b_.push_back(add("tower.block" + std::to_string(k) + ".bias", LayerType::conv, std::size_t(O)));
      C = O;
    }
    for (std::size_t t = 0; t < cfg_.vocab_sizes.size(); ++t) {
      const int v = cfg_.vocab_sizes[t];
      embed_.push_back(add("embedding" + std::to_string(t), LayerType::embedding,
                           std::size_t(v + 1) * std::size_t(NetConfig::embed_dim(v))));
    }
    gamma_ = add("normalizer.gamma", LayerType::normalizer, std::size_t(cfg_.n_continuous));
    beta_ = add("normalizer.beta", LayerType::normalizer, std::size_t(cfg_.n_continuous));
    std::size_t in = std::size_t(cfg_.input_dim());
    for (std::size_t l = 0; l <= cfg_.hidden.size(); ++l) {
      const std::size_t out = l < cfg_.hidden.size() ? std::size_t(cfg_.hidden[l]) : 1;
      fc_w_.push_back(add("mlp.fc" + std::to_string(l) + ".weight", LayerType::linear, in * out));
      fc_b_.push_back(add("mlp.fc" + std::to_string(l) + ".bias", LayerType::linear, out));
      in = out;
    }
    running_mean_.assign(std::size_t(cfg_.n_continuous), T(0));
    running_var_.assign(std::size_t(cfg_.n_continuous), T(1));
  }

  void initialize() {
    std::mt19937_64 rng(mix_seed(cfg_.seed, 0x1417));
    auto he = [&](Param<T>& p, std::size_t fan_in) {
      std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / double(fan_in)));
      for (auto& v : p.value) v = T(nd(rng));
    };
    int C = cfg_.in_channels;
    for (std::size_t k = 0; k < conv_w_.size(); ++k) {
      he(params_[conv_w_[k]], std::size_t(C) * 9);
      C = cfg_.tower_widths[k];
    }
    std::uniform_real_distribution<double> emb(-0.05, 0.05);
    for (auto t : embed_)
      for (auto& v : params_[t].value) v = T(emb(rng));
    std::fill(params_[gamma_].value.begin(), params_[gamma_].value.end(), T(1));
    std::size_t in = std::size_t(cfg_.input_dim());
    for (std::size_t l = 0; l < fc_w_.size(); ++l) {
      he(params_[fc_w_[l]], in);
      in = params_[fc_b_[l]].value.size();
    }
    set_frozen_blocks(cfg_.freeze_blocks);
  }

  NetConfig cfg_;
  std::vector<Param<T>> params_;
  std::vector<std::size_t> conv_w_, conv_b_, embed_, fc_w_, fc_b_;
  std::size_t gamma_ = 0, beta_ = 0;
  std::vector<T> running_mean_, running_var_;
  Cache cache_;
  std::vector<T> enc_, col_, conv_;
};

}  // namespace landval::nn
