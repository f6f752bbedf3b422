#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "landval/imagery.hpp"
#include "landval/matrix.hpp"
#include "landval/metrics.hpp"
#include "landval/neural/network.hpp"
#include "landval/pairgen.hpp"
#include "landval/tile_store.hpp"

namespace landval::nn {

// ---------------------------------------------------------------------------
// Inputs
// ---------------------------------------------------------------------------

/// Per-parcel network inputs: raw tiles per kind (width 0 when missing) and
/// lookup codes (province first, then each categorical attribute).
struct NeuralData {
  std::vector<TileKind> kinds;
  std::vector<std::vector<RgbImage>> tiles;
  std::vector<std::vector<int>> codes;
  std::vector<int> vocab_sizes;

  [[nodiscard]] int channels() const { return 3 * int(kinds.size()); }
};

inline NeuralData make_neural_data(const Dataset& ds, const TileStore& store, std::span<const TileKind> kinds) {
  NeuralData d;
  d.kinds.assign(kinds.begin(), kinds.end());
  const auto& sch = ds.schema();
  d.vocab_sizes.push_back(int(sch.provinces.size()));
  for (const auto& v : sch.vocabularies) d.vocab_sizes.push_back(int(v.size()));
  d.tiles.resize(ds.size());
  d.codes.resize(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& p = ds[i];
    for (auto k : kinds) {
      auto t = store.load(k, p.id);
      d.tiles[i].push_back(t ? std::move(t->image) : RgbImage());
    }
    d.codes[i].push_back(sch.province_index(p.province));
    for (std::size_t a = 0; a < p.categorical.size(); ++a) d.codes[i].push_back(sch.category_index(a, p.categorical[a]));
  }
  return d;
}

struct PairSample {
  std::size_t primary = 0;   // dataset index
  std::size_t neighbor = 0;  // dataset index
  std::vector<double> x;     // selected pair features
  int label = 0;
};

inline std::vector<PairSample> make_pair_samples(const std::vector<PairRecord>& pairs,
                                                 std::span<const std::size_t> columns) {
  std::vector<PairSample> out;
  out.reserve(pairs.size());
  for (const auto& r : pairs) {
    PairSample s{r.primary, r.neighbor, {}, r.label};
    s.x.reserve(columns.size());
    for (auto c : columns) s.x.push_back(r.features.at(c));
    out.push_back(std::move(s));
  }
  return out;
}

/// Writes one parcel's tiles as normalized CHW channels.
template <class T>
void write_parcel_pixels(const NeuralData& d, std::size_t parcel, int side, const AugmentConfig* aug,
                         std::uint64_t aug_seed, T* dst) {
  const std::size_t plane = std::size_t(side) * side;
  for (std::size_t k = 0; k < d.kinds.size(); ++k) {
    T* out = dst + 3 * k * plane;
    const RgbImage& src = d.tiles[parcel][k];
    if (src.width == 0) {
      std::fill_n(out, 3 * plane, T(0));
      continue;
    }
    RgbImage img = (src.width == side && src.height == side) ? src : resize_bilinear(src, side, side);
    if (aug) img = augment(img, *aug, aug_seed);
    for (std::size_t i = 0; i < plane; ++i)
      for (int c = 0; c < 3; ++c) out[std::size_t(c) * plane + i] = T(img.pixels[3 * i + c]) / T(255) - T(0.5);
  }
}

/// Gathers a batch; each distinct parcel appears once and is shared by every pair that references it.
template <class T>
Batch<T> make_batch(const NeuralData& d, int side, std::span<const PairSample> all, std::span<const std::size_t> rows,
                    const AugmentConfig* aug = nullptr, std::uint64_t aug_seed = 0) {
  Batch<T> b;
  std::map<std::size_t, std::size_t> local;
  std::vector<std::size_t> parcels;
  auto slot = [&](std::size_t p) {
    auto [it, inserted] = local.try_emplace(p, parcels.size());
    if (inserted) parcels.push_back(p);
    return it->second;
  };
  const std::size_t nc = rows.empty() ? 0 : all[rows[0]].x.size();
  for (auto r : rows) {
    const auto& s = all[r];
    b.primary.push_back(slot(s.primary));
    b.neighbor.push_back(slot(s.neighbor));
    if (s.x.size() != nc) throw ShapeError("pair samples differ in feature width");
    for (double v : s.x) b.continuous.push_back(T(v));
    b.labels.push_back(T(s.label));
  }
  b.n_parcels = parcels.size();
  const std::size_t per = std::size_t(d.channels()) * side * side;
  b.images.resize(parcels.size() * per);
  for (std::size_t u = 0; u < parcels.size(); ++u) {
    write_parcel_pixels(d, parcels[u], side, aug, mix_seed(aug_seed, parcels[u]), b.images.data() + u * per);
    b.codes.insert(b.codes.end(), d.codes[parcels[u]].begin(), d.codes[parcels[u]].end());
  }
  return b;
}

// ---------------------------------------------------------------------------
// Schedule and optimizer
// ---------------------------------------------------------------------------

inline double cosine_lr(double eta_max, double eta_min, double t_cur, double t_i) {
  return eta_min + 0.5 * (eta_max - eta_min) * (1.0 + std::cos(std::numbers::pi * t_cur / t_i));
}

/// Cosine annealing with warm restarts, counted in optimizer steps.
struct CosineWarmRestarts {
  double eta_max = 0.025;
  double eta_min = 1e-4;
  std::size_t t0 = 100;
  int t_mult = 2;

  [[nodiscard]] double lr_at(std::size_t step) const {
    if (t0 == 0) throw ConfigError("restart period must be >= 1 step");
    if (t_mult < 1) throw ConfigError("restart multiplier must be >= 1");
    std::size_t t_i = t0, t = step;
    while (t >= t_i) {
      t -= t_i;
      t_i *= std::size_t(t_mult);
    }
    return cosine_lr(eta_max, eta_min, double(t), double(t_i));
  }
};

/// SGD with Nesterov momentum: v = mu*v + g; p -= lr*(g + mu*v).
template <class T>
class NesterovSgd {
 public:
  explicit NesterovSgd(double momentum) : mu_(momentum) {}

  void step(std::vector<Param<T>>& params, double lr) {
    if (velocity_.size() != params.size()) {
      velocity_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) velocity_[i].assign(params[i].value.size(), T(0));
    }
    const T mu = T(mu_), eta = T(lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      if (p.frozen) continue;
      auto& v = velocity_[i];
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        v[k] = mu * v[k] + p.grad[k];
        p.value[k] -= eta * (p.grad[k] + mu * v[k]);
      }
    }
  }

 private:
  double mu_;
  std::vector<std::vector<T>> velocity_;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  double lr = 0.025;
  double lr_min = 1e-4;
  double momentum = 0.9;
  double t0_epochs = 10.0;  // first restart period
  int t_mult = 2;
  int patience = 5;                      // epochs without val AUC gain before stopping; 0 disables
  std::size_t pairs_per_epoch = 2048;    // 0 = every train pair each epoch
  std::size_t val_monitor_pairs = 2000;  // 0 = every val pair
  bool augment = true;
  AugmentConfig augmentation;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(lr >= 0)) throw ConfigError("learning rate must be >= 0");
    if (!(lr_min >= 0 && lr_min <= lr)) throw ConfigError("lr_min must lie in [0, lr]");
    if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must lie in [0,1)");
    if (!(t0_epochs > 0)) throw ConfigError("t0_epochs must be > 0");
    if (t_mult < 1) throw ConfigError("t_mult must be >= 1");
    if (patience < 0) throw ConfigError("patience must be >= 0");
    augmentation.validate();
  }
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  std::optional<double> val_loss;
  std::optional<double> val_auc;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  bool stopped_early = false;
  std::size_t steps = 0;
};

inline std::string history_csv(const TrainResult& r) {
  std::string out = "epoch,lr,train_loss,val_loss,val_auc\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_fixed(*v, 6) : std::string(); };
  for (const auto& e : r.history)
    out += std::to_string(e.epoch) + ',' + format_fixed(e.lr, 8) + ',' + format_fixed(e.train_loss, 6) + ',' +
           opt(e.val_loss) + ',' + opt(e.val_auc) + '\n';
  return out;
}

struct Inference {
  std::vector<double> scores;
  Matrix latents;  // rows = pairs; empty unless requested
};

/// Inference-mode scores (and optionally latents) for every sample. Each
/// parcel is encoded once; chunking changes results only by rounding.
template <class T>
Inference infer(SimilarityNet<T>& net, const NeuralData& d, std::span<const PairSample> samples,
                bool want_latents = false, std::size_t chunk = 256) {
  const int side = net.config().image_side;
  const std::size_t P = std::size_t(net.config().parcel_dim());
  std::vector<std::size_t> parcels;
  for (const auto& s : samples) parcels.push_back(s.primary), parcels.push_back(s.neighbor);
  std::sort(parcels.begin(), parcels.end());
  parcels.erase(std::unique(parcels.begin(), parcels.end()), parcels.end());

  std::vector<T> enc(parcels.size() * P);
  const std::size_t per = std::size_t(d.channels()) * side * side;
  for (std::size_t b = 0; b < parcels.size(); b += 64) {
    const std::size_t e = std::min(parcels.size(), b + 64);
    Batch<T> pb;
    pb.n_parcels = e - b;
    pb.images.resize(pb.n_parcels * per);
    for (std::size_t u = b; u < e; ++u) {
      write_parcel_pixels<T>(d, parcels[u], side, nullptr, 0, pb.images.data() + (u - b) * per);
      pb.codes.insert(pb.codes.end(), d.codes[parcels[u]].begin(), d.codes[parcels[u]].end());
    }
    auto part = net.encode(pb, Mode::eval());
    std::copy(part.begin(), part.end(), enc.begin() + b * P);
  }

  auto row_of = [&](std::size_t p) { return std::size_t(std::lower_bound(parcels.begin(), parcels.end(), p) - parcels.begin()); };
  Inference out;
  out.scores.resize(samples.size());
  const std::size_t lw = std::size_t(net.config().latent_dim());
  if (want_latents) out.latents = Matrix(samples.size(), lw);
  for (std::size_t b = 0; b < samples.size(); b += chunk) {
    const std::size_t e = std::min(samples.size(), b + chunk);
    Batch<T> pb;
    for (std::size_t i = b; i < e; ++i) {
      pb.primary.push_back(row_of(samples[i].primary));
      pb.neighbor.push_back(row_of(samples[i].neighbor));
      for (double v : samples[i].x) pb.continuous.push_back(T(v));
    }
    net.head(enc, pb, Mode::eval());
    const auto s = net.scores();
    for (std::size_t i = b; i < e; ++i) out.scores[i] = double(s[i - b]);
    if (want_latents) {
      const auto& lat = net.latents();
      for (std::size_t i = b; i < e; ++i)
        for (std::size_t k = 0; k < lw; ++k) out.latents(i, k) = double(lat[(i - b) * lw + k]);
    }
  }
  return out;
}

inline std::vector<std::size_t> seeded_subset(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (k == 0 || k >= n) return idx;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

template <class T>
TrainResult train(SimilarityNet<T>& net, const NeuralData& d, std::span<const PairSample> train_set,
                  std::span<const PairSample> val_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw DataError("training split has no pairs");
  {
    std::vector<int> y;
    for (const auto& s : train_set) y.push_back(s.label);
    check_binary_labels(y);
  }
  const int side = net.config().image_side;
  const std::size_t per_epoch =
      cfg.pairs_per_epoch == 0 ? train_set.size() : std::min(cfg.pairs_per_epoch, train_set.size());
  const std::size_t bs = std::size_t(cfg.batch_size);
  const std::size_t steps_per_epoch = (per_epoch + bs - 1) / bs;
  CosineWarmRestarts sched{cfg.lr, cfg.lr_min,
                           std::max<std::size_t>(1, std::size_t(std::llround(cfg.t0_epochs * double(steps_per_epoch)))),
                           cfg.t_mult};

  std::vector<PairSample> monitor;
  for (auto i : seeded_subset(val_set.size(), cfg.val_monitor_pairs, mix_seed(cfg.seed, 0x7a1)))
    monitor.push_back(val_set[i]);
  std::vector<int> monitor_labels;
  for (const auto& s : monitor) monitor_labels.push_back(s.label);
  const bool can_rank = std::count(monitor_labels.begin(), monitor_labels.end(), 1) > 0 &&
                        std::count(monitor_labels.begin(), monitor_labels.end(), 0) > 0;

  NesterovSgd<T> opt(cfg.momentum);
  TrainResult res;
  std::optional<double> best_auc;
  auto best = net.snapshot();
  int since_best = 0;
  std::vector<std::size_t> order(train_set.size());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(cfg.seed, std::uint64_t(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t loss_n = 0;
    double lr = sched.lr_at(res.steps);
    for (std::size_t b = 0; b < per_epoch; b += bs) {
      const std::size_t e = std::min(per_epoch, b + bs);
      const std::span<const std::size_t> rows(order.data() + b, e - b);
      const std::uint64_t bseed = mix_seed(mix_seed(cfg.seed, std::uint64_t(epoch)), b);
      auto batch = make_batch<T>(d, side, train_set, rows, cfg.augment ? &cfg.augmentation : nullptr, bseed);
      net.zero_grad();
      const T loss = net.forward(batch, Mode::train(), mix_seed(bseed, 1));
      if (!std::isfinite(double(loss)))
        throw Error("training diverged: loss is not finite at epoch " + std::to_string(epoch));
      net.backward();
      lr = sched.lr_at(res.steps);
      opt.step(net.params(), lr);
      ++res.steps;
      loss_sum += double(loss) * double(e - b);
      loss_n += e - b;
    }
    EpochRecord rec{epoch, lr, loss_sum / double(loss_n), std::nullopt, std::nullopt};
    if (!monitor.empty()) {
      const auto inf = infer(net, d, monitor);
      double vl = 0;
      for (std::size_t i = 0; i < monitor.size(); ++i) vl += bce_loss(inf.scores[i], monitor[i].label);
      rec.val_loss = vl / double(monitor.size());
      if (can_rank) rec.val_auc = auc(inf.scores, monitor_labels);
    }
    res.history.push_back(rec);

    if (rec.val_auc) {
      if (!best_auc || *rec.val_auc > *best_auc) {
        best_auc = rec.val_auc;
        best = net.snapshot();
        res.best_epoch = epoch;
        since_best = 0;
      } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
        res.stopped_early = true;
        break;
      }
    } else {
      best = net.snapshot();
      res.best_epoch = epoch;
    }
  }
  net.restore(best);
  return res;
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

struct GradCheckResult {
  bool nondeterministic = false;  // dropout active: finite differences are meaningless
  double max_rel_error = 0.0;
  std::map<LayerType, double> per_type;
  std::size_t n_checked = 0;
};

inline constexpr std::array<LayerType, 4> kAllLayerTypes = {LayerType::conv, LayerType::embedding,
                                                            LayerType::normalizer, LayerType::linear};

/// Compares backprop gradients with central differences (h = 1e-5) on a
/// random parameter sample stratified by layer type. The normalizer runs on
/// its frozen statistics.
inline GradCheckResult gradient_check(SimilarityNet<double>& net, const Batch<double>& batch,
                                      std::size_t n_params = 64, std::uint64_t seed = 0,
                                      std::span<const LayerType> types = kAllLayerTypes, double h = 1e-5) {
  GradCheckResult res;
  if (net.config().dropout > 0) {
    res.nondeterministic = true;
    return res;
  }
  const Mode mode{false, true, true};
  net.zero_grad();
  net.forward(batch, mode);
  net.backward();

  std::map<LayerType, std::vector<std::pair<std::size_t, std::size_t>>> pool;
  auto& params = net.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.frozen || std::find(types.begin(), types.end(), p.type) == types.end()) continue;
    for (std::size_t k = 0; k < p.value.size(); ++k)
      if (p.type != LayerType::embedding || p.grad[k] != 0.0) pool[p.type].emplace_back(i, k);
  }
  std::mt19937_64 rng(seed);
  std::vector<std::pair<std::size_t, std::size_t>> picks;
  for (auto& [type, cand] : pool) std::shuffle(cand.begin(), cand.end(), rng);
  for (std::size_t round = 0; picks.size() < n_params; ++round) {
    bool any = false;
    for (auto& [type, cand] : pool)
      if (round < cand.size() && picks.size() < n_params) {
        picks.push_back(cand[round]);
        any = true;
      }
    if (!any) break;
  }

  for (auto [i, k] : picks) {
    auto& p = params[i];
    const double analytic = p.grad[k];
    const double orig = p.value[k];
    p.value[k] = orig + h;
    const double up = net.forward(batch, mode);
    p.value[k] = orig - h;
    const double down = net.forward(batch, mode);
    p.value[k] = orig;
    const double numeric = (up - down) / (2 * h);
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    res.max_rel_error = std::max(res.max_rel_error, rel);
    res.per_type[p.type] = std::max(res.per_type[p.type], rel);
    ++res.n_checked;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr std::string_view kNetFormat = "landval.similarity_net";
inline constexpr int kNetFormatVersion = 1;

template <class T>
nlohmann::json checkpoint_json(const SimilarityNet<T>& net) {
  nlohmann::json j;
  j["format"] = kNetFormat;
  j["version"] = kNetFormatVersion;
  j["config"] = net.config().to_json();
  j["params"] = nlohmann::json::object();
  for (const auto& p : net.params()) j["params"][p.name] = p.value;
  j["running_mean"] = net.running_mean();
  j["running_var"] = net.running_var();
  return j;
}

template <class T>
SimilarityNet<T> net_from_checkpoint(const nlohmann::json& j) {
  if (j.value("format", "") != kNetFormat) throw DataError("not a similarity network checkpoint");
  if (j.value("version", 0) != kNetFormatVersion) throw DataError("unsupported checkpoint version");
  SimilarityNet<T> net(NetConfig::from_json(j.at("config")));
  for (auto& p : net.params()) {
    auto v = j.at("params").at(p.name).template get<std::vector<T>>();
    if (v.size() != p.value.size()) throw DataError("checkpoint tensor '" + p.name + "' has the wrong size");
    p.value = std::move(v);
  }
  net.running_mean() = j.at("running_mean").template get<std::vector<T>>();
  net.running_var() = j.at("running_var").template get<std::vector<T>>();
  return net;
}

}  // namespace landval::nn
