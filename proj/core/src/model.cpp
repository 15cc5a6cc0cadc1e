#include "gfm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "gfm/synthetic.hpp"

namespace gfm {

using ops::Mode;

std::string attention_mode_name(AttentionMode mode) {
  return mode == AttentionMode::kTransformer ? "transformer" : "performer";
}

AttentionMode parse_attention_mode(const std::string& text) {
  if (text == "transformer") return AttentionMode::kTransformer;
  if (text == "performer") return AttentionMode::kPerformer;
  throw ConfigError("unknown attention mode '" + text + "' (expected transformer or performer)");
}

void FusionConfig::validate() const {
  if (!use_graph_sim && !use_node_sim) {
    throw ConfigError("at least one of use_graph_sim and use_node_sim must be enabled");
  }
  if (performer_features == 0) throw ConfigError("performer_features must be >= 1");
}

namespace model {

Tensor sage_layer(const Tensor& h, const ops::Adjacency& adj, const Tensor& weight) {
  const Tensor nb = ops::aggregate_neighbors(h, adj, ops::Aggregation::kMean);
  const std::array<Tensor, 2> parts{h, nb};
  return ops::relu(ops::matmul(ops::concat_cols(parts), weight));
}

Tensor sage_encode(const Tensor& x, const ops::Adjacency& adj, std::span<const Tensor> weights) {
  if (weights.empty()) throw std::invalid_argument("sage_encode: no layers");
  Tensor h = sage_layer(x, adj, weights[0]);
  for (std::size_t k = 1; k < weights.size(); ++k) h = ops::add(sage_layer(h, adj, weights[k]), h);
  return h;
}

Tensor gin_transform(const Tensor& h, const ops::Adjacency& adj, const GinWeights& w) {
  const Tensor nb = ops::aggregate_neighbors(h, adj, ops::Aggregation::kSum);
  const Tensor in = ops::add(ops::add(h, ops::scale_by(h, w.eps)), nb);
  const Tensor hidden = ops::relu(ops::add(ops::matmul(in, w.w1), w.b1));
  return ops::add(ops::matmul(hidden, w.w2), w.b2);
}

namespace {

constexpr std::size_t kHeadDim = kHidden / kHeads;

void check_tokens(const Tensor& x, std::span<const std::uint8_t> mask, const char* what) {
  if (x.cols() != kHidden) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(kHidden) + " columns, got " +
                         to_string(x.shape()));
  }
  if (!mask.empty() && mask.size() != x.rows()) {
    throw DimensionError(std::string(what) + ": mask length " + std::to_string(mask.size()) + " for " +
                         std::to_string(x.rows()) + " tokens");
  }
  if (!mask.empty() && std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; })) {
    throw std::invalid_argument(std::string(what) + ": every token is masked");
  }
}

Tensor mask_column(std::span<const std::uint8_t> mask, std::size_t rows) {
  std::vector<double> col(rows, 1.0);
  for (std::size_t r = 0; r < mask.size(); ++r) col[r] = mask[r] ? 1.0 : 0.0;
  return Tensor({rows, 1}, std::move(col));
}

// exp(x W^T - |x|^2 / 2) / sqrt(r) minus a constant that cancels in the
// normalised ratio: the row maximum for queries, the global maximum for keys.
Tensor positive_features(const Tensor& x, const Tensor& omega, bool per_row) {
  const std::size_t r = omega.rows();
  const Tensor proj = ops::matmul(x, ops::transpose(omega));
  const Tensor half_sq = ops::scale(ops::row_sum(ops::mul(x, x)), -0.5);
  const Tensor logits = ops::add_col(proj, half_sq);
  const auto lv = logits.data();
  const std::size_t rows = logits.rows();
  std::vector<double> shift(rows, 0.0);
  double global = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rows; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < r; ++c) m = std::max(m, lv[i * r + c]);
    shift[i] = -m;
    global = std::max(global, m);
  }
  if (!per_row) std::fill(shift.begin(), shift.end(), -global);
  const Tensor shifted = ops::add_col(logits, Tensor({rows, 1}, std::move(shift)));
  return ops::scale(ops::exp(shifted), 1.0 / std::sqrt(static_cast<double>(r)));
}

}  // namespace

Tensor full_attention(const Tensor& x, std::span<const std::uint8_t> mask, const AttentionWeights& w) {
  check_tokens(x, mask, "full_attention");
  const Tensor q = ops::matmul(x, w.q), k = ops::matmul(x, w.k), v = ops::matmul(x, w.v);
  std::vector<Tensor> heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(kHeadDim));
  for (std::size_t h = 0; h < kHeads; ++h) {
    const Tensor qh = ops::slice_cols(q, h * kHeadDim, kHeadDim);
    const Tensor kh = ops::slice_cols(k, h * kHeadDim, kHeadDim);
    const Tensor vh = ops::slice_cols(v, h * kHeadDim, kHeadDim);
    const Tensor weights = ops::softmax_rows(ops::matmul(qh, ops::transpose(kh)), scale, mask);
    heads.push_back(ops::matmul(weights, vh));
  }
  return ops::matmul(ops::concat_cols(heads), w.o);
}

Tensor performer_attention(const Tensor& x, std::span<const std::uint8_t> mask, const AttentionWeights& w,
                           const Tensor& features) {
  check_tokens(x, mask, "performer_attention");
  if (features.cols() != kHidden) {
    throw DimensionError("performer_attention: features must have " + std::to_string(kHidden) + " columns, got " +
                         to_string(features.shape()));
  }
  const std::size_t T = x.rows(), r = features.rows();
  const double qk_scale = std::pow(static_cast<double>(kHeadDim), -0.25);
  const Tensor q = ops::scale(ops::matmul(x, w.q), qk_scale);
  const Tensor k = ops::scale(ops::matmul(x, w.k), qk_scale);
  const Tensor v = ops::matmul(x, w.v);
  const Tensor keep = mask_column(mask, T);
  const Tensor ones = Tensor::full({T, 1}, 1.0);
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < kHeads; ++h) {
    const Tensor omega = ops::scale(ops::slice_cols(features, h * kHeadDim, kHeadDim), std::sqrt(static_cast<double>(kHeadDim)));
    const Tensor qf = positive_features(ops::slice_cols(q, h * kHeadDim, kHeadDim), omega, true);
    const Tensor kf = ops::mul_col(positive_features(ops::slice_cols(k, h * kHeadDim, kHeadDim), omega, false), keep);
    const Tensor kt = ops::transpose(kf);
    const Tensor kv = ops::matmul(kt, ops::slice_cols(v, h * kHeadDim, kHeadDim));  // r x d
    const Tensor num = ops::matmul(qf, kv);
    const Tensor den = ops::matmul(qf, ops::matmul(kt, ones));  // T x 1
    for (double d : den.data()) {
      if (!(d >= 1e-12)) {
        throw std::runtime_error("performer_attention: normaliser " + std::to_string(d) +
                                 " below 1e-12 (numerically degenerate, try more features than " +
                                 std::to_string(r) + ")");
      }
    }
    heads.push_back(ops::div_col(num, den));
  }
  return ops::matmul(ops::concat_cols(heads), w.o);
}

Tensor draw_performer_features(std::size_t r, std::uint64_t seed) {
  if (r == 0) throw std::invalid_argument("draw_performer_features: r must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t d = kHeadDim, base = (r + 1) / 2;
  std::vector<double> out(r * kHidden, 0.0);
  for (std::size_t h = 0; h < kHeads; ++h) {
    std::vector<std::vector<double>> dirs;
    while (dirs.size() < base) {
      // Gram-Schmidt on a d x d Gaussian block: up to d orthonormal directions.
      std::vector<std::vector<double>> block(d, std::vector<double>(d));
      for (auto& row : block)
        for (auto& e : row) e = normal(rng);
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
          double dot = 0.0;
          for (std::size_t c = 0; c < d; ++c) dot += block[i][c] * block[j][c];
          for (std::size_t c = 0; c < d; ++c) block[i][c] -= dot * block[j][c];
        }
        double norm = 0.0;
        for (double e : block[i]) norm += e * e;
        norm = std::sqrt(norm);
        for (double& e : block[i]) e /= norm;
      }
      for (std::size_t i = 0; i < d && dirs.size() < base; ++i) dirs.push_back(block[i]);
    }
    // Antithetic completion: the second half negates the first.
    for (std::size_t i = 0; i < r; ++i) {
      const double sign = i < base ? 1.0 : -1.0;
      const auto& dir = dirs[i < base ? i : i - base];
      for (std::size_t c = 0; c < d; ++c) out[i * kHidden + h * d + c] = sign * dir[c];
    }
  }
  return Tensor({r, kHidden}, std::move(out));
}

Tensor readout(const Tensor& x, std::size_t L, std::span<const std::size_t> counts, const Tensor& weight) {
  const std::size_t B = counts.size();
  if (x.rows() != B * L) {
    throw DimensionError("readout: " + std::to_string(x.rows()) + " rows for " + std::to_string(B) +
                         " blocks of " + std::to_string(L));
  }
  std::vector<std::size_t> offsets(B + 1);
  std::vector<double> inv(B), inv_rows(B * L);
  for (std::size_t b = 0; b < B; ++b) {
    if (counts[b] == 0 || counts[b] > L) throw std::invalid_argument("readout: block needs 1..L valid rows");
    offsets[b + 1] = (b + 1) * L;
    inv[b] = 1.0 / static_cast<double>(counts[b]);
  }
  const Tensor mean = ops::mul_col(ops::segment_sum(x, offsets), Tensor({B, 1}, std::move(inv)));  // B x f
  const Tensor ctx = ops::tanh(ops::matmul(mean, weight));
  std::vector<std::ptrdiff_t> owner(B * L);
  for (std::size_t r = 0; r < B * L; ++r) owner[r] = static_cast<std::ptrdiff_t>(r / L);
  const Tensor att = ops::sigmoid(ops::row_sum(ops::mul(x, ops::gather_rows(ctx, owner))));  // (B*L) x 1
  return ops::segment_sum(ops::mul_col(x, att), offsets);
}

Tensor graph_level_similarity(const Tensor& hi, const Tensor& hj, std::span<const Tensor> kernels) {
  if (kernels.size() != kMaxKernel * kMaxStride) {
    throw std::invalid_argument("graph_level_similarity: expected " + std::to_string(kMaxKernel * kMaxStride) +
                                " kernel banks, got " + std::to_string(kernels.size()));
  }
  if (hi.shape() != hj.shape()) {
    throw DimensionError("graph_level_similarity: " + to_string(hi.shape()) + " vs " + to_string(hj.shape()));
  }
  const std::size_t B = hi.rows();
  std::vector<std::size_t> groups(B + 1);
  for (std::size_t b = 0; b <= B; ++b) groups[b] = b * kConvChannels;
  std::vector<Tensor> columns;
  std::size_t bank = 0;
  for (std::size_t m = 1; m <= kMaxKernel; ++m) {
    for (std::size_t s = 1; s <= kMaxStride; ++s, ++bank) {
      const Tensor& w = kernels[bank];
      if (w.rows() != kConvChannels || w.cols() != m) {
        throw DimensionError("graph_level_similarity: bank " + std::to_string(bank) + " has shape " +
                             to_string(w.shape()));
      }
      const Tensor ci = ops::conv1d(hi, w, s), cj = ops::conv1d(hj, w, s);  // (B*H) x l
      columns.push_back(ops::segment_mean(ops::row_norm(ops::sub(ci, cj)), groups));
      columns.push_back(ops::segment_mean(ops::row_sum(ops::mul(ops::tanh(ci), ops::tanh(cj))), groups));
    }
  }
  return ops::concat_cols(columns);
}

Tensor node_similarity_kernel(const Tensor& xi, const Tensor& xj, std::size_t B, std::size_t L) {
  if (xi.shape() != xj.shape() || xi.rows() != B * L) {
    throw DimensionError("node_similarity_kernel: " + to_string(xi.shape()) + " and " + to_string(xj.shape()) +
                         " for " + std::to_string(B) + " blocks of " + std::to_string(L));
  }
  const std::size_t f = xi.cols();
  // (B*L) x f -> (B*f) x L: one group per (pair, feature).
  auto regroup = [&](const Tensor& x) {
    std::vector<Tensor> blocks;
    for (std::size_t b = 0; b < B; ++b) blocks.push_back(ops::transpose(ops::slice_rows(x, b * L, L)));
    return ops::concat_rows(blocks);
  };
  const Tensor signal = ops::tanh(regroup(xi));
  const Tensor kernels = ops::tanh(regroup(xj));
  return ops::reshape(ops::grouped_conv1d(signal, kernels), {B, f});
}

std::vector<std::ptrdiff_t> canonical_order(const Tensor& x, std::size_t L_in, std::span<const std::size_t> counts,
                                            std::size_t L_out) {
  const std::size_t f = x.cols();
  const auto xv = x.data();
  std::vector<std::ptrdiff_t> index(counts.size() * L_out, -1);
  for (std::size_t b = 0; b < counts.size(); ++b) {
    if (counts[b] > L_in || counts[b] > L_out) throw std::invalid_argument("canonical_order: block overflow");
    std::vector<std::size_t> rows(counts[b]);
    std::iota(rows.begin(), rows.end(), b * L_in);
    std::vector<double> sums(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto row = xv.subspan(rows[k] * f, f);
      sums[k] = std::accumulate(row.begin(), row.end(), 0.0);
    }
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) {
      if (sums[a] != sums[c]) return sums[a] < sums[c];
      const auto ra = xv.subspan(rows[a] * f, f), rc = xv.subspan(rows[c] * f, f);
      return std::lexicographical_compare(ra.begin(), ra.end(), rc.begin(), rc.end());
    });
    for (std::size_t k = 0; k < order.size(); ++k)
      index[b * L_out + k] = static_cast<std::ptrdiff_t>(rows[order[k]]);
  }
  return index;
}

}  // namespace model

namespace {

std::uint64_t name_hash(const std::string& name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string conv_name(std::size_t m, std::size_t s) {
  return "conv.m" + std::to_string(m) + ".s" + std::to_string(s) + ".weight";
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void GfmModel::add(const std::string& name, Shape shape, bool trainable) {
  std::size_t count = 1;
  for (auto d : shape) count *= d;
  std::vector<double> data(count, 0.0);
  std::mt19937_64 rng(derive_seed(seed_, name_hash(name)));
  if (ends_with(name, ".gamma")) {
    std::fill(data.begin(), data.end(), 1.0);
  } else if (ends_with(name, ".weight")) {
    double fan_in = static_cast<double>(shape[0]), fan_out = static_cast<double>(shape[1]);
    if (name.rfind("conv.", 0) == 0) {
      fan_in = static_cast<double>(shape[1]);
      fan_out = static_cast<double>(shape[0] * shape[1]);
    }
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : data) v = dist(rng);
  }
  index_[name] = tensors_.size();
  tensors_.push_back({name, Tensor(std::move(shape), std::move(data), trainable), trainable});
}

GfmModel::GfmModel(std::size_t f0, FusionConfig config, std::uint64_t seed)
    : f0_(f0), config_(config), seed_(seed) {
  if (f0 == 0) throw ConfigError("feature dimension must be >= 1");
  config_.validate();
  const std::size_t d = kHidden;
  add("sage.0.weight", {2 * f0, d}, true);
  add("sage.1.weight", {2 * d, d}, true);
  add("sage.2.weight", {2 * d, d}, true);
  add("gin.eps", {1, 1}, true);
  add("gin.mlp.0.weight", {d, d}, true);
  add("gin.mlp.0.bias", {1, d}, true);
  add("gin.mlp.1.weight", {d, d}, true);
  add("gin.mlp.1.bias", {1, d}, true);
  add("attn.q.weight", {d, d}, true);
  add("attn.k.weight", {d, d}, true);
  add("attn.v.weight", {d, d}, true);
  add("attn.o.weight", {d, d}, true);
  add("ffn.weight", {d, d}, true);
  add("ffn.bias", {1, d}, true);
  for (const char* site : kNormSites) {
    add(std::string(site) + ".gamma", {1, d}, true);
    add(std::string(site) + ".beta", {1, d}, true);
    stats_.emplace(site, ops::BatchNormStats(d));
  }
  add("readout.weight", {d, d}, true);
  for (std::size_t m = 1; m <= kMaxKernel; ++m)
    for (std::size_t s = 1; s <= kMaxStride; ++s) add(conv_name(m, s), {kConvChannels, m}, true);
  add("mlp.0.weight", {2 * d, 32}, true);
  add("mlp.0.bias", {1, 32}, true);
  add("mlp.1.weight", {32, 16}, true);
  add("mlp.1.bias", {1, 16}, true);
  add("mlp.2.weight", {16, 1}, true);
  add("mlp.2.bias", {1, 1}, true);
  index_["performer.features"] = tensors_.size();
  tensors_.push_back({"performer.features",
                      model::draw_performer_features(config_.performer_features,
                                                     derive_seed(seed_, name_hash("performer.features"))),
                      false});
}

const Tensor& GfmModel::tensor(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("model has no tensor named '" + name + "'");
  return tensors_[it->second].value;
}

std::vector<Tensor> GfmModel::trainable_parameters() const {
  std::vector<Tensor> out;
  for (const auto& t : tensors_)
    if (t.trainable) out.push_back(t.value);
  return out;
}

void GfmModel::redraw_performer_features(std::uint64_t seed) {
  const Tensor fresh = model::draw_performer_features(config_.performer_features, seed);
  auto dst = tensors_[index_.at("performer.features")].value.mutable_data();
  std::copy(fresh.data().begin(), fresh.data().end(), dst.begin());
}

std::vector<std::pair<std::string, Tensor>> GfmModel::state() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& t : tensors_) out.emplace_back(t.name, t.value);
  for (const auto& [site, s] : stats_) {
    out.emplace_back(site + ".running_mean", Tensor({1, s.running_mean.size()}, s.running_mean));
    out.emplace_back(site + ".running_var", Tensor({1, s.running_var.size()}, s.running_var));
  }
  return out;
}

void GfmModel::load_state(const std::vector<std::pair<std::string, Tensor>>& state) {
  const auto expected = this->state();
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : state) {
    if (!by_name.emplace(name, &t).second) throw CheckpointError("duplicate tensor '" + name + "'");
    const bool known = std::any_of(expected.begin(), expected.end(), [&](const auto& e) { return e.first == name; });
    if (!known) throw CheckpointError("unknown tensor '" + name + "'");
  }
  for (const auto& [name, t] : expected) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("missing tensor '" + name + "'");
    if (it->second->shape() != t.shape()) {
      throw CheckpointError("tensor '" + name + "' has shape " + to_string(it->second->shape()) + ", expected " +
                            to_string(t.shape()));
    }
  }
  for (auto& t : tensors_) {
    const auto src = by_name.at(t.name)->data();
    std::copy(src.begin(), src.end(), t.value.mutable_data().begin());
  }
  for (auto& [site, s] : stats_) {
    const auto mean = by_name.at(site + ".running_mean")->data();
    const auto var = by_name.at(site + ".running_var")->data();
    s.running_mean.assign(mean.begin(), mean.end());
    s.running_var.assign(var.begin(), var.end());
  }
}

struct GfmModel::Pass {
  const GfmModel& m;
  Mode mode;
  std::map<std::string, ops::BatchNormStats>* stats;

  const Tensor& p(const std::string& name) const { return m.tensor(name); }

  // Shared normalisation over the real rows of both sides.
  std::pair<Tensor, Tensor> norm2(const std::string& site, const Tensor& a, const Tensor& b,
                                  std::span<const std::uint8_t> mask_a, std::span<const std::uint8_t> mask_b) const {
    const std::array<Tensor, 2> parts{a, b};
    const Tensor x = ops::concat_rows(parts);
    std::vector<std::uint8_t> mask(mask_a.begin(), mask_a.end());
    mask.insert(mask.end(), mask_b.begin(), mask_b.end());
    const Tensor& gamma = p(site + ".gamma");
    const Tensor& beta = p(site + ".beta");
    const Tensor y = (mode == Mode::kTrain && stats)
                         ? ops::batch_norm(x, gamma, beta, stats->at(site), Mode::kTrain, mask)
                         : ops::batch_norm_eval(x, gamma, beta, m.stats_.at(site), mask);
    return {ops::slice_rows(y, 0, a.rows()), ops::slice_rows(y, a.rows(), b.rows())};
  }
};

std::pair<Tensor, Tensor> GfmModel::fuse(const PairBatch& batch, Mode mode) {
  return fuse_impl(batch, mode, mode == Mode::kTrain ? &stats_ : nullptr);
}

std::pair<Tensor, Tensor> GfmModel::fuse_impl(const PairBatch& batch, Mode mode,
                                              std::map<std::string, ops::BatchNormStats>* stats) const {
  const std::array<Tensor, 3> sage{tensor("sage.0.weight"), tensor("sage.1.weight"), tensor("sage.2.weight")};
  Pass pass{*this, mode, stats};
  const Tensor hi = model::sage_encode(batch.xi, batch.adj_i, sage);
  const Tensor hj = model::sage_encode(batch.xj, batch.adj_j, sage);
  if (!config_.use_fusion) return {hi, hj};

  const model::GinWeights gin{tensor("gin.eps"), tensor("gin.mlp.0.weight"), tensor("gin.mlp.0.bias"),
                              tensor("gin.mlp.1.weight"), tensor("gin.mlp.1.bias")};
  auto [xi, xj] = pass.norm2("bn.gin", ops::add(model::gin_transform(hi, batch.adj_i, gin), hi),
                             ops::add(model::gin_transform(hj, batch.adj_j, gin), hj), batch.mask_i, batch.mask_j);

  const model::AttentionWeights attn{tensor("attn.q.weight"), tensor("attn.k.weight"), tensor("attn.v.weight"),
                                     tensor("attn.o.weight")};
  const std::size_t B = batch.size, Li = batch.Li, Lj = batch.Lj;
  std::vector<Tensor> out_i, out_j;
  for (std::size_t b = 0; b < B; ++b) {
    const std::array<Tensor, 2> parts{ops::slice_rows(xi, b * Li, Li), ops::slice_rows(xj, b * Lj, Lj)};
    const Tensor tokens = ops::concat_rows(parts);
    std::vector<std::uint8_t> mask(batch.mask_i.begin() + static_cast<std::ptrdiff_t>(b * Li),
                                   batch.mask_i.begin() + static_cast<std::ptrdiff_t>((b + 1) * Li));
    mask.insert(mask.end(), batch.mask_j.begin() + static_cast<std::ptrdiff_t>(b * Lj),
                batch.mask_j.begin() + static_cast<std::ptrdiff_t>((b + 1) * Lj));
    const Tensor mixed = config_.attention_mode == AttentionMode::kTransformer
                             ? model::full_attention(tokens, mask, attn)
                             : model::performer_attention(tokens, mask, attn, tensor("performer.features"));
    out_i.push_back(ops::slice_rows(mixed, 0, Li));
    out_j.push_back(ops::slice_rows(mixed, Li, Lj));
  }
  auto [ai, aj] = pass.norm2("bn.attn", ops::add(ops::concat_rows(out_i), xi), ops::add(ops::concat_rows(out_j), xj),
                             batch.mask_i, batch.mask_j);
  const Tensor& w = tensor("ffn.weight");
  const Tensor& bias = tensor("ffn.bias");
  auto ffn = [&](const Tensor& x) { return ops::relu(ops::add(ops::add(ops::matmul(x, w), bias), x)); };
  return pass.norm2("bn.ffn", ffn(ai), ffn(aj), batch.mask_i, batch.mask_j);
}

Tensor GfmModel::run(const PairBatch& batch, Mode mode, std::map<std::string, ops::BatchNormStats>* stats,
                     Tensor* z_out) const {
  const auto [xi, xj] = fuse_impl(batch, mode, stats);
  Pass pass{*this, mode, stats};
  const std::size_t B = batch.size;
  std::vector<Tensor> z;
  if (config_.use_graph_sim) {
    const Tensor& w = tensor("readout.weight");
    const Tensor gi = model::readout(xi, batch.Li, batch.nodes_i, w);
    const Tensor gj = model::readout(xj, batch.Lj, batch.nodes_j, w);
    std::vector<Tensor> kernels;
    for (std::size_t m = 1; m <= kMaxKernel; ++m)
      for (std::size_t s = 1; s <= kMaxStride; ++s) kernels.push_back(tensor(conv_name(m, s)));
    z.push_back(model::graph_level_similarity(gi, gj, kernels));
  } else {
    z.push_back(Tensor::zeros({B, kHidden}));
  }
  if (config_.use_node_sim) {
    const std::size_t L = std::max(batch.Li, batch.Lj);
    const auto idx_i = model::canonical_order(xi, batch.Li, batch.nodes_i, L);
    const auto idx_j = model::canonical_order(xj, batch.Lj, batch.nodes_j, L);
    std::vector<std::uint8_t> mi(B * L, 0), mj(B * L, 0);
    for (std::size_t r = 0; r < B * L; ++r) {
      mi[r] = idx_i[r] >= 0;
      mj[r] = idx_j[r] >= 0;
    }
    auto [ni, nj] = pass.norm2("bn.node", ops::gather_rows(xi, idx_i), ops::gather_rows(xj, idx_j), mi, mj);
    z.push_back(model::node_similarity_kernel(ni, nj, B, L));
  } else {
    z.push_back(Tensor::zeros({B, kHidden}));
  }
  const Tensor zcat = ops::concat_cols(z);
  if (z_out) *z_out = zcat;
  Tensor h = ops::relu(ops::add(ops::matmul(zcat, tensor("mlp.0.weight")), tensor("mlp.0.bias")));
  h = ops::relu(ops::add(ops::matmul(h, tensor("mlp.1.weight")), tensor("mlp.1.bias")));
  return ops::sigmoid(ops::add(ops::matmul(h, tensor("mlp.2.weight")), tensor("mlp.2.bias")));
}

Tensor GfmModel::forward(const PairBatch& batch, Mode mode) {
  return run(batch, mode, mode == Mode::kTrain ? &stats_ : nullptr, nullptr);
}

Tensor GfmModel::forward(const PairBatch& batch) const { return run(batch, Mode::kEval, nullptr, nullptr); }

Tensor GfmModel::similarity_vector(const PairBatch& batch) const {
  Tensor z;
  run(batch, Mode::kEval, nullptr, &z);
  return z;
}

std::vector<double> GfmModel::predict(const PairBatch& batch) const {
  const Tensor out = forward(batch);
  return {out.data().begin(), out.data().end()};
}

double GfmModel::predict(const Graph& gi, const Graph& gj, const std::vector<std::string>& alphabet) const {
  const std::array<GraphPairRef, 1> refs{GraphPairRef{&gi, &gj}};
  return predict(make_batch(refs, alphabet)).front();
}

}  // namespace gfm
