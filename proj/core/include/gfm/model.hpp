#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gfm/batch.hpp"
#include "gfm/graph.hpp"
#include "gfm/ops.hpp"
#include "gfm/tensor.hpp"

namespace gfm {

inline constexpr std::size_t kHidden = 48;
inline constexpr std::size_t kHeads = 4;
inline constexpr std::size_t kConvChannels = 4;
inline constexpr std::size_t kMaxKernel = 8;
inline constexpr std::size_t kMaxStride = 3;

enum class AttentionMode { kTransformer, kPerformer };

std::string attention_mode_name(AttentionMode mode);
AttentionMode parse_attention_mode(const std::string& text);

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct FusionConfig {
  AttentionMode attention_mode = AttentionMode::kTransformer;
  std::size_t performer_features = 24;
  bool redraw_features = false;  // fresh performer features every epoch
  bool use_fusion = true;
  bool use_graph_sim = true;
  bool use_node_sim = true;

  void validate() const;
  friend bool operator==(const FusionConfig&, const FusionConfig&) = default;
};

struct NamedTensor {
  std::string name;
  Tensor value;
  bool trainable;
};

// Building blocks. Row blocks follow the PairBatch layout: pair b owns rows
// [b*L, (b+1)*L) and its real nodes come first.
namespace model {

/// relu(concat(h, mean of neighbours) * W), no bias.
Tensor sage_layer(const Tensor& h, const ops::Adjacency& adj, const Tensor& weight);

/// Three mean-aggregation layers; layers 2 and 3 add their input back.
Tensor sage_encode(const Tensor& x, const ops::Adjacency& adj, std::span<const Tensor> weights);

struct GinWeights {
  Tensor eps;  // 1 x 1
  Tensor w1, b1, w2, b2;
};

/// MLP((1 + eps) h_v + sum of neighbour rows) with one hidden relu layer.
Tensor gin_transform(const Tensor& h, const ops::Adjacency& adj, const GinWeights& w);

struct AttentionWeights {
  Tensor q, k, v, o;  // kHidden x kHidden each
};

/// Multi-head softmax attention over the rows of x; keys with mask 0 get no weight.
Tensor full_attention(const Tensor& x, std::span<const std::uint8_t> mask, const AttentionWeights& w);

/// Positive random-feature attention. `features` is r x kHidden; head h uses
/// the column block [h*d, (h+1)*d), scaled by sqrt(d), as its r feature vectors.
Tensor performer_attention(const Tensor& x, std::span<const std::uint8_t> mask, const AttentionWeights& w,
                           const Tensor& features);

/// r x kHidden feature directions. Per head: ceil(r/2) unit vectors drawn in
/// orthogonal groups of d, followed by their negations.
Tensor draw_performer_features(std::size_t r, std::uint64_t seed);

/// h = sum_n sigmoid(x_n . tanh(c W)) x_n with c the mean of the real rows.
/// x holds B blocks of L rows; padded rows must be zero. Returns B x kHidden.
Tensor readout(const Tensor& x, std::size_t L, std::span<const std::size_t> counts, const Tensor& weight);

/// 48 scores per pair: for kernel length M = 1..8 and stride S = 1..3 the
/// mean channel distance, then the mean channel tanh dot product.
/// `kernels` lists the 24 H x M banks in (M, S) order.
Tensor graph_level_similarity(const Tensor& hi, const Tensor& hj, std::span<const Tensor> kernels);

/// out[b][f] = sum_n tanh(xi[b*L + n][f]) * tanh(xj[b*L + n][f]) computed as a
/// grouped convolution with B*f groups. Returns B x f.
Tensor node_similarity_kernel(const Tensor& xi, const Tensor& xj, std::size_t B, std::size_t L);

/// Gather index that lays out each block's real rows in canonical order
/// (ascending row sum, then lexicographic) followed by padding, producing
/// blocks of L_out rows.
std::vector<std::ptrdiff_t> canonical_order(const Tensor& x, std::size_t L_in, std::span<const std::size_t> counts,
                                            std::size_t L_out);

}  // namespace model

/// The graph fusion model: node encoding, fusion, two similarity heads and the
/// output MLP. Tensor names are stable and double as checkpoint keys.
class GfmModel {
 public:
  GfmModel(std::size_t f0, FusionConfig config, std::uint64_t seed);

  std::size_t feature_dim() const { return f0_; }
  std::uint64_t seed() const { return seed_; }
  const FusionConfig& config() const { return config_; }

  /// B x 1 scores in (0, 1). Train mode normalises with batch statistics and
  /// updates the running ones.
  Tensor forward(const PairBatch& batch, ops::Mode mode);
  /// Eval-mode forward; safe to call concurrently.
  Tensor forward(const PairBatch& batch) const;

  /// The fused node sequences (left, right) in batch layout.
  std::pair<Tensor, Tensor> fuse(const PairBatch& batch, ops::Mode mode);
  /// The 96-wide similarity vector Z for each pair (eval mode).
  Tensor similarity_vector(const PairBatch& batch) const;

  std::vector<double> predict(const PairBatch& batch) const;
  double predict(const Graph& gi, const Graph& gj, const std::vector<std::string>& alphabet) const;

  const std::vector<NamedTensor>& tensors() const { return tensors_; }
  const Tensor& tensor(const std::string& name) const;
  std::vector<Tensor> trainable_parameters() const;

  std::map<std::string, ops::BatchNormStats>& norm_stats() { return stats_; }
  const std::map<std::string, ops::BatchNormStats>& norm_stats() const { return stats_; }

  void redraw_performer_features(std::uint64_t seed);

  /// Every value, including running statistics, in a fixed order.
  std::vector<std::pair<std::string, Tensor>> state() const;
  void load_state(const std::vector<std::pair<std::string, Tensor>>& state);

 private:
  struct Pass;

  void add(const std::string& name, Shape shape, bool trainable);
  std::pair<Tensor, Tensor> fuse_impl(const PairBatch& batch, ops::Mode mode,
                                      std::map<std::string, ops::BatchNormStats>* stats) const;
  Tensor run(const PairBatch& batch, ops::Mode mode, std::map<std::string, ops::BatchNormStats>* stats,
             Tensor* z_out) const;

  std::size_t f0_;
  FusionConfig config_;
  std::uint64_t seed_;
  std::vector<NamedTensor> tensors_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, ops::BatchNormStats> stats_;
};

/// Names of the batch-norm sites owned by the model.
inline constexpr std::array<const char*, 4> kNormSites{"bn.gin", "bn.attn", "bn.ffn", "bn.node"};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// JSON manifest at `path` plus little-endian float64 blob at `path` + ".bin".
void save_checkpoint(const GfmModel& model, const std::filesystem::path& path);
GfmModel load_checkpoint(const std::filesystem::path& path);

std::string fusion_config_json(const FusionConfig& config);

}  // namespace gfm
