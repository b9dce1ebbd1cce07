#pragma once

// Triple query generation: appearance queries from Top-K hierarchical
// text-to-image attention, intra-frame queries from relational phrases plus
// sentence context, inter-frame queries from attention pooling over point
// trajectories. Also first-frame seed-point selection.

#include <array>
#include <optional>
#include <vector>

#include "tqf/query/feature_pyramid.hpp"

namespace tqf::query {

struct PixelPoint {
  std::size_t x = 0;
  std::size_t y = 0;
  bool operator==(const PixelPoint&) const = default;
};

std::size_t suppression_radius(std::size_t h);  // max(2, h/8)

/// Greedy pick of `n` pixels by max cosine similarity to any static text row.
/// A pick suppresses every pixel within Chebyshev distance < radius; ties go to
/// the smaller row-major index. If suppression leaves too few pixels, the
/// remaining picks come from the suppressed ones in score order.
template <typename T>
std::vector<PixelPoint> select_seed_points(const Tensor<T>& frame_feats, LevelDims dims, const Tensor<T>& static_rows,
                                           std::size_t n, std::size_t radius);

struct TopKResult {
  std::vector<std::size_t> indices;     // chosen positions, best first
  std::vector<std::size_t> candidates;  // row-major order
  std::vector<double> relevance;        // aligned with candidates
};

/// The 2x2 children (at `fine`) of coarse positions (at `coarse`), sorted and
/// deduplicated, clipped to the fine grid.
std::vector<std::size_t> child_positions(const std::vector<std::size_t>& coarse_idx, LevelDims coarse, LevelDims fine);

/// Relevance of a position is the attention weight it receives, summed over
/// the alignment rows, with attention normalized over the candidate set.
/// Candidates are every position, or the children of `prev_idx` (given at
/// `prev_dims`). Returns min(k, |candidates|) positions, highest relevance
/// first, ties to the smaller index.
template <typename T>
TopKResult topk_positions(const Tensor<T>& alignment, const Tensor<T>& level_feats, LevelDims dims, std::size_t k,
                          const std::vector<std::size_t>* prev_idx = nullptr, LevelDims prev_dims = {},
                          bool scale_logits = true);

template <typename T>
struct TrajectorySet {
  std::size_t tracks = 0;
  std::size_t frames = 0;
  std::vector<double> coords;         // [tracks x frames x 2], pixel (x, y)
  Tensor<T> embeddings;               // [tracks*frames x C]
  std::vector<std::uint8_t> valid;    // [tracks x frames]

  void validate(std::size_t height, std::size_t width, std::size_t channels) const;
};

/// Per coordinate 8 (sin, cos) pairs with periods geometric from 2 to
/// 2*max(h, w); x block then y block, 32 values per point.
std::vector<double> trajectory_code(double x, double y, std::size_t h, std::size_t w);

enum class PoolScope { kGlobal, kPerTrack };

struct QueryFormerOptions {
  std::size_t channels = 32;    // C
  std::size_t text_width = 64;  // D
  std::size_t n_app = 16;
  std::size_t n_intra = 8;
  std::size_t n_inter = 8;
  std::size_t topk = 8;
  bool scale_logits = true;
  PoolScope pool_scope = PoolScope::kGlobal;
};

struct AppearanceTrace {
  std::array<std::vector<std::size_t>, kPyramidLevels> selected;  // Top-K picks per level (0-based)
  std::array<std::size_t, kPyramidLevels> attended_keys{};
};

template <typename T>
class QueryFormer {
 public:
  QueryFormer() = default;
  QueryFormer(ParamStore<T>& store, const std::string& name, const QueryFormerOptions& opts);

  // The single learned D -> C map at the text/visual boundary.
  Tensor<T> project_text(const Tensor<T>& rows) const { return text_proj_(rows); }

  /// static_rows are the projected static phrase rows [W_s x C].
  Tensor<T> appearance(const Tensor<T>& static_rows, const FeaturePyramid<T>& pyramid,
                       AppearanceTrace* trace = nullptr) const;

  /// relational_rows are projected [W_r x C]; sentence is the raw [W x D] f_l.
  Tensor<T> intra(const Tensor<T>& relational_rows, const Tensor<T>& sentence) const;

  /// temporal_rows are projected [W_e x C]; height/width give the frame
  /// size of the trajectory coordinates. `pool_weights` receives the
  /// [N_E x tracks*frames] pooling weights.
  Tensor<T> inter(const TrajectorySet<T>& traj, const Tensor<T>& temporal_rows, std::size_t height,
                  std::size_t width, Tensor<T>* pool_weights = nullptr) const;

  const QueryFormerOptions& options() const { return opts_; }

 private:
  QueryFormerOptions opts_;
  nn::Linear<T> text_proj_;

  std::array<nn::CrossAttention<T>, kPyramidLevels> level_attn_;
  std::array<nn::Mlp<T>, kPyramidLevels> level_mlp_;
  Tensor<T> app_init_;
  nn::CrossAttention<T> app_attn_;
  nn::Mlp<T> app_mlp_;

  Tensor<T> intra_init_;
  nn::CrossAttention<T> intra_attn_;
  nn::Mlp<T> intra_mlp_;

  Tensor<T> inter_init_;
  nn::CrossAttention<T> inter_attn_;
  nn::Mlp<T> inter_mlp_;
  Tensor<T> inter_embed_;
  nn::Mlp<T> query_pos_mlp_;
  nn::Linear<T> coord_proj_;
  nn::Mlp<T> traj_pos_mlp_;
};

}  // namespace tqf::query
