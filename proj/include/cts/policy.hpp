#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "cts/data.hpp"
#include "cts/image.hpp"
#include "cts/params.hpp"
#include "cts/rng.hpp"

namespace cts {

/// Per-superpatch truth: true when the 2P x 2P square holds exactly one class.
struct PolicyGroundTruth {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> single;

  bool at(std::size_t r, std::size_t c) const { return single[r * cols + c] != 0; }
  std::size_t count_true() const;
};

/// Per-superpatch probability of being single-class.
struct PolicyScores {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Which superpatches share one token. `ordered_shared` lists (row, col) in
/// selection order; `share_grid` is its dense form.
struct SharingPolicy {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> share_grid;
  std::vector<std::pair<std::size_t, std::size_t>> ordered_shared;

  std::size_t S() const { return ordered_shared.size(); }
  std::size_t total() const { return rows * cols; }
  bool shared(std::size_t r, std::size_t c) const { return share_grid[r * cols + c] != 0; }

  static SharingPolicy none(std::size_t rows, std::size_t cols);
  // Shares the given superpatches (flat raster indices), in the given order.
  static SharingPolicy from_indices(std::size_t rows, std::size_t cols,
                                    std::span<const std::size_t> flat);
};

PolicyGroundTruth gt_policy(const SegMask& mask, std::size_t patch_size);
PolicyScores gt_as_scores(const PolicyGroundTruth& gt);

/// The S highest scores; ties go to the earlier superpatch in raster order.
SharingPolicy select_top_s(const PolicyScores& scores, std::size_t S);

/// S distinct superpatches drawn uniformly at random.
SharingPolicy random_policy(std::size_t rows, std::size_t cols, std::size_t S, Rng& rng);

/// Fraction of selected superpatches that are truly single-class.
double precision(const SharingPolicy& policy, const PolicyGroundTruth& gt);

/// With S* = #(scores > tau), the largest setting strictly below S*, or 0.
std::size_t dynamic_select(const PolicyScores& scores, double tau,
                           std::span<const std::size_t> available_settings);

inline constexpr double kDefaultDynamicTau = 0.4;

struct PolicyNetConfig {
  std::vector<std::size_t> widths{16, 32, 64, 64};
  std::size_t patch_size = 4;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t iterations = 300;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;

  // Leading stages use stride 2 until the feature map is 1/(2P) of the input.
  std::size_t stride_two_stages() const;
  void validate() const;
};

/// Conv stages plus a zero-initialized 1x1 head with two outputs
/// (0 = single class, 1 = multiple classes).
ParamStore init_policy_params(const PolicyNetConfig& config, std::uint64_t seed);

// [2, H/2P, W/2P] logits.
Tensor policy_logits(const Image& image, const ParamStore& params, const PolicyNetConfig& config);
PolicyScores policy_forward(const Image& image, const ParamStore& params,
                            const PolicyNetConfig& config);

// Two-class cross-entropy of one image against its ground truth.
Tensor policy_loss(const Image& image, const PolicyGroundTruth& gt, const ParamStore& params,
                   const PolicyNetConfig& config);

struct PolicyTrainLog {
  std::vector<double> losses;  // mean batch loss per iteration
};

ParamStore train_policy(const Dataset& dataset, const PolicyNetConfig& config,
                        PolicyTrainLog* log = nullptr);

// Multiply-accumulate count of one policy forward pass.
std::size_t policy_macs(const PolicyNetConfig& config, std::size_t height, std::size_t width);

}  // namespace cts
