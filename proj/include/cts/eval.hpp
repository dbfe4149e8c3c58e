#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cts/data.hpp"
#include "cts/policy.hpp"
#include "cts/segmenter.hpp"

namespace cts {

/// Pixel counts, rows = ground truth, columns = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  void add(const SegMask& pred, const SegMask& gt);
  void merge(const ConfusionMatrix& other);

  int num_classes() const { return classes_; }
  std::uint64_t at(int gt, int pred) const { return counts_[gt * classes_ + pred]; }
  std::uint64_t total() const;

  /// TP / (TP + FP + FN); NaN for a class absent from both pred and gt.
  double iou(int cls) const;
  /// Mean IoU over classes that occur in the prediction or the ground truth.
  double miou() const;

 private:
  int classes_;
  std::vector<std::uint64_t> counts_;
};

/// Dataset-level mIoU from one confusion matrix accumulated over all pairs.
double miou(std::span<const SegMask> preds, std::span<const SegMask> gts, int num_classes);

/// FLOP accounting for one configuration. Counts use 2 FLOPs per
/// multiply-accumulate; softmax, layer norm, gelu and resampling are ignored.
struct CostReport {
  std::size_t N = 0;
  std::size_t S = 0;
  std::size_t M = 0;
  double token_reduction = 0.0;  // 3S / N
  std::uint64_t attention_flops = 0;
  std::uint64_t mlp_flops = 0;
  std::uint64_t projection_flops = 0;
  std::uint64_t decoder_flops = 0;
  std::uint64_t policy_flops = 0;
  double images_per_sec = 0.0;  // 0 when not measured
  double miou = -1.0;           // negative when not measured

  std::uint64_t total_flops() const {
    return attention_flops + mlp_flops + projection_flops + decoder_flops + policy_flops;
  }
};

inline constexpr const char* kFlopConvention =
    "flops = 2 per multiply-accumulate; softmax/layernorm/gelu/resampling excluded";

// Per backbone, M tokens: 2 * depth * (4 M E^2 + 2 M^2 E).
std::uint64_t attention_flops(const ViTConfig& config, std::size_t M);
// The M^2 part of attention_flops: 2 * depth * 2 M^2 E.
std::uint64_t attention_quadratic_flops(const ViTConfig& config, std::size_t M);
// 2 * depth * 2 M E (ratio E).
std::uint64_t mlp_flops(const ViTConfig& config, std::size_t M);

/// Costs of running the segmenter with S shared superpatches. The policy
/// network is counted only when `policy` is given.
CostReport flop_model(const SegConfig& config, std::size_t S, const PolicyNetConfig* policy);

struct BenchProtocol {
  std::size_t warmup = 50;
  std::size_t iters = 100;
  std::size_t batch = 1;
};

struct BenchResult {
  double images_per_sec = 0.0;
  double seconds = 0.0;  // measured iterations only
  BenchProtocol protocol;
  std::string hardware;
};

std::string hardware_string();

/// Calls run_batch(i) for `warmup` untimed then `iters` timed iterations on the
/// calling thread; returns iters * batch / elapsed.
BenchResult benchmark(const std::function<void(std::size_t)>& run_batch,
                      const BenchProtocol& protocol = {});

/// Sets every cell of each shared superpatch to its modal class (ties -> lowest
/// id). Works at any resolution whose size is a multiple of the policy grid.
SegMask majority_vote(const SegMask& pred, const SharingPolicy& policy);

// Number of cells majority_vote would change.
std::size_t majority_vote_changes(const SegMask& pred, const SharingPolicy& policy);

struct DynamicReport {
  double tau = 0.0;
  std::map<std::size_t, std::size_t> images_per_setting;
  std::map<std::size_t, double> model_miou;  // individual model at fixed S, if computed
  std::vector<std::size_t> chosen;            // per image
  double combined_miou = 0.0;
  double average_token_reduction = 0.0;
};

/// Routes each image to the model with the largest S below the number of
/// scores above tau, shares its S top-scoring superpatches, and accumulates
/// one confusion matrix over all routed predictions.
DynamicReport dynamic_eval(const std::map<std::size_t, ParamStore>& models,
                           const SegConfig& config, const std::vector<PolicyScores>& scores,
                           double tau, const Dataset& dataset, std::size_t threads = 1);

DynamicReport dynamic_eval(const std::map<std::size_t, ParamStore>& models,
                           const SegConfig& config, const ParamStore& policy_params,
                           const PolicyNetConfig& policy_config, double tau,
                           const Dataset& dataset, std::size_t threads = 1);

}  // namespace cts
