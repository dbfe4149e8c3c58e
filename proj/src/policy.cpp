#include "cts/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cts/errors.hpp"
#include "cts/ops.hpp"

namespace cts {

std::size_t PolicyGroundTruth::count_true() const {
  return static_cast<std::size_t>(std::count(single.begin(), single.end(), 1));
}

SharingPolicy SharingPolicy::none(std::size_t rows, std::size_t cols) {
  SharingPolicy p;
  p.rows = rows;
  p.cols = cols;
  p.share_grid.assign(rows * cols, 0);
  return p;
}

SharingPolicy SharingPolicy::from_indices(std::size_t rows, std::size_t cols,
                                          std::span<const std::size_t> flat) {
  SharingPolicy p = none(rows, cols);
  for (auto idx : flat) {
    if (idx >= rows * cols) throw UsageError("superpatch index out of range");
    if (p.share_grid[idx]) throw UsageError("superpatch listed twice in policy");
    p.share_grid[idx] = 1;
    p.ordered_shared.emplace_back(idx / cols, idx % cols);
  }
  return p;
}

PolicyGroundTruth gt_policy(const SegMask& mask, std::size_t patch_size) {
  const std::size_t sp = 2 * patch_size;
  if (patch_size == 0 || mask.height == 0 || mask.width == 0 || mask.height % sp != 0 ||
      mask.width % sp != 0) {
    throw ConfigError("mask " + std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                      " is not divisible into " + std::to_string(sp) + "px superpatches");
  }
  PolicyGroundTruth gt;
  gt.rows = mask.height / sp;
  gt.cols = mask.width / sp;
  gt.single.assign(gt.rows * gt.cols, 1);
  for (std::size_t y = 0; y < mask.height; ++y) {
    for (std::size_t x = 0; x < mask.width; ++x) {
      const std::size_t r = y / sp, c = x / sp;
      if (mask.at(y, x) != mask.at(r * sp, c * sp)) gt.single[r * gt.cols + c] = 0;
    }
  }
  return gt;
}

PolicyScores gt_as_scores(const PolicyGroundTruth& gt) {
  PolicyScores s{gt.rows, gt.cols, {}};
  s.values.reserve(gt.single.size());
  for (auto v : gt.single) s.values.push_back(v ? 1.0 : 0.0);
  return s;
}

SharingPolicy select_top_s(const PolicyScores& scores, std::size_t S) {
  const std::size_t total = scores.rows * scores.cols;
  if (S > total) {
    throw UsageError("S=" + std::to_string(S) + " exceeds the " + std::to_string(total) +
                     " available superpatches");
  }
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores.values[a] > scores.values[b];
  });
  return SharingPolicy::from_indices(scores.rows, scores.cols,
                                     std::span<const std::size_t>(order.data(), S));
}

SharingPolicy random_policy(std::size_t rows, std::size_t cols, std::size_t S, Rng& rng) {
  const std::size_t total = rows * cols;
  if (S > total) throw UsageError("S exceeds superpatch count");
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < S; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(total - i));
    std::swap(order[i], order[j]);
  }
  return SharingPolicy::from_indices(rows, cols, std::span<const std::size_t>(order.data(), S));
}

double precision(const SharingPolicy& policy, const PolicyGroundTruth& gt) {
  if (policy.rows != gt.rows || policy.cols != gt.cols) {
    throw DimensionError("policy and ground-truth grids differ");
  }
  if (policy.S() == 0) throw UsageError("precision is undefined for an empty policy (S=0)");
  std::size_t hits = 0;
  for (const auto& [r, c] : policy.ordered_shared) hits += gt.at(r, c) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(policy.S());
}

std::size_t dynamic_select(const PolicyScores& scores, double tau,
                           std::span<const std::size_t> available_settings) {
  if (available_settings.empty()) throw UsageError("dynamic_select: no available settings");
  if (!std::is_sorted(available_settings.begin(), available_settings.end()) ||
      available_settings.front() != 0) {
    throw UsageError("dynamic_select: settings must be ascending and start at 0");
  }
  const auto s_star = static_cast<std::size_t>(
      std::count_if(scores.values.begin(), scores.values.end(), [&](double v) { return v > tau; }));
  std::size_t chosen = 0;
  for (auto s : available_settings)
    if (s < s_star) chosen = s;
  return chosen;
}

// ---------------------------------------------------------------------------

std::size_t PolicyNetConfig::stride_two_stages() const {
  std::size_t factor = 2 * patch_size, n = 0;
  while (factor > 1) {
    if (factor % 2 != 0) throw ConfigError("policy net needs a power-of-two patch size");
    factor /= 2;
    ++n;
  }
  return n;
}

void PolicyNetConfig::validate() const {
  if (patch_size == 0) throw ConfigError("policy patch_size must be >= 1");
  if (widths.size() < stride_two_stages()) {
    throw ConfigError("policy net needs at least " + std::to_string(stride_two_stages()) +
                      " stages to reach superpatch resolution");
  }
  for (auto w : widths)
    if (w == 0) throw ConfigError("policy stage width must be >= 1");
  if (batch_size == 0) throw ConfigError("policy batch_size must be >= 1");
}

ParamStore init_policy_params(const PolicyNetConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(mix_seed(seed, 0x9011C7ull));
  ParamStore params;
  std::size_t in = 3;
  for (std::size_t i = 0; i < config.widths.size(); ++i) {
    const std::size_t out = config.widths[i];
    Tensor w({out, in, 3, 3}, true);
    const double stddev = std::sqrt(2.0 / static_cast<double>(in * 9));
    for (auto& v : w.mutable_data()) v = stddev * rng.normal();
    params.add("policy.stage" + std::to_string(i) + ".w", w);
    params.add("policy.stage" + std::to_string(i) + ".b", Tensor::zeros({out}, true));
    in = out;
  }
  params.add("policy.head.w", Tensor::zeros({2, in, 1, 1}, true));
  params.add("policy.head.b", Tensor::zeros({2}, true));
  return params;
}

Tensor policy_logits(const Image& image, const ParamStore& params, const PolicyNetConfig& config) {
  const std::size_t sp = 2 * config.patch_size;
  if (image.height() % sp != 0 || image.width() % sp != 0) {
    throw DimensionError("image is not divisible into superpatches of " + std::to_string(sp) + "px");
  }
  const std::size_t downs = config.stride_two_stages();
  Tensor x = image.pixels;
  for (std::size_t i = 0; i < config.widths.size(); ++i) {
    const auto& w = params.get("policy.stage" + std::to_string(i) + ".w");
    const auto& b = params.get("policy.stage" + std::to_string(i) + ".b");
    if (w.rank() != 4 || w.dim(0) != config.widths[i]) {
      throw DimensionError("policy stage " + std::to_string(i) + " weight " + shape_str(w.shape()) +
                           " does not match configured width " + std::to_string(config.widths[i]));
    }
    x = relu(conv2d(x, w, b, i < downs ? 2 : 1, 1));
  }
  return conv2d(x, params.get("policy.head.w"), params.get("policy.head.b"), 1, 0);
}

PolicyScores policy_forward(const Image& image, const ParamStore& params,
                            const PolicyNetConfig& config) {
  Tensor logits = policy_logits(image, params, config);
  const std::size_t rows = logits.dim(1), cols = logits.dim(2);
  Tensor probs = softmax(logits, 0);
  PolicyScores s{rows, cols, {}};
  s.values.assign(probs.data().begin(), probs.data().begin() + rows * cols);
  return s;
}

Tensor policy_loss(const Image& image, const PolicyGroundTruth& gt, const ParamStore& params,
                   const PolicyNetConfig& config) {
  Tensor logits = policy_logits(image, params, config);
  if (logits.dim(1) != gt.rows || logits.dim(2) != gt.cols) {
    throw DimensionError("policy output grid does not match ground truth");
  }
  const std::size_t cells = gt.rows * gt.cols;
  std::vector<int> targets(cells);
  for (std::size_t i = 0; i < cells; ++i) targets[i] = gt.single[i] ? 0 : 1;
  return cross_entropy(transpose(reshape(logits, {2, cells})), targets);
}

ParamStore train_policy(const Dataset& dataset, const PolicyNetConfig& config,
                        PolicyTrainLog* log) {
  if (dataset.size() == 0) throw ConfigError("train_policy: empty dataset");
  if (dataset.masks.size() != dataset.images.size()) {
    throw ConfigError("train_policy: images and masks are not paired");
  }
  config.validate();
  std::vector<PolicyGroundTruth> gts;
  gts.reserve(dataset.size());
  for (const auto& m : dataset.masks) gts.push_back(gt_policy(m, config.patch_size));

  ParamStore params = init_policy_params(config, config.seed);
  Sgd opt({config.lr, config.momentum, config.weight_decay});
  Rng rng(mix_seed(config.seed, 0xBA7C4ull));
  for (std::size_t it = 0; it < config.iterations; ++it) {
    params.zero_grad();
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const auto idx = static_cast<std::size_t>(rng.below(dataset.size()));
      Tape tape;
      TapeScope scope(tape);
      Tensor loss = scale(policy_loss(dataset.images[idx], gts[idx], params, config),
                          1.0 / static_cast<double>(config.batch_size));
      tape.backward(loss);
      batch_loss += loss.item();
    }
    opt.step(params);
    if (log != nullptr) log->losses.push_back(batch_loss);
  }
  return params;
}

std::size_t policy_macs(const PolicyNetConfig& config, std::size_t height, std::size_t width) {
  const std::size_t downs = config.stride_two_stages();
  std::size_t h = height, w = width, in = 3, macs = 0;
  for (std::size_t i = 0; i < config.widths.size(); ++i) {
    const std::size_t stride = i < downs ? 2 : 1;
    h = (h + 2 - 3) / stride + 1;
    w = (w + 2 - 3) / stride + 1;
    macs += h * w * config.widths[i] * in * 9;
    in = config.widths[i];
  }
  return macs + h * w * 2 * in;
}

}  // namespace cts
