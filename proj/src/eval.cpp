#include "cts/eval.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <thread>

#include "cts/errors.hpp"
#include "cts/parallel.hpp"

namespace cts {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : classes_(num_classes),
      counts_(static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(num_classes), 0) {
  if (num_classes < 1) throw ConfigError("confusion matrix needs >= 1 class");
}

void ConfusionMatrix::add(const SegMask& pred, const SegMask& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw UsageError("prediction " + std::to_string(pred.height) + "x" +
                     std::to_string(pred.width) + " does not match ground truth " +
                     std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const int g = gt.labels[i], p = pred.labels[i];
    if (g >= classes_ || p >= classes_) throw InputError("class id outside the confusion matrix");
    ++counts_[static_cast<std::size_t>(g * classes_ + p)];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw UsageError("merging confusion matrices of different size");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

double ConfusionMatrix::iou(int cls) const {
  std::uint64_t row = 0, col = 0;
  for (int k = 0; k < classes_; ++k) {
    row += at(cls, k);
    col += at(k, cls);
  }
  const std::uint64_t tp = at(cls, cls);
  const std::uint64_t uni = row + col - tp;
  if (uni == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(tp) / static_cast<double>(uni);
}

double ConfusionMatrix::miou() const {
  double s = 0.0;
  int n = 0;
  for (int c = 0; c < classes_; ++c) {
    const double v = iou(c);
    if (std::isnan(v)) continue;
    s += v;
    ++n;
  }
  return n == 0 ? 0.0 : s / n;
}

double miou(std::span<const SegMask> preds, std::span<const SegMask> gts, int num_classes) {
  if (preds.size() != gts.size()) {
    throw UsageError("miou: " + std::to_string(preds.size()) + " predictions for " +
                     std::to_string(gts.size()) + " ground truths");
  }
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) cm.add(preds[i], gts[i]);
  return cm.miou();
}

// ---------------------------------------------------------------------------

std::uint64_t attention_flops(const ViTConfig& c, std::size_t M) {
  const std::uint64_t m = M, e = c.embed_dim;
  return 2 * c.depth * (4 * m * e * e + 2 * m * m * e);
}

std::uint64_t attention_quadratic_flops(const ViTConfig& c, std::size_t M) {
  const std::uint64_t m = M, e = c.embed_dim;
  return 2 * c.depth * (2 * m * m * e);
}

std::uint64_t mlp_flops(const ViTConfig& c, std::size_t M) {
  const std::uint64_t m = M, e = c.embed_dim;
  return 2 * c.depth * (2 * m * e * (c.mlp_ratio * e));
}

CostReport flop_model(const SegConfig& config, std::size_t S, const PolicyNetConfig* policy) {
  const ViTConfig& v = config.vit;
  v.validate();
  CostReport r;
  r.N = v.num_patches();
  if (4 * S > r.N) {
    throw UsageError("S=" + std::to_string(S) + " exceeds the superpatch count " +
                     std::to_string(r.N / 4));
  }
  r.S = S;
  r.M = r.N - 3 * S;
  r.token_reduction = static_cast<double>(3 * S) / static_cast<double>(r.N);
  r.attention_flops = attention_flops(v, r.M);
  r.mlp_flops = mlp_flops(v, r.M);
  const std::uint64_t patch_dim = 3 * v.patch_size * v.patch_size;
  r.projection_flops = 2 * std::uint64_t{r.M} * patch_dim * v.embed_dim;
  const std::uint64_t c = static_cast<std::uint64_t>(config.num_classes);
  if (config.decoder == DecoderKind::Linear) {
    r.decoder_flops = 2 * std::uint64_t{r.M} * v.embed_dim * c;
  } else {
    const std::uint64_t hd = config.decoder_hidden;
    r.decoder_flops = 2 * std::uint64_t{r.N} * (9 * v.embed_dim * hd + 9 * hd * hd + hd * c);
  }
  if (policy != nullptr) {
    r.policy_flops = 2 * policy_macs(*policy, v.grid_h * v.patch_size, v.grid_w * v.patch_size);
  }
  return r;
}

// ---------------------------------------------------------------------------

std::string hardware_string() {
  std::string model = "unknown cpu";
  std::ifstream cpuinfo("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpuinfo, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) model = line.substr(colon + 2);
      break;
    }
  }
  return model + ", " + std::to_string(std::thread::hardware_concurrency()) +
         " hw threads, timing single-threaded";
}

BenchResult benchmark(const std::function<void(std::size_t)>& run_batch,
                      const BenchProtocol& protocol) {
  if (protocol.iters == 0 || protocol.batch == 0) {
    throw UsageError("benchmark needs iters >= 1 and batch >= 1");
  }
  for (std::size_t i = 0; i < protocol.warmup; ++i) run_batch(i);
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < protocol.iters; ++i) run_batch(protocol.warmup + i);
  const auto stop = std::chrono::steady_clock::now();
  BenchResult r;
  r.protocol = protocol;
  r.seconds = std::chrono::duration<double>(stop - start).count();
  r.images_per_sec =
      static_cast<double>(protocol.iters * protocol.batch) / std::max(r.seconds, 1e-12);
  r.hardware = hardware_string();
  return r;
}

// ---------------------------------------------------------------------------

namespace {

std::size_t vote_cell(const SegMask& pred, const SharingPolicy& policy) {
  if (policy.rows == 0 || policy.cols == 0 || pred.height % policy.rows != 0 ||
      pred.width % policy.cols != 0 || pred.height / policy.rows != pred.width / policy.cols) {
    throw DimensionError("mask " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                         " is not a whole multiple of the " + std::to_string(policy.rows) + "x" +
                         std::to_string(policy.cols) + " superpatch grid");
  }
  return pred.height / policy.rows;
}

}  // namespace

SegMask majority_vote(const SegMask& pred, const SharingPolicy& policy) {
  const std::size_t cell = vote_cell(pred, policy);
  SegMask out = pred;
  std::map<std::uint16_t, std::size_t> votes;
  for (const auto& [r, c] : policy.ordered_shared) {
    votes.clear();
    for (std::size_t y = r * cell; y < (r + 1) * cell; ++y)
      for (std::size_t x = c * cell; x < (c + 1) * cell; ++x) ++votes[pred.at(y, x)];
    std::uint16_t mode = votes.begin()->first;
    std::size_t best = 0;
    for (const auto& [cls, n] : votes) {
      if (n > best) {  // map order makes the lowest id win ties
        best = n;
        mode = cls;
      }
    }
    for (std::size_t y = r * cell; y < (r + 1) * cell; ++y)
      for (std::size_t x = c * cell; x < (c + 1) * cell; ++x) out.at(y, x) = mode;
  }
  return out;
}

std::size_t majority_vote_changes(const SegMask& pred, const SharingPolicy& policy) {
  const SegMask voted = majority_vote(pred, policy);
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.labels.size(); ++i) n += pred.labels[i] != voted.labels[i];
  return n;
}

// ---------------------------------------------------------------------------

DynamicReport dynamic_eval(const std::map<std::size_t, ParamStore>& models,
                           const SegConfig& config, const std::vector<PolicyScores>& scores,
                           double tau, const Dataset& dataset, std::size_t threads) {
  if (!models.contains(0)) throw ConfigError("dynamic evaluation needs an S=0 model");
  if (scores.size() != dataset.size()) {
    throw UsageError("dynamic evaluation needs one score grid per image");
  }
  std::vector<std::size_t> settings;
  for (const auto& [s, params] : models) settings.push_back(s);

  DynamicReport rep;
  rep.tau = tau;
  rep.chosen.resize(dataset.size());
  for (auto s : settings) rep.images_per_setting[s] = 0;
  std::vector<SegMask> preds(dataset.size());
  parallel_for(dataset.size(), threads, [&](std::size_t i) {
    const std::size_t s = dynamic_select(scores[i], tau, settings);
    SharingPolicy policy = select_top_s(scores[i], s);
    SegOutput out = run_segmenter(dataset.images[i], policy, models.at(s), config);
    preds[i] = argmax_mask(out.pixel_scores);
    rep.chosen[i] = s;
  });
  double reduction = 0.0;
  for (auto s : rep.chosen) {
    ++rep.images_per_setting[s];
    reduction += static_cast<double>(3 * s) / static_cast<double>(config.vit.num_patches());
  }
  rep.average_token_reduction = dataset.size() ? reduction / static_cast<double>(dataset.size()) : 0;
  rep.combined_miou = miou(preds, dataset.masks, config.num_classes);
  return rep;
}

DynamicReport dynamic_eval(const std::map<std::size_t, ParamStore>& models,
                           const SegConfig& config, const ParamStore& policy_params,
                           const PolicyNetConfig& policy_config, double tau,
                           const Dataset& dataset, std::size_t threads) {
  std::vector<PolicyScores> scores(dataset.size());
  parallel_for(dataset.size(), threads, [&](std::size_t i) {
    scores[i] = policy_forward(dataset.images[i], policy_params, policy_config);
  });
  return dynamic_eval(models, config, scores, tau, dataset, threads);
}

}  // namespace cts
