#include "cts/segmenter.hpp"

#include <cmath>

#include "cts/errors.hpp"
#include "cts/eval.hpp"
#include "cts/ops.hpp"
#include "cts/parallel.hpp"
#include "cts/rng.hpp"

namespace cts {

const char* decoder_name(DecoderKind kind) {
  return kind == DecoderKind::Linear ? "eq1" : "eq2";
}

DecoderKind parse_decoder(const std::string& text) {
  if (text == "eq1" || text == "linear") return DecoderKind::Linear;
  if (text == "eq2" || text == "spatial") return DecoderKind::Spatial;
  throw ConfigError("unknown decoder path '" + text + "' (expected eq1 or eq2)");
}

void SegConfig::validate() const {
  vit.validate();
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (decoder == DecoderKind::Spatial && decoder_hidden == 0) {
    throw ConfigError("decoder_hidden must be >= 1");
  }
}

ParamStore init_seg_params(const SegConfig& config, std::uint64_t seed) {
  config.validate();
  ParamStore p = init_vit_params(config.vit, seed);
  Rng rng(mix_seed(seed, 0xDEC0DEull));
  const std::size_t e = config.vit.embed_dim, c = static_cast<std::size_t>(config.num_classes);
  auto normal = [&](Shape shape, double stddev) {
    Tensor t(std::move(shape), true);
    for (auto& v : t.mutable_data()) v = stddev * rng.normal();
    return t;
  };
  if (config.decoder == DecoderKind::Linear) {
    p.add("dec.linear.w", normal({e, c}, 0.02));
    p.add("dec.linear.b", Tensor::zeros({c}, true));
  } else {
    const std::size_t hd = config.decoder_hidden;
    p.add("dec.conv1.w", normal({hd, e, 3, 3}, std::sqrt(2.0 / static_cast<double>(9 * e))));
    p.add("dec.conv1.b", Tensor::zeros({hd}, true));
    p.add("dec.conv2.w", normal({hd, hd, 3, 3}, std::sqrt(2.0 / static_cast<double>(9 * hd))));
    p.add("dec.conv2.b", Tensor::zeros({hd}, true));
    p.add("dec.head.w", normal({c, hd, 1, 1}, 0.02));
    p.add("dec.head.b", Tensor::zeros({c}, true));
  }
  return p;
}

Tensor linear_decode(const Tensor& tokens, const Tensor& head, const Tensor& bias) {
  if (tokens.rank() != 2 || head.rank() != 2 || tokens.dim(1) != head.dim(0)) {
    throw DimensionError("linear decoder " + shape_str(head.shape()) + " cannot decode tokens " +
                         shape_str(tokens.shape()));
  }
  return add_bias(matmul(tokens, head), bias);
}

Tensor spatial_decode(const Tensor& features, const ParamStore& params) {
  const auto& w1 = params.get("dec.conv1.w");
  if (features.rank() != 3 || features.dim(0) != w1.dim(1)) {
    throw DimensionError("spatial decoder expects [" + std::to_string(w1.dim(1)) +
                         ", H, W] features, got " + shape_str(features.shape()));
  }
  Tensor h = gelu(conv2d(features, w1, params.get("dec.conv1.b"), 1, 1));
  h = gelu(conv2d(h, params.get("dec.conv2.w"), params.get("dec.conv2.b"), 1, 1));
  return conv2d(h, params.get("dec.head.w"), params.get("dec.head.b"), 1, 0);
}

// ---------------------------------------------------------------------------

PolicySource PolicySource::oracle() { return PolicySource{}; }

PolicySource PolicySource::net(ParamStore params, PolicyNetConfig config) {
  PolicySource s;
  s.kind_ = Kind::Net;
  s.net_params_ = std::move(params);
  s.net_config_ = std::move(config);
  return s;
}

PolicySource PolicySource::random(std::uint64_t seed) {
  PolicySource s;
  s.kind_ = Kind::Random;
  s.seed_ = seed;
  return s;
}

std::string PolicySource::describe() const {
  switch (kind_) {
    case Kind::Oracle:
      return "oracle";
    case Kind::Net:
      return "net";
    case Kind::Random:
      return "random:" + std::to_string(seed_);
  }
  return "?";
}

SharingPolicy PolicySource::make(const Image& image, const SegMask* mask, std::size_t S,
                                 std::size_t patch_size, std::uint64_t key) const {
  const std::size_t sp = 2 * patch_size;
  if (patch_size == 0 || image.height() % sp != 0 || image.width() % sp != 0) {
    throw ConfigError("image is not divisible into superpatches");
  }
  const std::size_t rows = image.height() / sp, cols = image.width() / sp;
  if (S > rows * cols) {
    throw UsageError("S=" + std::to_string(S) + " exceeds the " + std::to_string(rows * cols) +
                     " superpatches of the image");
  }
  if (S == 0) return SharingPolicy::none(rows, cols);
  switch (kind_) {
    case Kind::Oracle:
      if (mask == nullptr) throw UsageError("the oracle policy needs the ground-truth mask");
      return select_top_s(gt_as_scores(gt_policy(*mask, patch_size)), S);
    case Kind::Net:
      return select_top_s(policy_forward(image, net_params_, net_config_), S);
    case Kind::Random: {
      Rng rng(mix_seed(seed_, key));
      return random_policy(rows, cols, S, rng);
    }
  }
  throw UsageError("unknown policy source");
}

// ---------------------------------------------------------------------------

namespace {

Tensor upsample_to_pixels(const Tensor& slot_scores, const SegConfig& config) {
  Tensor spatial = to_spatial(slot_scores, config.vit.grid_h, config.vit.grid_w);
  return bilinear_resize(spatial, config.vit.grid_h * config.vit.patch_size,
                         config.vit.grid_w * config.vit.patch_size);
}

}  // namespace

SegOutput pipeline_eq1(const Image& image, const SharingPolicy& policy, const ParamStore& params,
                       const SegConfig& config) {
  if (!params.contains("dec.linear.w")) {
    throw ConfigError("the eq1 path needs a linear decoder checkpoint");
  }
  TokenSet tokens = embed_tokens(image, policy, params, config.vit);
  Tensor encoded = vit_forward(tokens, params, config.vit);
  Tensor token_preds = linear_decode(encoded, params.get("dec.linear.w"), params.get("dec.linear.b"));
  SegOutput out;
  out.slot_scores = unshare_predictions(token_preds, tokens.layout);
  out.pixel_scores = upsample_to_pixels(out.slot_scores, config);
  out.policy = policy;
  return out;
}

SegOutput pipeline_eq2(const Image& image, const SharingPolicy& policy, const ParamStore& params,
                       const SegConfig& config) {
  if (!params.contains("dec.conv1.w")) {
    throw ConfigError("the eq2 path needs a spatial decoder checkpoint");
  }
  TokenSet tokens = embed_tokens(image, policy, params, config.vit);
  Tensor encoded = vit_forward(tokens, params, config.vit);
  Tensor full = unshare_tokens(encoded, tokens.layout);
  Tensor decoded = spatial_decode(to_spatial(full, config.vit.grid_h, config.vit.grid_w), params);
  SegOutput out;
  out.slot_scores = transpose(reshape(decoded, {decoded.dim(0), config.vit.num_patches()}));
  out.pixel_scores = bilinear_resize(decoded, config.vit.grid_h * config.vit.patch_size,
                                     config.vit.grid_w * config.vit.patch_size);
  out.policy = policy;
  return out;
}

SegOutput run_segmenter(const Image& image, const SharingPolicy& policy, const ParamStore& params,
                        const SegConfig& config) {
  return config.decoder == DecoderKind::Linear ? pipeline_eq1(image, policy, params, config)
                                               : pipeline_eq2(image, policy, params, config);
}

SegMask argmax_mask(const Tensor& scores) {
  if (scores.rank() != 3) throw DimensionError("argmax_mask expects [C, H, W]");
  const std::size_t c = scores.dim(0), h = scores.dim(1), w = scores.dim(2);
  SegMask mask(h, w);
  const auto s = scores.data();
  for (std::size_t i = 0; i < h * w; ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < c; ++k)
      if (s[k * h * w + i] > s[best * h * w + i]) best = k;
    mask.labels[i] = static_cast<std::uint16_t>(best);
  }
  return mask;
}

Tensor pixel_cross_entropy(const Tensor& scores, const SegMask& mask) {
  if (scores.rank() != 3 || scores.dim(1) != mask.height || scores.dim(2) != mask.width) {
    throw DimensionError("scores " + shape_str(scores.shape()) + " do not match a " +
                         std::to_string(mask.height) + "x" + std::to_string(mask.width) + " mask");
  }
  const std::size_t pixels = mask.height * mask.width;
  std::vector<int> targets(mask.labels.begin(), mask.labels.end());
  return cross_entropy(transpose(reshape(scores, {scores.dim(0), pixels})), targets);
}

ParamStore train_segmenter(const Dataset& dataset, const PolicySource& policy_source,
                           std::size_t S, const SegConfig& seg_config,
                           const SegTrainConfig& train_config, SegTrainLog* log) {
  if (dataset.size() == 0) throw ConfigError("train_segmenter: empty dataset");
  if (train_config.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  seg_config.validate();
  ParamStore params = init_seg_params(seg_config, train_config.seed);
  Sgd opt({train_config.lr, train_config.momentum, train_config.weight_decay});
  Rng rng(mix_seed(train_config.seed, 0x5E6ull));
  const std::size_t p = seg_config.vit.patch_size;
  for (std::size_t it = 0; it < train_config.iterations; ++it) {
    params.zero_grad();
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < train_config.batch_size; ++b) {
      const auto idx = static_cast<std::size_t>(rng.below(dataset.size()));
      const std::uint64_t key = (std::uint64_t{1} << 40) + it * train_config.batch_size + b;
      SharingPolicy policy =
          policy_source.make(dataset.images[idx], &dataset.masks[idx], S, p, key);
      Tape tape;
      TapeScope scope(tape);
      SegOutput out = run_segmenter(dataset.images[idx], policy, params, seg_config);
      Tensor loss = scale(pixel_cross_entropy(out.pixel_scores, dataset.masks[idx]),
                          1.0 / static_cast<double>(train_config.batch_size));
      tape.backward(loss);
      batch_loss += loss.item();
    }
    const double progress =
        static_cast<double>(it) / static_cast<double>(train_config.iterations);
    opt.step(params, train_config.lr * std::pow(1.0 - progress, 0.9));
    if (log != nullptr) log->losses.push_back(batch_loss);
  }
  return params;
}

SegEvaluation evaluate_segmenter(const Dataset& dataset, const PolicySource& policy_source,
                                 std::size_t S, const ParamStore& params, const SegConfig& config,
                                 std::size_t threads) {
  SegEvaluation ev;
  ev.predictions.resize(dataset.size());
  ev.policies.resize(dataset.size());
  parallel_for(dataset.size(), threads, [&](std::size_t i) {
    SharingPolicy policy = policy_source.make(dataset.images[i], &dataset.masks[i], S,
                                              config.vit.patch_size, i);
    SegOutput out = run_segmenter(dataset.images[i], policy, params, config);
    ev.predictions[i] = argmax_mask(out.pixel_scores);
    ev.policies[i] = std::move(policy);
  });
  ev.miou = miou(ev.predictions, dataset.masks, config.num_classes);
  return ev;
}

}  // namespace cts
