#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cts/data.hpp"
#include "cts/params.hpp"
#include "cts/policy.hpp"
#include "cts/vit.hpp"

namespace cts {

// Linear: per-token decoding, then unsharing of predictions.
// Spatial: unsharing of tokens, then a convolutional decoder on L_spat.
enum class DecoderKind { Linear, Spatial };

const char* decoder_name(DecoderKind kind);
DecoderKind parse_decoder(const std::string& text);

struct SegConfig {
  ViTConfig vit;
  int num_classes = 5;
  DecoderKind decoder = DecoderKind::Linear;
  std::size_t decoder_hidden = 32;

  void validate() const;
};

/// Backbone parameters plus the parameters of `config.decoder`.
ParamStore init_seg_params(const SegConfig& config, std::uint64_t seed);

/// Affine map per token: tokens[M, E] * head[E, C] + bias[C].
Tensor linear_decode(const Tensor& tokens, const Tensor& head, const Tensor& bias);

/// Two 3x3 conv + gelu layers and a 1x1 head on [E, H_L, W_L]; keeps resolution.
Tensor spatial_decode(const Tensor& features, const ParamStore& params);

/// Where a sharing policy comes from.
class PolicySource {
 public:
  enum class Kind { Oracle, Net, Random };

  static PolicySource oracle();
  static PolicySource net(ParamStore params, PolicyNetConfig config);
  static PolicySource random(std::uint64_t seed);

  Kind kind() const { return kind_; }
  std::string describe() const;

  /// Policy with S shared superpatches for one image. `mask` is required by the
  /// oracle; `key` decorrelates random draws across images and iterations.
  /// S = 0 yields the empty policy without consulting the source.
  SharingPolicy make(const Image& image, const SegMask* mask, std::size_t S, std::size_t patch_size,
                     std::uint64_t key) const;

  const ParamStore& net_params() const { return net_params_; }
  const PolicyNetConfig& net_config() const { return net_config_; }

 private:
  Kind kind_ = Kind::Oracle;
  ParamStore net_params_;
  PolicyNetConfig net_config_;
  std::uint64_t seed_ = 0;
};

struct SegOutput {
  Tensor pixel_scores;  // [C, H, W]
  Tensor slot_scores;   // [N, C], per patch slot before pixel upsampling
  SharingPolicy policy;
};

/// O' = g(f(T')), O = t_u(O', P), then raster arrangement and bilinear x P.
SegOutput pipeline_eq1(const Image& image, const SharingPolicy& policy, const ParamStore& params,
                       const SegConfig& config);

/// O = g(t_u(L', P)) with the spatial decoder, then bilinear x P.
SegOutput pipeline_eq2(const Image& image, const SharingPolicy& policy, const ParamStore& params,
                       const SegConfig& config);

/// Dispatches on the configured decoder.
SegOutput run_segmenter(const Image& image, const SharingPolicy& policy, const ParamStore& params,
                        const SegConfig& config);

/// Per-pixel argmax of [C, H, W] scores; ties go to the lower class id.
SegMask argmax_mask(const Tensor& scores);

/// Mean per-pixel cross-entropy of [C, H, W] scores against a mask.
Tensor pixel_cross_entropy(const Tensor& scores, const SegMask& mask);

struct SegTrainConfig {
  std::size_t iterations = 600;
  std::size_t batch_size = 4;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
};

struct SegTrainLog {
  std::vector<double> losses;
};

/// Trains backbone + decoder on tokens shared by `policy_source` at setting S.
/// Learning rate follows a poly(0.9) decay.
ParamStore train_segmenter(const Dataset& dataset, const PolicySource& policy_source,
                           std::size_t S, const SegConfig& seg_config,
                           const SegTrainConfig& train_config, SegTrainLog* log = nullptr);

struct SegEvaluation {
  std::vector<SegMask> predictions;
  std::vector<SharingPolicy> policies;
  double miou = 0.0;
};

/// Predicts every image with the policy from `policy_source` at setting S.
/// Runs up to `threads` images concurrently.
SegEvaluation evaluate_segmenter(const Dataset& dataset, const PolicySource& policy_source,
                                 std::size_t S, const ParamStore& params, const SegConfig& config,
                                 std::size_t threads = 1);

}  // namespace cts
