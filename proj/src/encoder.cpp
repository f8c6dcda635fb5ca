#include "speechllm/encoder.h"

#include <string>

#include "speechllm/error.h"
#include "speechllm/ops.h"

namespace speechllm {

namespace {
constexpr int kConvKernel = 4;
constexpr int kConvStride = 2;
constexpr int kConvPad = 1;
}  // namespace

Encoder::Encoder(ParameterStore& store, const EncoderConfig& config, Rng& rng)
    : config_(config),
      conv1_(store, "encoder.conv1", Group::encoder, kConvKernel * config.input_dim, config.dim, rng),
      conv2_(store, "encoder.conv2", Group::encoder, kConvKernel * config.dim, config.dim, rng),
      final_norm_(store, "encoder.norm", Group::encoder, config.dim) {
  if (config.window < 1) throw ConfigError("encoder window must be >= 1");
  for (int i = 0; i < config.layers; ++i) {
    blocks_.emplace_back(store, "encoder.block" + std::to_string(i), Group::encoder, config.dim, config.heads,
                         config.ffn_mult * config.dim, rng);
  }
}

EncoderOutput Encoder::encode(const FeatureSequence& features) const {
  if (features.frame_rate_hz != kInputFrameRateHz) {
    throw ContractViolation("encoder expects 100 Hz features, got " + std::to_string(features.frame_rate_hz) + " Hz");
  }
  if (features.dim != config_.input_dim) {
    throw ContractViolation("encoder expects feature width " + std::to_string(config_.input_dim) + ", got " +
                            std::to_string(features.dim));
  }
  if (features.num_frames < kEncoderStride) {
    throw EmptyOutputError("utterance too short: " + std::to_string(features.num_frames) +
                           " frames, need at least " + std::to_string(kEncoderStride));
  }
  Tensor x = features.as_tensor();
  x = gelu(conv1_.forward(unfold_frames(x, kConvKernel, kConvStride, kConvPad)));
  x = gelu(conv2_.forward(unfold_frames(x, kConvKernel, kConvStride, kConvPad)));
  const std::vector<real> mask = band_mask(x.rows(), config_.window);
  for (const TransformerBlock& block : blocks_) x = block.forward(x, mask);
  return EncoderOutput{final_norm_.forward(x), kEncoderFrameRateHz};
}

int Encoder::receptive_radius_frames() const {
  // Each conv output sees frames [4j-3, 4j+6]; every block widens by window
  // encoder frames on each side.
  return 6 + kEncoderStride * config_.window * config_.layers;
}

CtcHead::CtcHead(ParameterStore& store, int dim, int num_classes, Rng& rng)
    : proj_(store, "ctc_head.proj", Group::ctc_head, dim, num_classes, rng) {}

}  // namespace speechllm
