#pragma once

#include <vector>

#include "speechllm/nn.h"

namespace speechllm {

inline constexpr double kInputFrameRateHz = 100.0;
inline constexpr int kEncoderStride = 4;
inline constexpr double kEncoderFrameRateHz = kInputFrameRateHz / kEncoderStride;  // 25 Hz

// Time-major acoustic features: num_frames rows of dim values.
struct FeatureSequence {
  int num_frames = 0;
  int dim = 0;
  std::vector<real> values;
  double frame_rate_hz = kInputFrameRateHz;

  Tensor as_tensor() const { return Tensor({num_frames, dim}, values); }
  double duration_seconds() const { return num_frames / frame_rate_hz; }
  bool operator==(const FeatureSequence&) const = default;
};

struct EncoderOutput {
  Tensor frames;  // [T', D_enc]
  double frame_rate_hz = kEncoderFrameRateHz;
  int length() const { return frames.rows(); }
};

struct EncoderConfig {
  int input_dim = 24;
  int dim = 64;
  int layers = 2;
  int heads = 4;
  int window = 8;  // attention radius in encoder frames
  int ffn_mult = 4;
};

// Two stride-2 convolutions (kernel 4, pad 1), then band-limited
// self-attention blocks. T input frames at 100 Hz give floor(T/4) frames at
// 25 Hz. No absolute positions, so the map is shift-equivariant in steps of 4
// input frames away from the edges.
class Encoder {
 public:
  Encoder(ParameterStore& store, const EncoderConfig& config, Rng& rng);

  // Throws EmptyOutputError for T < 4, ContractViolation for a wrong rate or
  // feature width.
  EncoderOutput encode(const FeatureSequence& features) const;

  static int output_length(int input_frames) { return input_frames / kEncoderStride; }
  // Input frames on either side of a boundary that can influence an output.
  int receptive_radius_frames() const;
  const EncoderConfig& config() const { return config_; }

 private:
  EncoderConfig config_;
  Linear conv1_;
  Linear conv2_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm final_norm_;
};

// Linear map from encoder frames to V+1 CTC classes (blank = last column).
class CtcHead {
 public:
  CtcHead(ParameterStore& store, int dim, int num_classes, Rng& rng);
  Tensor logits(const EncoderOutput& encoded) const { return proj_.forward(encoded.frames); }
  int num_classes() const { return proj_.out_features(); }

 private:
  Linear proj_;
};

}  // namespace speechllm
