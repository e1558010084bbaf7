// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ornatry/image.hpp"
#include "ornatry/maskrefine.hpp"
#include "ornatry/nn.hpp"
#include "ornatry/tensor.hpp"

namespace ornatry {

struct ModelConfig {
    int resolution = 64;
    int time_dim = 64;
    int token_dim = 64;
    int token_count = 16;                    // 4x4 grid from the ornament encoder
    std::array<int, 3> widths = {32, 64, 128};

    bool operator==(const ModelConfig&) const = default;
};

/// Per-resolution reference features. Each level is (B, C, h, 2h): the
/// ornament half occupies columns [0, split), the model half [split, 2h).
struct FeatureStack {
    struct Level {
        Tensor features;
        int split = 0;
    };
    std::vector<Level> levels;

    Tensor ornament_half(int level) const;
    Tensor model_half(int level) const;
};

/// Recorded attention sub-blocks: latent-query rows x ornament-token columns
/// of the joint softmax, one d_i x d_i map per batch element per tap.
struct AttentionMapSet {
    struct Tap {
        std::string tag;  // "encoder_highres" | "decoder_highres"
        int d = 0;
        std::vector<Tensor> per_sample;
    };
    std::vector<Tap> taps;
};

/// Plain self-attention block (norm + QKV + zero-init projection, residual).
struct SelfAttention {
    GroupNorm norm;
    Linear q, k, v, proj;
    int channels = 0;
    SelfAttention() = default;
    SelfAttention(ParamRegistry& reg, const std::string& name, int channels, Rng& rng);
    Tensor forward(const Tensor& x) const;
};

/// Self-attention over latent tokens with reference keys/values appended,
/// followed by cross-attention to the ornament embedding tokens.
struct InjectedAttention {
    GroupNorm norm, norm2;
    Linear q, k, v, proj;
    Linear ref_k, ref_v;       // project reference features into this level
    Linear cq, ck, cv, cproj;  // cross-attention to ornament tokens
    int channels = 0;

    InjectedAttention() = default;
    InjectedAttention(ParamRegistry& reg, const std::string& name, int channels, int ref_channels,
                      int token_dim, Rng& rng);

    /// ref == nullptr runs plain self-attention (identical output, no extra
    /// keys). recorded, when non-null, receives one (L, n_ornament) softmax
    /// sub-block per batch element. key_bias, when non-null, is added to every
    /// row of the attention logits (length = total key count).
    Tensor forward(const Tensor& x, const FeatureStack::Level* ref, const Tensor& tokens,
                   int token_count, std::vector<Tensor>* recorded = nullptr,
                   const std::vector<float>* key_bias = nullptr) const;
};

/// The full desk-scale network: denoising U-Net, Siamese reference encoder,
/// ornament token encoder, and the wearing-mask prediction head.
class TryonModel {
public:
    explicit TryonModel(const ModelConfig& cfg = {}, uint64_t seed = 0);

    /// Timesteps scaled by 1/T -> sinusoidal features -> MLP. (B, time_dim).
    Tensor time_embed(const std::vector<int>& ts, int total_T) const;

    /// Reference ornament crop -> fixed-length conditioning token sequence,
    /// (B * token_count, token_dim).
    Tensor ornament_embed(const Tensor& ornament_rgb) const;

    /// Width-concatenates ornament and masked model inputs (each with its own
    /// mask plane: the reference silhouette for the ornament half, the current
    /// wearing mask for the model half) and runs the shared-weight per-half
    /// encoder + joint-attention decoder. When ornament_mask is undefined the
    /// silhouette is derived from the image by distance to the backdrop color.
    FeatureStack encode_reference(const Tensor& ornament_rgb, const Tensor& masked_model_rgb,
                                  const Tensor& current_mask, const Tensor& temb,
                                  const Tensor& ornament_mask = Tensor()) const;

    /// Wearing-mask head: model-half features gated by the previous mask,
    /// concatenated with ornament-half features, per-pixel linear + sigmoid,
    /// upsampled to image resolution. Input mask is (B,1,R,R).
    Tensor predict_mask(const FeatureStack& features, const Tensor& prev_mask) const;

    /// Denoiser forward. Inputs are (B,3,R,R) z_t and masked model image (in
    /// [-1,1]) plus the (B,1,R,R) wearing-mask conditioning channel. When
    /// record is non-null the two highest-resolution injected self-attention
    /// maps (encoder and decoder side) are recorded into it.
    Tensor denoise(const Tensor& z_t, const Tensor& masked_model, const Tensor& mask_channel,
                   const Tensor& temb, const FeatureStack& ref, const Tensor& tokens,
                   AttentionMapSet* record = nullptr) const;

    ParamRegistry& params() { return reg_; }
    const ParamRegistry& params() const { return reg_; }
    const ModelConfig& config() const { return cfg_; }

private:
    ModelConfig cfg_;
    ParamRegistry reg_;

    TimeEmbed temb_;

    // denoiser
    Conv2d stem_, down1_, down2_;
    ResBlock enc0_, enc1_, enc2_, mid1_, mid2_;
    InjectedAttention attn_enc1_, attn_mid_, attn_dec1_;
    ResBlock dec2_, dec1_, dec0_;
    Conv2d up1_, up0_;
    GroupNorm out_norm_;
    Conv2d out_conv_;

    // reference branch (shared across halves); the bottleneck attention runs
    // over both halves jointly and the decoder carries the mixed context back
    // to full feature resolution for the mask head
    Conv2d r_stem_, r_down1_, r_down2_;
    ResBlock r_b0_, r_b1_, r_b2_;
    SelfAttention r_attn_;
    Conv2d r_up1_, r_up0_;
    ResBlock r_ub1_, r_ub0_;

    // ornament token encoder
    Conv2d e0_, e1_, e2_, e3_;

    // mask head
    Conv2d head_;

    void encode_half(const Tensor& rgb, const Tensor& mask_plane, const Tensor& temb,
                     std::array<Tensor, 3>& levels) const;
};

/// One pose-aware refinement iteration: predict from the current state's mask,
/// blend with the coarse box at alpha(progress), return the new state.
MaskState refine_step(const MaskState& state, const FeatureStack& features, float progress,
                      const AlphaSchedule& schedule, const TryonModel& model);

// Conversions between image-space data and model tensors.
Tensor image_batch_to_tensor(const std::vector<const Image*>& images, bool to_signed_range);
Tensor mask_to_tensor(const Image& soft_mask);
Image tensor_to_mask_image(const Tensor& t, int batch_index = 0);
Image tensor_to_image(const Tensor& t, int batch_index, bool from_signed_range);

}  // namespace ornatry
