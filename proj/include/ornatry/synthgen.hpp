// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ornatry/image.hpp"

namespace ornatry {

enum class Archetype { beaded_ring, chain, pendant, stud };
const char* archetype_name(Archetype a);
Archetype archetype_from_name(const std::string& name);

enum class MaskKind { bbox, obb, hull, gt };
const char* mask_kind_name(MaskKind k);
MaskKind mask_kind_from_name(const std::string& name);

struct OrnamentSpec {
    Archetype archetype = Archetype::stud;
    int component_count = 1;
    std::array<float, 3> base_color{0.8f, 0.2f, 0.2f};
    std::array<float, 3> accent_color{0.9f, 0.8f, 0.3f};
    int size_px = 40;  // bounding diameter in pixels
    uint64_t seed = 0;
};

struct WearPose {
    float cx = 32.f, cy = 32.f;  // center, pixels
    float rotation = 0.f;        // degrees, relative to the reference render
    float scale = 1.f;
    float occlusion_fraction = 0.f;  // in [0, 0.5]
    float occlusion_angle = 90.f;    // direction (degrees) of the hidden side
};

struct TripletMeta {
    int id = 0;
    OrnamentSpec spec;
    WearPose pose;
    int target_component_count = 0;  // visible components in the wearing mask
};

struct TryonTriplet {
    Image reference_image;
    Mask reference_mask;
    Image masked_model_image;
    Image target_image;
    Mask wearing_mask;
    Mask input_mask;
    TripletMeta meta;
};

struct SynthConfig {
    int resolution = 64;
    uint64_t master_seed = 0;
    MaskKind mask_kind = MaskKind::bbox;
    float jitter = 0.15f;
};

struct DatasetManifest {
    std::string version = "1";
    std::string dir;
    int resolution = 64;
    uint64_t master_seed = 0;
    MaskKind mask_kind = MaskKind::bbox;
    float jitter = 0.15f;

    struct SampleRecord {
        TripletMeta meta;
        std::string reference, reference_mask, masked_model, target, wearing_mask, input_mask;
    };
    std::vector<SampleRecord> samples;
    std::array<int, 4> histogram{};  // per archetype
};

/// Component counting convention shared by the generator metadata and the
/// evaluator: 8-connectivity, speckles under this area ignored.
inline constexpr int kMinComponentArea = 4;

/// Deterministic sprite render: ornament on a neutral background plus its
/// binary silhouette. Identical spec -> bit-identical output.
void render_ornament(const OrnamentSpec& spec, Image& image, Mask& mask);

/// Affine-warp the rendered ornament onto the body image at the given pose;
/// pixels on the pose's far side are hidden behind the body until the
/// requested occlusion fraction is reached. Returns the composed target and
/// the visible-pixel wearing mask.
void compose_worn(const Image& ornament_image, const Mask& ornament_mask, const Image& body,
                  const WearPose& pose, Image& target, Mask& wearing_mask);

/// Enclosing region of the requested kind, optionally expanded by up to
/// jitter x size (deterministic via seed). Always a superset of the input for
/// jitter >= 0.
Mask derive_input_mask(const Mask& wearing_mask, MaskKind kind, float jitter, uint64_t seed = 0);

/// Full procedural sample: background + textured body capsule + worn ornament.
TryonTriplet generate_sample(const SynthConfig& cfg, int index);

/// Generate n triplets under out_dir with a JSON manifest. Roughly even
/// archetype split (round-robin). Partial output is removed on failure.
DatasetManifest build_dataset(int n, const SynthConfig& cfg, const std::string& out_dir);

DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& m, const std::string& path);

/// Load one sample. When kind_override differs from the manifest's stored
/// kind, input_mask and masked_model_image are re-derived from the stored
/// wearing mask and target (same per-sample jitter stream).
TryonTriplet load_triplet(const DatasetManifest& m, int index);
TryonTriplet load_triplet(const DatasetManifest& m, int index, MaskKind kind_override);

/// Neutral fill applied inside the input mask of masked model images.
inline constexpr float kNeutralFill = 0.5f;

Image apply_neutral_fill(const Image& target, const Mask& input_mask);

}  // namespace ornatry
