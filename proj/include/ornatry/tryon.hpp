// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ornatry/synthgen.hpp"
#include "ornatry/trainkit.hpp"

namespace ornatry {

/// Square crop window in model-image coordinates.
struct CropRegion {
    int x = 0, y = 0, side = 0;
    float scale_factor = 1.5f;
};

/// Square region of side scale_factor x max(bbox dims), centered on the bbox,
/// clamped into the image.
CropRegion compute_crop_region(int image_w, int image_h, const Box& bbox,
                               float scale_factor = 1.5f);

/// Crop + resample to the model resolution. Enlargements use nearest-neighbor
/// sampling (exactly invertible by paste_back); reductions use area averaging.
std::pair<Image, CropRegion> prepare_crop(const Image& model_image, const Box& bbox,
                                          int resolution, float scale_factor = 1.5f);

/// Resample the generated crop into the region. Every pixel outside the
/// region is byte-identical to the original.
Image paste_back(const Image& generated, const Image& original, const CropRegion& region);

struct TryonResult {
    Image final_image;      // model-image coordinates
    Image predicted_mask;   // model-image coordinates, soft [0,1]
    Image crop_generated;   // generation-resolution crop
    CropRegion region;
    std::vector<Image> mask_trajectory;  // crop space, one per denoising step
};

/// Full inference pipeline: crop around the user box, conditional sampling
/// with per-step mask refinement, paste back.
TryonResult tryon(const Image& model_image, const Image& ornament_image, const Box& bbox,
                  const Checkpoint& ckpt, int steps, uint64_t seed,
                  const std::optional<Mask>& ornament_mask = std::nullopt);

struct EvalOptions {
    std::optional<MaskKind> mask_kind;  // nullopt -> manifest kind
    int steps = 50;
    uint64_t seed = 0;
    int max_samples = 0;        // 0 -> all validation samples
    bool use_ground_truth = false;  // oracle mode: score the target images themselves
    bool keep_trajectories = false;
    std::vector<int> indices;   // explicit sample set; empty -> validation tail
};

struct SampleEval {
    int id = 0;
    std::string archetype;
    double mask_iou = 0;
    int component_count = 0;
    int target_component_count = 0;
    double component_accuracy = 0;  // 1 if counts match else 0
    double color_identity = 0;
    double mask_containment = 0;  // predicted-mask mass inside the dilated input region
    std::vector<double> iou_trajectory;
};

struct EvalReport {
    std::vector<SampleEval> per_sample;
    double mean_mask_iou = 0;
    double mean_component_accuracy = 0;
    double mean_component_accuracy_beaded_chain = 0;
    double mean_color_identity = 0;
    double mean_mask_containment = 0;
    int n_samples = 0;
    uint64_t config_hash = 0;

    std::string to_json() const;
    std::string render_text() const;
};

EvalReport evaluate(const DatasetManifest& manifest, const Checkpoint& ckpt,
                    const EvalOptions& opts);

/// Color-distance segmentation of the ornament region inside `region`,
/// thresholded at 0.5 against the local background ring.
Mask segment_ornament(const Image& image, const Mask& region);

/// Histogram intersection (16 bins per channel) between the two images over
/// their respective regions.
double color_identity(const Image& a, const Mask& region_a, const Image& b, const Mask& region_b);

// ---- ablation runner ------------------------------------------------------

struct AblationSpec {
    std::string name;
    TrainConfig train;
};

struct AblationRow {
    std::string name;
    bool ok = false;
    std::string error;
    EvalReport report;
};

struct AblationTable {
    std::vector<AblationRow> rows;
    std::string to_json() const;
    std::string render_text() const;
};

/// Train under work_dir/<name>, or reuse the checkpoint already there when its
/// embedded config matches. Returns the checkpoint path.
std::string ensure_checkpoint(const DatasetManifest& manifest, const AblationSpec& spec,
                              const std::string& work_dir);

/// Train (or reuse a cached checkpoint whose embedded config matches) and
/// evaluate each configuration. Failures are recorded as row markers instead
/// of aborting the table.
AblationTable ablate(const DatasetManifest& manifest, const std::vector<AblationSpec>& configs,
                     const std::string& work_dir, const EvalOptions& eval_opts);

/// Input-mask ladder on a fixed checkpoint: evaluate with each mask kind.
AblationTable mask_ladder(const DatasetManifest& manifest, const Checkpoint& ckpt,
                          const EvalOptions& eval_opts);

/// Qualitative grid: reference | masked model | prediction | target | mask.
Image review_grid(const TryonTriplet& t, const Image& prediction, const Image& predicted_mask);

}  // namespace ornatry
