// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace ornatry {

/// Float image, interleaved row-major (HWC), values nominally in [0,1].
struct Image {
    int w = 0, h = 0, c = 0;
    std::vector<float> px;

    Image() = default;
    Image(int w, int h, int c, float fill = 0.f)
        : w(w), h(h), c(c), px(static_cast<size_t>(w) * h * c, fill) {}

    float& at(int x, int y, int ch) { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
    float at(int x, int y, int ch) const { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
    size_t size() const { return px.size(); }
    bool empty() const { return px.empty(); }

    /// Bilinear sample at continuous coords (border-clamped). x,y in pixel units.
    float sample_bilinear(float x, float y, int ch) const;
};

/// Binary mask, 0/1 per pixel, row-major.
struct Mask {
    int w = 0, h = 0;
    std::vector<uint8_t> px;

    Mask() = default;
    Mask(int w, int h, uint8_t fill = 0) : w(w), h(h), px(static_cast<size_t>(w) * h, fill) {}

    uint8_t& at(int x, int y) { return px[static_cast<size_t>(y) * w + x]; }
    uint8_t at(int x, int y) const { return px[static_cast<size_t>(y) * w + x]; }
    size_t count() const;
    bool empty_mask() const { return count() == 0; }
    bool any() const { return !empty_mask(); }
};

struct Box {
    int x = 0, y = 0, w = 0, h = 0;
    bool empty() const { return w <= 0 || h <= 0; }
};

// ---- conversions -----------------------------------------------------------

Image mask_to_image(const Mask& m);
Mask image_to_mask(const Image& img, float threshold = 0.5f, int channel = 0);

// ---- resampling ------------------------------------------------------------

/// Bilinear resize with align_corners=true sampling.
Image resize_bilinear(const Image& src, int out_w, int out_h);

/// Nearest-neighbor resize (floor mapping). An enlargement followed by the
/// matching shrink recovers the source bit-exactly, which the crop/paste
/// pipeline relies on.
Image resize_nearest(const Image& src, int out_w, int out_h);

/// Box-filter (area-average) downsample; exact for integer ratios.
Image downsample_area(const Image& src, int out_w, int out_h);

// ---- mask geometry ---------------------------------------------------------

/// 8-connectivity component labelling. Returns label map (0 = background,
/// labels 1..n) and sets n_components.
std::vector<int> label_components(const Mask& m, int& n_components);
int count_components(const Mask& m, int min_area = 1);

Box bounding_box(const Mask& m);

/// Convex hull of mask pixel centers (monotone chain), as polygon vertices.
std::vector<std::array<float, 2>> convex_hull_points(const Mask& m);

/// Filled convex hull; always a superset of the input mask.
Mask fill_convex_hull(const Mask& m);

/// Minimum-area oriented bounding rectangle (rotating calipers over the hull),
/// rasterized; superset of the input mask.
Mask fill_min_area_rect(const Mask& m);

Mask dilate(const Mask& m, int radius);

double mask_iou(const Mask& a, const Mask& b);

/// IoU where the prediction is a soft [0,1] single-channel image, binarized at
/// the given threshold first.
double mask_iou_soft(const Image& pred, const Mask& gt, float threshold = 0.5f);

// ---- compositing & warping -------------------------------------------------

/// 2x2 affine + translation: dst(x,y) <- src(a*x + b*y + tx, c*x + d*y + ty).
struct Affine {
    float a = 1, b = 0, tx = 0;
    float c = 0, d = 1, ty = 0;

    static Affine rotation_scale_about(float cx_src, float cy_src, float deg, float scale,
                                       float cx_dst, float cy_dst);
    Affine inverse() const;
    void apply(float x, float y, float& ox, float& oy) const;
};

/// Warp an RGBA-style (image + soft alpha from mask) sprite onto dst with the
/// inverse-mapped bilinear sampling of `fwd` (dst -> src is fwd.inverse()).
/// Returns the warped soft alpha in out_alpha (same size as dst).
void warp_composite(Image& dst, const Image& sprite, const Mask& sprite_mask, const Affine& fwd,
                    Image& out_alpha);

// ---- misc ------------------------------------------------------------------

std::array<float, 3> hsv_to_rgb(float h, float s, float v);

/// Quantize float [0,1] to the stored byte value, matching PNG I/O rounding.
inline uint8_t to_byte(float v) {
    float x = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
    return static_cast<uint8_t>(x * 255.f + 0.5f);
}

}  // namespace ornatry
