// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#include "ornatry/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ornatry/errors.hpp"
#include "ornatry/gemm.hpp"
#include "ornatry/png_io.hpp"
#include "ornatry/rng.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace ornatry {

const char* archetype_name(Archetype a) {
    switch (a) {
        case Archetype::beaded_ring: return "beaded_ring";
        case Archetype::chain: return "chain";
        case Archetype::pendant: return "pendant";
        default: return "stud";
    }
}

Archetype archetype_from_name(const std::string& name) {
    for (Archetype a : {Archetype::beaded_ring, Archetype::chain, Archetype::pendant,
                        Archetype::stud})
        if (name == archetype_name(a)) return a;
    throw ParamError("unknown archetype: " + name);
}

const char* mask_kind_name(MaskKind k) {
    switch (k) {
        case MaskKind::bbox: return "bbox";
        case MaskKind::obb: return "obb";
        case MaskKind::hull: return "hull";
        default: return "gt";
    }
}

MaskKind mask_kind_from_name(const std::string& name) {
    for (MaskKind k : {MaskKind::bbox, MaskKind::obb, MaskKind::hull, MaskKind::gt})
        if (name == mask_kind_name(k)) return k;
    throw ParamError("unknown mask kind: " + name);
}

namespace {

constexpr float kPi = 3.14159265358979323846f;

float deg2rad(float d) { return d * kPi / 180.f; }

/// Deterministic per-pixel value noise in [0,1).
float pixel_noise(int x, int y, uint64_t seed) {
    uint64_t h = Rng::mix(seed, (static_cast<uint64_t>(static_cast<uint32_t>(x)) << 32) |
                                    static_cast<uint32_t>(y));
    return (h >> 11) * 0x1.0p-53f;
}

struct Disc {
    float x, y, r;
    std::array<float, 3> color;
};

/// Primitive layout for one ornament, in sprite coordinates centered at 0.
std::vector<Disc> ornament_primitives(const OrnamentSpec& spec, float ref_rotation_deg) {
    std::vector<Disc> discs;
    float size = static_cast<float>(spec.size_px);
    float rot = deg2rad(ref_rotation_deg);
    auto place = [&](float lx, float ly, float r, std::array<float, 3> c) {
        float ca = std::cos(rot), sa = std::sin(rot);
        discs.push_back({lx * ca - ly * sa, lx * sa + ly * ca, r, c});
    };
    int n = std::max(1, spec.component_count);
    switch (spec.archetype) {
        case Archetype::beaded_ring: {
            // solve bead radius against ring radius so gaps survive warping
            float rb = 0.16f * size;
            float rring = 0.f;
            for (int it = 0; it < 4; ++it) {
                rring = 0.5f * size - rb - 1.5f;
                float chord = 2.f * rring * std::sin(kPi / n);
                rb = std::min(0.36f * chord, 0.16f * size);
            }
            for (int k = 0; k < n; ++k) {
                float a = 2.f * kPi * k / n;
                place(rring * std::cos(a), rring * std::sin(a), rb,
                      (k % 2 == 0) ? spec.base_color : spec.accent_color);
            }
            break;
        }
        case Archetype::chain: {
            // discs along a shallow arc spanning most of the sprite
            float half_span = 0.42f * size;
            float arc_r = 1.15f * size;
            float r = std::min(0.36f * (2.f * half_span / std::max(1, n - 1)), 0.12f * size);
            for (int k = 0; k < n; ++k) {
                float t = n > 1 ? static_cast<float>(k) / (n - 1) : 0.5f;
                float lx = -half_span + 2.f * half_span * t;
                float ly = arc_r - std::sqrt(std::max(0.f, arc_r * arc_r - lx * lx));
                place(lx, ly - 0.08f * size, r,
                      (k % 2 == 0) ? spec.base_color : spec.accent_color);
            }
            break;
        }
        case Archetype::pendant: {
            // drop shape: overlapping discs so the silhouette stays one piece
            place(0.f, 0.10f * size, 0.26f * size, spec.base_color);
            place(0.f, -0.10f * size, 0.15f * size, spec.base_color);
            place(0.f, -0.24f * size, 0.09f * size, spec.base_color);
            place(0.f, 0.10f * size, 0.13f * size, spec.accent_color);
            break;
        }
        default: {  // stud
            place(0.f, 0.f, 0.30f * size, spec.base_color);
            place(0.f, 0.f, 0.15f * size, spec.accent_color);
            break;
        }
    }
    return discs;
}

float disc_coverage(const Disc& d, float px, float py) {
    float dist = std::sqrt((px - d.x) * (px - d.x) + (py - d.y) * (py - d.y));
    return std::clamp(d.r - dist + 0.5f, 0.f, 1.f);
}

struct Capsule {
    float x0, y0, x1, y1;  // axis segment
    float half_width;
    std::array<float, 3> color;
    float angle_deg;
};

float capsule_distance(const Capsule& c, float px, float py) {
    float vx = c.x1 - c.x0, vy = c.y1 - c.y0;
    float len2 = vx * vx + vy * vy;
    float t = len2 > 0 ? std::clamp(((px - c.x0) * vx + (py - c.y0) * vy) / len2, 0.f, 1.f) : 0.f;
    float dx = px - (c.x0 + t * vx), dy = py - (c.y0 + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

Image render_body(int res, const Capsule& cap, Rng& rng, uint64_t noise_seed) {
    auto c1v = hsv_to_rgb(static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform(0.05, 0.3)),
                          static_cast<float>(rng.uniform(0.2, 0.45)));
    auto c2v = hsv_to_rgb(static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform(0.05, 0.3)),
                          static_cast<float>(rng.uniform(0.2, 0.45)));
    Image img(res, res, 3);
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            float t = static_cast<float>(x + y) / (2 * res - 2);
            for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = c1v[ch] * (1 - t) + c2v[ch] * t;
        }
    // mild clutter blobs
    int blobs = 2 + static_cast<int>(rng.uniform_int(3));
    for (int i = 0; i < blobs; ++i) {
        float bx = static_cast<float>(rng.uniform(5, res - 5));
        float by = static_cast<float>(rng.uniform(5, res - 5));
        float br = static_cast<float>(rng.uniform(4, 10));
        auto bc = hsv_to_rgb(static_cast<float>(rng.uniform()),
                             static_cast<float>(rng.uniform(0.05, 0.3)),
                             static_cast<float>(rng.uniform(0.2, 0.5)));
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x) {
                float d = std::sqrt((x - bx) * (x - bx) + (y - by) * (y - by));
                float a = std::clamp((br - d + 0.5f) / br, 0.f, 1.f) * 0.5f;
                if (a <= 0) continue;
                for (int ch = 0; ch < 3; ++ch)
                    img.at(x, y, ch) = img.at(x, y, ch) * (1 - a) + bc[ch] * a;
            }
    }
    // textured capsule ("wrist")
    float axis = deg2rad(cap.angle_deg);
    float ux = std::cos(axis), uy = std::sin(axis);
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            float d = capsule_distance(cap, static_cast<float>(x), static_cast<float>(y));
            float a = std::clamp(cap.half_width - d + 0.5f, 0.f, 1.f);
            if (a <= 0) continue;
            float u = x * ux + y * uy;
            float shade = 0.92f + 0.08f * std::sin(u * 0.45f) - 0.25f * (d * d) /
                          (cap.half_width * cap.half_width);
            shade += 0.05f * (pixel_noise(x, y, noise_seed) - 0.5f);
            for (int ch = 0; ch < 3; ++ch) {
                float v = std::clamp(cap.color[ch] * (0.8f + 0.35f * shade), 0.f, 1.f);
                img.at(x, y, ch) = img.at(x, y, ch) * (1 - a) + v * a;
            }
        }
    return img;
}

}  // namespace

void render_ornament(const OrnamentSpec& spec, Image& image, Mask& mask) {
    if (spec.component_count < 1) throw ParamError("render_ornament: component_count must be >= 1");
    if (spec.size_px < 12 || spec.size_px > 60)
        throw ParamError("render_ornament: size_px outside [12, 60]");
    int res = 64;
    Rng rng(Rng::mix(spec.seed, 0x6f726e61ULL));
    float ref_rot = static_cast<float>(rng.uniform(0.0, 360.0));
    auto discs = ornament_primitives(spec, ref_rot);

    image = Image(res, res, 3, 0.85f);  // neutral backdrop
    mask = Mask(res, res);
    float cx = res / 2.f, cy = res / 2.f;
    for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
            float px = x - cx, py = y - cy;
            float total = 0.f;
            for (const Disc& d : discs) {
                float a = disc_coverage(d, px, py);
                if (a <= 0.f) continue;
                total = std::max(total, a);
                // off-center highlight plus rim falloff
                float dx = px - d.x, dy = py - d.y;
                float hd = ((dx + 0.35f * d.r) * (dx + 0.35f * d.r) +
                            (dy + 0.35f * d.r) * (dy + 0.35f * d.r)) /
                           (d.r * d.r);
                float shade = 0.72f + 0.55f * std::max(0.f, 1.f - hd);
                for (int ch = 0; ch < 3; ++ch) {
                    float v = std::clamp(d.color[ch] * shade, 0.f, 1.f);
                    image.at(x, y, ch) = image.at(x, y, ch) * (1 - a) + v * a;
                }
            }
            if (total >= 0.5f) mask.at(x, y) = 1;
        }
    }
}

void compose_worn(const Image& ornament_image, const Mask& ornament_mask, const Image& body,
                  const WearPose& pose, Image& target, Mask& wearing_mask) {
    if (pose.cx < 0 || pose.cy < 0 || pose.cx >= body.w || pose.cy >= body.h)
        throw ParamError("compose_worn: pose center outside the body image");
    if (pose.scale < 0.5f || pose.scale > 2.0f)
        throw ParamError("compose_worn: scale outside [0.5, 2.0]");
    if (pose.occlusion_fraction < 0.f || pose.occlusion_fraction > 0.5f)
        throw ParamError("compose_worn: occlusion_fraction outside [0, 0.5]");

    Affine fwd = Affine::rotation_scale_about(ornament_image.w / 2.f, ornament_image.h / 2.f,
                                              pose.rotation, pose.scale, pose.cx, pose.cy);
    Affine inv = fwd.inverse();

    Image soft = mask_to_image(ornament_mask);
    Image alpha(body.w, body.h, 1, 0.f);
    Image colors(body.w, body.h, 3, 0.f);
    std::vector<std::pair<float, int>> visible;  // (side distance, pixel index)
    float oa = deg2rad(pose.occlusion_angle);
    float nx = std::cos(oa), ny = std::sin(oa);
    for (int y = 0; y < body.h; ++y) {
        for (int x = 0; x < body.w; ++x) {
            float sx, sy;
            inv.apply(static_cast<float>(x), static_cast<float>(y), sx, sy);
            if (sx < -1 || sy < -1 || sx > ornament_image.w || sy > ornament_image.h) continue;
            float a = soft.sample_bilinear(sx, sy, 0);
            if (a <= 0.f) continue;
            alpha.at(x, y, 0) = a;
            for (int ch = 0; ch < 3; ++ch) colors.at(x, y, ch) = ornament_image.sample_bilinear(sx, sy, ch);
            if (a >= 0.5f)
                visible.emplace_back((x - pose.cx) * nx + (y - pose.cy) * ny, y * body.w + x);
        }
    }
    if (visible.empty()) throw ParamError("compose_worn: warped ornament fully outside the frame");

    // hide the far side behind the body: exact top-k along the side direction
    float cut = std::numeric_limits<float>::infinity();
    int k = static_cast<int>(std::lround(pose.occlusion_fraction * visible.size()));
    if (k > 0) {
        std::sort(visible.begin(), visible.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        cut = visible[k - 1].first;
    }

    target = body;
    wearing_mask = Mask(body.w, body.h);
    for (int y = 0; y < body.h; ++y) {
        for (int x = 0; x < body.w; ++x) {
            float a = alpha.at(x, y, 0);
            if (a <= 0.f) continue;
            float s = (x - pose.cx) * nx + (y - pose.cy) * ny;
            if (k > 0 && s >= cut) continue;  // behind the body part
            for (int ch = 0; ch < 3; ++ch)
                target.at(x, y, ch) = target.at(x, y, ch) * (1 - a) + colors.at(x, y, ch) * a;
            if (a >= 0.5f) wearing_mask.at(x, y) = 1;
        }
    }
}

Mask derive_input_mask(const Mask& wearing_mask, MaskKind kind, float jitter, uint64_t seed) {
    if (!wearing_mask.any()) throw ParamError("derive_input_mask: empty wearing mask");
    if (jitter < 0.f) throw ParamError("derive_input_mask: negative jitter");
    Rng rng(Rng::mix(seed, 0x6a697474ULL));
    Box bb = bounding_box(wearing_mask);
    int size = std::max(bb.w, bb.h);

    Mask out;
    switch (kind) {
        case MaskKind::bbox: {
            int ex0 = static_cast<int>(rng.uniform() * jitter * bb.w);
            int ex1 = static_cast<int>(rng.uniform() * jitter * bb.w);
            int ey0 = static_cast<int>(rng.uniform() * jitter * bb.h);
            int ey1 = static_cast<int>(rng.uniform() * jitter * bb.h);
            out = Mask(wearing_mask.w, wearing_mask.h);
            int x0 = std::max(0, bb.x - ex0), x1 = std::min(out.w - 1, bb.x + bb.w - 1 + ex1);
            int y0 = std::max(0, bb.y - ey0), y1 = std::min(out.h - 1, bb.y + bb.h - 1 + ey1);
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) out.at(x, y) = 1;
            break;
        }
        case MaskKind::obb: {
            out = fill_min_area_rect(wearing_mask);
            int r = static_cast<int>(rng.uniform() * jitter * size * 0.5);
            if (r > 0) out = dilate(out, r);
            break;
        }
        case MaskKind::hull: {
            out = fill_convex_hull(wearing_mask);
            int r = static_cast<int>(rng.uniform() * jitter * size * 0.5);
            if (r > 0) out = dilate(out, r);
            break;
        }
        default: {  // gt
            out = wearing_mask;
            int r = static_cast<int>(rng.uniform() * jitter * size * 0.5);
            if (r > 0) out = dilate(out, r);
            break;
        }
    }
    return out;
}

Image apply_neutral_fill(const Image& target, const Mask& input_mask) {
    Image out = target;
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
            if (input_mask.at(x, y))
                for (int ch = 0; ch < 3; ++ch) out.at(x, y, ch) = kNeutralFill;
    return out;
}

TryonTriplet generate_sample(const SynthConfig& cfg, int index) {
    int res = cfg.resolution;
    Rng spec_rng = sample_rng(cfg.master_seed, index).fork(1);
    Rng body_rng = sample_rng(cfg.master_seed, index).fork(2);
    Rng pose_rng = sample_rng(cfg.master_seed, index).fork(3);

    TryonTriplet t;
    OrnamentSpec& spec = t.meta.spec;
    spec.archetype = static_cast<Archetype>(index % 4);
    switch (spec.archetype) {
        case Archetype::beaded_ring: spec.component_count = 4 + static_cast<int>(spec_rng.uniform_int(5)); break;
        case Archetype::chain: spec.component_count = 3 + static_cast<int>(spec_rng.uniform_int(5)); break;
        default: spec.component_count = 1; break;
    }
    // saturated ornament colors away from skin tones keep the identity metrics sharp
    float base_h = static_cast<float>(spec_rng.uniform(0.13, 0.97));
    spec.base_color = hsv_to_rgb(base_h, static_cast<float>(spec_rng.uniform(0.75, 1.0)),
                                 static_cast<float>(spec_rng.uniform(0.8, 1.0)));
    float accent_h = base_h + static_cast<float>(spec_rng.uniform(0.2, 0.8));
    spec.accent_color = hsv_to_rgb(accent_h, static_cast<float>(spec_rng.uniform(0.75, 1.0)),
                                   static_cast<float>(spec_rng.uniform(0.8, 1.0)));
    spec.size_px = 34 + static_cast<int>(spec_rng.uniform_int(11));
    spec.seed = Rng::mix(cfg.master_seed, static_cast<uint64_t>(index));

    render_ornament(spec, t.reference_image, t.reference_mask);
    if (res != t.reference_image.w) {
        t.reference_image = resize_bilinear(t.reference_image, res, res);
        Image m = resize_bilinear(mask_to_image(t.reference_mask), res, res);
        t.reference_mask = image_to_mask(m);
    }

    Capsule cap;
    cap.angle_deg = static_cast<float>(body_rng.uniform(-50, 50));
    float mid_x = res / 2.f + static_cast<float>(body_rng.uniform(-5, 5));
    float mid_y = res / 2.f + static_cast<float>(body_rng.uniform(-5, 5));
    float ax = std::cos(deg2rad(cap.angle_deg)), ay = std::sin(deg2rad(cap.angle_deg));
    cap.x0 = mid_x - ax * res;
    cap.y0 = mid_y - ay * res;
    cap.x1 = mid_x + ax * res;
    cap.y1 = mid_y + ay * res;
    cap.half_width = static_cast<float>(body_rng.uniform(9, 13));
    cap.color = {0.72f + static_cast<float>(body_rng.uniform(-0.06, 0.06)),
                 0.58f + static_cast<float>(body_rng.uniform(-0.06, 0.06)),
                 0.47f + static_cast<float>(body_rng.uniform(-0.06, 0.06))};
    Image body = render_body(res, cap, body_rng, Rng::mix(spec.seed, 0xb0d7ULL));

    WearPose& pose = t.meta.pose;
    for (int attempt = 0;; ++attempt) {
        float along = static_cast<float>(pose_rng.uniform(-0.12, 0.12)) * res;
        pose.cx = mid_x + ax * along + static_cast<float>(pose_rng.uniform(-2, 2));
        pose.cy = mid_y + ay * along + static_cast<float>(pose_rng.uniform(-2, 2));
        pose.rotation = cap.angle_deg + 90.f + static_cast<float>(pose_rng.uniform(-5, 5));
        float target_size = static_cast<float>(pose_rng.uniform(33, 42));
        pose.scale = std::clamp(target_size / spec.size_px, 0.8f, 1.3f);
        pose.occlusion_fraction =
            pose_rng.uniform() < 0.5 ? 0.f : static_cast<float>(pose_rng.uniform(0.1, 0.4));
        pose.occlusion_angle = cap.angle_deg + (pose_rng.uniform() < 0.5 ? 90.f : -90.f);

        // pose margin vs the reference render: no copy-paste shortcut
        float rot_mod = std::fmod(std::fabs(pose.rotation), 360.f);
        float circ = std::min(rot_mod, 360.f - rot_mod);
        bool margin = circ >= 15.f || pose.scale >= 1.2f || pose.scale <= 1.f / 1.2f;
        if (!margin && attempt < 16) continue;
        if (!margin) pose.scale = 1.25f;

        try {
            compose_worn(t.reference_image, t.reference_mask, body, pose, t.target_image,
                         t.wearing_mask);
        } catch (const ParamError&) {
            if (attempt > 24) throw;
            continue;
        }
        Box bb = bounding_box(t.wearing_mask);
        bool inside = bb.x >= 1 && bb.y >= 1 && bb.x + bb.w <= res - 1 && bb.y + bb.h <= res - 1;
        if (t.wearing_mask.count() >= 40 && inside) break;
        if (attempt > 24) break;
    }

    t.meta.id = index;
    t.meta.target_component_count = count_components(t.wearing_mask, kMinComponentArea);
    t.input_mask = derive_input_mask(t.wearing_mask, cfg.mask_kind, cfg.jitter,
                                     Rng::mix(spec.seed, 0x696eULL));
    t.masked_model_image = apply_neutral_fill(t.target_image, t.input_mask);
    return t;
}

namespace {

std::string sample_file(int id, const char* part) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "sample_%05d_%s.png", id, part);
    return buf;
}

ordered_json meta_to_json(const TripletMeta& m) {
    ordered_json j;
    j["id"] = m.id;
    j["archetype"] = archetype_name(m.spec.archetype);
    j["component_count"] = m.spec.component_count;
    j["target_component_count"] = m.target_component_count;
    j["base_color"] = m.spec.base_color;
    j["accent_color"] = m.spec.accent_color;
    j["size_px"] = m.spec.size_px;
    j["seed"] = m.spec.seed;
    j["pose"] = {{"cx", m.pose.cx},
                 {"cy", m.pose.cy},
                 {"rotation", m.pose.rotation},
                 {"scale", m.pose.scale},
                 {"occlusion_fraction", m.pose.occlusion_fraction},
                 {"occlusion_angle", m.pose.occlusion_angle}};
    return j;
}

TripletMeta meta_from_json(const ordered_json& j) {
    TripletMeta m;
    m.id = j.at("id").get<int>();
    m.spec.archetype = archetype_from_name(j.at("archetype").get<std::string>());
    m.spec.component_count = j.at("component_count").get<int>();
    m.target_component_count = j.at("target_component_count").get<int>();
    auto bc = j.at("base_color");
    auto ac = j.at("accent_color");
    for (int i = 0; i < 3; ++i) {
        m.spec.base_color[i] = bc.at(i).get<float>();
        m.spec.accent_color[i] = ac.at(i).get<float>();
    }
    m.spec.size_px = j.at("size_px").get<int>();
    m.spec.seed = j.at("seed").get<uint64_t>();
    const auto& p = j.at("pose");
    m.pose.cx = p.at("cx").get<float>();
    m.pose.cy = p.at("cy").get<float>();
    m.pose.rotation = p.at("rotation").get<float>();
    m.pose.scale = p.at("scale").get<float>();
    m.pose.occlusion_fraction = p.at("occlusion_fraction").get<float>();
    m.pose.occlusion_angle = p.at("occlusion_angle").get<float>();
    return m;
}

}  // namespace

DatasetManifest build_dataset(int n, const SynthConfig& cfg, const std::string& out_dir) {
    if (n < 1) throw ParamError("build_dataset: n must be >= 1");
    fs::path dir(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("build_dataset: cannot create " + out_dir);

    DatasetManifest m;
    m.dir = out_dir;
    m.resolution = cfg.resolution;
    m.master_seed = cfg.master_seed;
    m.mask_kind = cfg.mask_kind;
    m.jitter = cfg.jitter;

    std::vector<std::string> written;
    try {
        // samples derive their randomness from (master_seed, index), so the
        // parallel generation below is bit-identical to a serial loop
        std::vector<TryonTriplet> triplets(n);
        parallel_for(n, [&](int64_t lo, int64_t hi) {
            for (int64_t i = lo; i < hi; ++i) triplets[i] = generate_sample(cfg, static_cast<int>(i));
        });
        for (int i = 0; i < n; ++i) {
            TryonTriplet& t = triplets[i];
            DatasetManifest::SampleRecord rec;
            rec.meta = t.meta;
            rec.reference = sample_file(i, "reference");
            rec.reference_mask = sample_file(i, "reference_mask");
            rec.masked_model = sample_file(i, "masked_model");
            rec.target = sample_file(i, "target");
            rec.wearing_mask = sample_file(i, "wearing_mask");
            rec.input_mask = sample_file(i, "input_mask");
            auto put = [&](const std::string& name, auto&& img) {
                std::string p = (dir / name).string();
                write_png(p, img);
                written.push_back(p);
            };
            put(rec.reference, t.reference_image);
            put(rec.reference_mask, t.reference_mask);
            put(rec.masked_model, t.masked_model_image);
            put(rec.target, t.target_image);
            put(rec.wearing_mask, t.wearing_mask);
            put(rec.input_mask, t.input_mask);
            m.histogram[static_cast<int>(t.meta.spec.archetype)]++;
            m.samples.push_back(std::move(rec));
        }
        save_manifest(m, (dir / "manifest.json").string());
    } catch (...) {
        for (const auto& p : written) fs::remove(p, ec);
        fs::remove(dir / "manifest.json", ec);
        throw;
    }
    return m;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
    ordered_json j;
    j["version"] = m.version;
    j["resolution"] = m.resolution;
    j["master_seed"] = m.master_seed;
    j["mask_kind"] = mask_kind_name(m.mask_kind);
    j["jitter"] = m.jitter;
    j["n"] = m.samples.size();
    ordered_json hist;
    for (int a = 0; a < 4; ++a) hist[archetype_name(static_cast<Archetype>(a))] = m.histogram[a];
    j["histogram"] = hist;
    ordered_json samples = ordered_json::array();
    for (const auto& s : m.samples) {
        ordered_json e = meta_to_json(s.meta);
        e["files"] = {{"reference", s.reference},
                      {"reference_mask", s.reference_mask},
                      {"masked_model", s.masked_model},
                      {"target", s.target},
                      {"wearing_mask", s.wearing_mask},
                      {"input_mask", s.input_mask}};
        samples.push_back(std::move(e));
    }
    j["samples"] = std::move(samples);
    std::ofstream f(path);
    if (!f) throw IoError("save_manifest: cannot open " + path);
    f << j.dump(1) << "\n";
    if (!f) throw IoError("save_manifest: write failed: " + path);
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("load_manifest: cannot open " + path);
    ordered_json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw IoError(std::string("load_manifest: bad JSON: ") + e.what());
    }
    DatasetManifest m;
    m.version = j.at("version").get<std::string>();
    m.dir = fs::path(path).parent_path().string();
    m.resolution = j.at("resolution").get<int>();
    m.master_seed = j.at("master_seed").get<uint64_t>();
    m.mask_kind = mask_kind_from_name(j.at("mask_kind").get<std::string>());
    m.jitter = j.at("jitter").get<float>();
    for (int a = 0; a < 4; ++a)
        m.histogram[a] = j.at("histogram").at(archetype_name(static_cast<Archetype>(a))).get<int>();
    int count_check = 0;
    for (const auto& e : j.at("samples")) {
        DatasetManifest::SampleRecord rec;
        rec.meta = meta_from_json(e);
        const auto& files = e.at("files");
        rec.reference = files.at("reference").get<std::string>();
        rec.reference_mask = files.at("reference_mask").get<std::string>();
        rec.masked_model = files.at("masked_model").get<std::string>();
        rec.target = files.at("target").get<std::string>();
        rec.wearing_mask = files.at("wearing_mask").get<std::string>();
        rec.input_mask = files.at("input_mask").get<std::string>();
        for (const std::string* p : {&rec.reference, &rec.reference_mask, &rec.masked_model,
                                     &rec.target, &rec.wearing_mask, &rec.input_mask})
            if (!fs::exists(fs::path(m.dir) / *p))
                throw IoError("load_manifest: missing file " + *p);
        m.samples.push_back(std::move(rec));
        ++count_check;
    }
    int hist_total = m.histogram[0] + m.histogram[1] + m.histogram[2] + m.histogram[3];
    if (hist_total != count_check)
        throw IoError("load_manifest: histogram does not match sample count");
    return m;
}

TryonTriplet load_triplet(const DatasetManifest& m, int index) {
    return load_triplet(m, index, m.mask_kind);
}

TryonTriplet load_triplet(const DatasetManifest& m, int index, MaskKind kind_override) {
    const auto& rec = m.samples.at(index);
    fs::path dir(m.dir);
    TryonTriplet t;
    t.meta = rec.meta;
    t.reference_image = read_png((dir / rec.reference).string());
    t.reference_mask = read_png_mask((dir / rec.reference_mask).string());
    t.target_image = read_png((dir / rec.target).string());
    t.wearing_mask = read_png_mask((dir / rec.wearing_mask).string());
    if (kind_override == m.mask_kind) {
        t.input_mask = read_png_mask((dir / rec.input_mask).string());
        t.masked_model_image = read_png((dir / rec.masked_model).string());
    } else {
        t.input_mask = derive_input_mask(t.wearing_mask, kind_override, m.jitter,
                                         Rng::mix(rec.meta.spec.seed, 0x696eULL));
        t.masked_model_image = apply_neutral_fill(t.target_image, t.input_mask);
    }
    return t;
}

}  // namespace ornatry
