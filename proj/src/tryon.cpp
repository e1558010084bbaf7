// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#include "ornatry/tryon.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ornatry/errors.hpp"
#include "ornatry/rng.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace ornatry {

CropRegion compute_crop_region(int image_w, int image_h, const Box& bbox, float scale_factor) {
    if (bbox.empty()) throw ParamError("compute_crop_region: empty bbox");
    if (bbox.x < 0 || bbox.y < 0 || bbox.x + bbox.w > image_w || bbox.y + bbox.h > image_h)
        throw ParamError("compute_crop_region: bbox outside the image");
    int side = static_cast<int>(std::lround(scale_factor * std::max(bbox.w, bbox.h)));
    side = std::min(side, std::min(image_w, image_h));
    side = std::max(side, 1);
    int cx = bbox.x + bbox.w / 2, cy = bbox.y + bbox.h / 2;
    CropRegion r;
    r.side = side;
    r.scale_factor = scale_factor;
    r.x = std::clamp(cx - side / 2, 0, image_w - side);
    r.y = std::clamp(cy - side / 2, 0, image_h - side);
    return r;
}

namespace {

Image crop_image(const Image& img, const CropRegion& r) {
    Image out(r.side, r.side, img.c);
    for (int y = 0; y < r.side; ++y)
        for (int x = 0; x < r.side; ++x)
            for (int c = 0; c < img.c; ++c) out.at(x, y, c) = img.at(r.x + x, r.y + y, c);
    return out;
}

}  // namespace

std::pair<Image, CropRegion> prepare_crop(const Image& model_image, const Box& bbox,
                                          int resolution, float scale_factor) {
    CropRegion region = compute_crop_region(model_image.w, model_image.h, bbox, scale_factor);
    Image crop = crop_image(model_image, region);
    Image resampled = region.side <= resolution ? resize_nearest(crop, resolution, resolution)
                                                : downsample_area(crop, resolution, resolution);
    return {std::move(resampled), region};
}

Image paste_back(const Image& generated, const Image& original, const CropRegion& region) {
    if (region.side <= 0 || region.x < 0 || region.y < 0 ||
        region.x + region.side > original.w || region.y + region.side > original.h)
        throw ParamError("paste_back: region outside the original image");
    if (generated.c != original.c) throw ParamError("paste_back: channel mismatch");
    Image patch = region.side <= generated.w
                      ? resize_nearest(generated, region.side, region.side)
                      : resize_bilinear(generated, region.side, region.side);
    Image out = original;
    for (int y = 0; y < region.side; ++y)
        for (int x = 0; x < region.side; ++x)
            for (int c = 0; c < original.c; ++c)
                out.at(region.x + x, region.y + y, c) = patch.at(x, y, c);
    return out;
}

TryonResult tryon(const Image& model_image, const Image& ornament_image, const Box& bbox,
                  const Checkpoint& ckpt, int steps, uint64_t seed,
                  const std::optional<Mask>& ornament_mask) {
    const TrainConfig& cfg = ckpt.config;
    int res = cfg.resolution;

    auto [crop, region] = prepare_crop(model_image, bbox, res, 1.5f);

    // the user's box, mapped into crop coordinates
    Mask box_mask(res, res);
    float sx = static_cast<float>(res) / region.side;
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            float gx = region.x + (x + 0.5f) / sx;
            float gy = region.y + (y + 0.5f) / sx;
            if (gx >= bbox.x && gx < bbox.x + bbox.w && gy >= bbox.y && gy < bbox.y + bbox.h)
                box_mask.at(x, y) = 1;
        }
    if (!box_mask.any()) throw ParamError("tryon: bbox does not intersect the crop");

    Image ornament = ornament_image.w == res && ornament_image.h == res
                         ? ornament_image
                         : resize_bilinear(ornament_image, res, res);

    SampleConditioning cond;
    cond.ornament = ornament;
    if (ornament_mask) {
        cond.ornament_mask = *ornament_mask;
    } else {
        // sprites sit on a near-uniform backdrop: strongest-distance threshold
        Mask m(res, res);
        std::array<float, 3> corner{ornament.at(0, 0, 0), ornament.at(0, 0, 1),
                                    ornament.at(0, 0, 2)};
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x) {
                float d = 0;
                for (int c = 0; c < 3; ++c) {
                    float dd = ornament.at(x, y, c) - corner[c];
                    d += dd * dd;
                }
                m.at(x, y) = std::sqrt(d) > 0.12f ? 1 : 0;
            }
        cond.ornament_mask = m;
    }
    cond.masked_model = apply_neutral_fill(crop, box_mask);
    cond.box_mask = box_mask;

    NoiseSchedule sched = make_schedule(cfg.timesteps, cfg.beta_min, cfg.beta_max,
                                        cfg.schedule_shape);
    SampleResult s = sample(*ckpt.model, sched, cond, steps, seed, cfg.alpha,
                            cfg.mask_refinement);

    TryonResult out;
    out.crop_generated = s.image;
    out.region = region;
    out.mask_trajectory = std::move(s.mask_trajectory);
    out.final_image = paste_back(s.image, model_image, region);

    // map the refined mask back to model-image coordinates
    Image mask_patch = region.side <= res ? resize_nearest(s.final_mask, region.side, region.side)
                                          : resize_bilinear(s.final_mask, region.side, region.side);
    Image full_mask(model_image.w, model_image.h, 1, 0.f);
    for (int y = 0; y < region.side; ++y)
        for (int x = 0; x < region.side; ++x)
            full_mask.at(region.x + x, region.y + y, 0) = mask_patch.at(x, y, 0);
    out.predicted_mask = full_mask;
    return out;
}

// ---- metrics ----------------------------------------------------------------

Mask segment_ornament(const Image& image, const Mask& region) {
    if (image.w != region.w || image.h != region.h)
        throw ParamError("segment_ornament: size mismatch");
    // local background: mean color over a ring just outside the region
    Mask ring = dilate(region, 3);
    double bg[3] = {0, 0, 0};
    size_t n = 0;
    for (int y = 0; y < image.h; ++y)
        for (int x = 0; x < image.w; ++x)
            if (ring.at(x, y) && !region.at(x, y)) {
                for (int c = 0; c < 3; ++c) bg[c] += image.at(x, y, c);
                ++n;
            }
    if (n == 0) {  // region covers everything; fall back to the global mean
        for (int y = 0; y < image.h; ++y)
            for (int x = 0; x < image.w; ++x)
                for (int c = 0; c < 3; ++c) bg[c] += image.at(x, y, c);
        n = static_cast<size_t>(image.w) * image.h;
    }
    for (double& v : bg) v /= static_cast<double>(n);

    Mask out(image.w, image.h);
    for (int y = 0; y < image.h; ++y)
        for (int x = 0; x < image.w; ++x) {
            if (!region.at(x, y)) continue;
            double d = 0;
            for (int c = 0; c < 3; ++c) {
                double dd = image.at(x, y, c) - bg[c];
                d += dd * dd;
            }
            float score = std::min(1.f, static_cast<float>(std::sqrt(d) / 0.5));
            if (score >= 0.5f) out.at(x, y) = 1;
        }
    return out;
}

double color_identity(const Image& a, const Mask& region_a, const Image& b,
                      const Mask& region_b) {
    constexpr int kBins = 16;
    auto histogram = [](const Image& img, const Mask& region) {
        std::array<std::array<double, kBins>, 3> h{};
        size_t n = 0;
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) {
                if (!region.at(x, y)) continue;
                ++n;
                for (int c = 0; c < 3; ++c) {
                    int bin = std::min(kBins - 1,
                                       static_cast<int>(img.at(x, y, c) * kBins));
                    h[c][bin] += 1.0;
                }
            }
        if (n)
            for (auto& ch : h)
                for (double& v : ch) v /= static_cast<double>(n);
        return h;
    };
    if (region_a.count() == 0 || region_b.count() == 0) return 0.0;
    auto ha = histogram(a, region_a);
    auto hb = histogram(b, region_b);
    double score = 0;
    for (int c = 0; c < 3; ++c) {
        double inter = 0;
        for (int k = 0; k < kBins; ++k) inter += std::min(ha[c][k], hb[c][k]);
        score += inter;
    }
    return score / 3.0;
}

// ---- evaluation ----------------------------------------------------------------

EvalReport evaluate(const DatasetManifest& manifest, const Checkpoint& ckpt,
                    const EvalOptions& opts) {
    const TrainConfig& cfg = ckpt.config;
    MaskKind kind = opts.mask_kind.value_or(manifest.mask_kind);

    std::vector<int> ids = opts.indices;
    if (ids.empty()) {
        ids = validation_indices(manifest, cfg.val_count);
        if (opts.max_samples > 0 && static_cast<int>(ids.size()) > opts.max_samples)
            ids.resize(opts.max_samples);
    }
    if (ids.empty()) throw ParamError("evaluate: no samples selected");

    NoiseSchedule sched = make_schedule(cfg.timesteps, cfg.beta_min, cfg.beta_max,
                                        cfg.schedule_shape);

    EvalReport report;
    report.config_hash = config_hash(cfg);
    for (int id : ids) {
        TryonTriplet t = load_triplet(manifest, id, kind);
        SampleEval se;
        se.id = id;
        se.archetype = archetype_name(t.meta.spec.archetype);
        se.target_component_count = t.meta.target_component_count;

        Image output;
        Image pred_mask_soft;
        if (opts.use_ground_truth) {
            output = t.target_image;
            pred_mask_soft = mask_to_image(t.wearing_mask);
        } else {
            SampleConditioning cond;
            cond.ornament = t.reference_image;
            cond.ornament_mask = t.reference_mask;
            cond.masked_model = t.masked_model_image;
            cond.box_mask = t.input_mask;
            SampleResult s = sample(*ckpt.model, sched, cond, opts.steps,
                                    Rng::mix(opts.seed, static_cast<uint64_t>(id)), cfg.alpha,
                                    cfg.mask_refinement);
            output = s.image;
            pred_mask_soft = s.final_mask;
            if (opts.keep_trajectories) {
                for (const Image& m : s.mask_trajectory)
                    se.iou_trajectory.push_back(mask_iou_soft(m, t.wearing_mask));
            }
        }

        Mask pred_mask = image_to_mask(pred_mask_soft, 0.5f);
        se.mask_iou = mask_iou(pred_mask, t.wearing_mask);

        Mask allowed = dilate(t.input_mask, 3);
        size_t inside = 0, total = 0;
        for (size_t p = 0; p < pred_mask.px.size(); ++p)
            if (pred_mask.px[p]) {
                ++total;
                if (allowed.px[p]) ++inside;
            }
        se.mask_containment = total ? static_cast<double>(inside) / total : 1.0;

        Mask ornament_region = segment_ornament(output, pred_mask);
        se.component_count = count_components(ornament_region, kMinComponentArea);
        se.component_accuracy = se.component_count == se.target_component_count ? 1.0 : 0.0;
        se.color_identity = color_identity(output, ornament_region, t.reference_image,
                                           t.reference_mask);
        report.per_sample.push_back(std::move(se));
    }

    report.n_samples = static_cast<int>(report.per_sample.size());
    double iou = 0, acc = 0, col = 0, acc_bc = 0, contain = 0;
    int n_bc = 0;
    for (const auto& se : report.per_sample) {
        iou += se.mask_iou;
        acc += se.component_accuracy;
        col += se.color_identity;
        contain += se.mask_containment;
        if (se.archetype == "beaded_ring" || se.archetype == "chain") {
            acc_bc += se.component_accuracy;
            ++n_bc;
        }
    }
    report.mean_mask_iou = iou / report.n_samples;
    report.mean_component_accuracy = acc / report.n_samples;
    report.mean_color_identity = col / report.n_samples;
    report.mean_mask_containment = contain / report.n_samples;
    report.mean_component_accuracy_beaded_chain = n_bc ? acc_bc / n_bc : 0.0;
    return report;
}

namespace {

ordered_json report_to_json_obj(const EvalReport& r) {
    ordered_json j;
    j["n_samples"] = r.n_samples;
    j["config_hash"] = r.config_hash;
    j["mean"] = {{"mask_iou", r.mean_mask_iou},
                 {"component_count_accuracy", r.mean_component_accuracy},
                 {"component_count_accuracy_beaded_chain", r.mean_component_accuracy_beaded_chain},
                 {"color_identity", r.mean_color_identity},
                 {"mask_containment", r.mean_mask_containment}};
    ordered_json per = ordered_json::array();
    for (const auto& s : r.per_sample) {
        ordered_json e;
        e["id"] = s.id;
        e["archetype"] = s.archetype;
        e["mask_iou"] = s.mask_iou;
        e["component_count"] = s.component_count;
        e["target_component_count"] = s.target_component_count;
        e["component_accuracy"] = s.component_accuracy;
        e["color_identity"] = s.color_identity;
        e["mask_containment"] = s.mask_containment;
        if (!s.iou_trajectory.empty()) e["iou_trajectory"] = s.iou_trajectory;
        per.push_back(std::move(e));
    }
    j["per_sample"] = std::move(per);
    return j;
}

}  // namespace

std::string EvalReport::to_json() const { return report_to_json_obj(*this).dump(1); }

std::string EvalReport::render_text() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "n=%d  mask_iou=%.4f  component_acc=%.4f (beaded/chain %.4f)  color=%.4f",
                  n_samples, mean_mask_iou, mean_component_accuracy,
                  mean_component_accuracy_beaded_chain, mean_color_identity);
    return buf;
}

// ---- ablation runner -------------------------------------------------------

std::string ensure_checkpoint(const DatasetManifest& manifest, const AblationSpec& spec,
                              const std::string& work_dir) {
    fs::path dir = fs::path(work_dir) / spec.name;
    std::string ck_path = (dir / "checkpoint_final.bin").string();
    if (fs::exists(ck_path)) {
        try {
            Checkpoint existing = load_checkpoint(ck_path);
            if (config_hash(existing.config) == config_hash(spec.train)) return ck_path;
        } catch (const Error&) {
        }
    }
    return fit(spec.train, manifest, dir.string()).checkpoint_path;
}

AblationTable ablate(const DatasetManifest& manifest, const std::vector<AblationSpec>& configs,
                     const std::string& work_dir, const EvalOptions& eval_opts) {
    if (configs.size() < 2) throw ParamError("ablate: need at least two configurations");
    AblationTable table;
    for (const auto& spec : configs) {
        AblationRow row;
        row.name = spec.name;
        try {
            Checkpoint ck = load_checkpoint(ensure_checkpoint(manifest, spec, work_dir));
            row.report = evaluate(manifest, ck, eval_opts);
            row.ok = true;
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

AblationTable mask_ladder(const DatasetManifest& manifest, const Checkpoint& ckpt,
                          const EvalOptions& eval_opts) {
    AblationTable table;
    for (MaskKind kind : {MaskKind::gt, MaskKind::hull, MaskKind::obb, MaskKind::bbox}) {
        AblationRow row;
        row.name = std::string("input_mask=") + mask_kind_name(kind);
        try {
            EvalOptions o = eval_opts;
            o.mask_kind = kind;
            row.report = evaluate(manifest, ckpt, o);
            row.ok = true;
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string AblationTable::to_json() const {
    ordered_json j = ordered_json::array();
    for (const auto& r : rows) {
        ordered_json e;
        e["name"] = r.name;
        e["ok"] = r.ok;
        if (r.ok)
            e["report"] = report_to_json_obj(r.report);
        else
            e["error"] = r.error;
        j.push_back(std::move(e));
    }
    return j.dump(1);
}

std::string AblationTable::render_text() const {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-28s %10s %14s %18s %10s\n", "config", "mask_iou",
                  "component_acc", "beaded_chain_acc", "color");
    out += buf;
    for (const auto& r : rows) {
        if (r.ok)
            std::snprintf(buf, sizeof(buf), "%-28s %10.4f %14.4f %18.4f %10.4f\n", r.name.c_str(),
                          r.report.mean_mask_iou, r.report.mean_component_accuracy,
                          r.report.mean_component_accuracy_beaded_chain,
                          r.report.mean_color_identity);
        else
            std::snprintf(buf, sizeof(buf), "%-28s FAILED: %s\n", r.name.c_str(), r.error.c_str());
        out += buf;
    }
    return out;
}

Image review_grid(const TryonTriplet& t, const Image& prediction, const Image& predicted_mask) {
    int res = t.target_image.w;
    Image grid(res * 5 + 4, res, 3, 1.f);
    auto blit = [&](const Image& img, int slot) {
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x)
                for (int c = 0; c < 3; ++c)
                    grid.at(slot * (res + 1) + x, y, c) =
                        img.c == 1 ? img.at(x, y, 0) : img.at(x, y, c);
    };
    blit(t.reference_image, 0);
    blit(t.masked_model_image, 1);
    blit(prediction, 2);
    blit(t.target_image, 3);
    blit(predicted_mask, 4);
    return grid;
}

}  // namespace ornatry
