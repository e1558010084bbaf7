// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance suite. Runs every shipping criterion at its pinned
// tolerance and prints one PASS/FAIL line per criterion. Slow criteria cache
// their artifacts under the work directory (config-hash checked), so re-runs
// are cheap. Exit code 0 iff everything passed.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ornatry/diffusion.hpp"
#include "ornatry/errors.hpp"
#include "ornatry/maskattn.hpp"
#include "ornatry/rng.hpp"
#include "ornatry/tryon.hpp"
#include "oracles.hpp"
#include "testing.hpp"

using namespace ornatry;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string work_dir() {
    if (const char* env = std::getenv("ORNATRY_ACCEPT_DIR")) return env;
    return "acceptance_work";
}

int env_int(const char* name, int fallback) {
    if (const char* env = std::getenv(name)) return std::atoi(env);
    return fallback;
}

char buf[512];

// ---- criterion 1: transform oracle equivalence ------------------------------

Outcome criterion_transform_oracle() {
    Rng rng(101);
    double worst = 0;
    int d0 = 64;
    for (int d_i : {4, 16, 64}) {
        for (int rep = 0; rep < 100; ++rep) {
            Tensor logits = testing::random_tensor({d_i, d_i}, rng, 1.f, false);
            Tensor attn = softmax_rows(logits);
            Image mask(d0, d0, 1);
            for (auto& v : mask.px) v = rng.uniform() < 0.5 ? 1.f : 0.f;

            std::vector<double> attn_d(attn.data(), attn.data() + attn.numel());
            std::vector<double> mask_d(mask.px.begin(), mask.px.end());
            std::vector<double> want = testing::oracle_transform(attn_d, d_i, mask_d, d0);

            Tensor got = maskattn::mask_and_marginalize(attn, maskattn::downflat_mask(mask, d_i));
            for (int64_t i = 0; i < got.numel(); ++i)
                worst = std::max(worst, std::fabs(got.data()[i] - want[i]));
        }
    }
    Outcome o;
    o.pass = worst <= 1e-6;
    std::snprintf(buf, sizeof(buf), "max abs err %.3g over 100 pairs x d_i in {4,16,64}", worst);
    o.detail = buf;
    return o;
}

// ---- criterion 2: softmax-mass invariants ------------------------------------

Outcome criterion_softmax_mass() {
    Rng rng(102);
    Outcome o;
    int d0 = 64;  // (d0-1) divisible by (side-1): grid points land on knots
    for (int rep = 0; rep < 50 && o.pass; ++rep) {
        int d_i = 16, side = 4;
        int latent = d_i, extra = 2 * d_i;  // joint softmax over latent + reference keys
        Tensor logits = testing::random_tensor({latent, latent + extra}, rng, 1.f, false);
        Tensor joint = softmax_rows(logits);
        Tensor sub = slice_cols(joint, latent, latent + d_i);  // ornament columns

        // all-ones mask: per-query values are the sub-block row masses, so the
        // upsampled map is bounded by [min mass, 1] and hits the masses at the
        // interpolation knots
        Tensor ones_t = maskattn::mask_and_marginalize(
            sub, maskattn::downflat_mask(Image(d0, d0, 1, 1.f), d_i));
        double min_mass = 1.0;
        for (int r = 0; r < d_i; ++r) {
            double mass = 0;
            for (int c = 0; c < d_i; ++c) mass += sub.data()[r * d_i + c];
            min_mass = std::min(min_mass, mass);
            int gy = r / side, gx = r % side;
            int oy = gy * (d0 - 1) / (side - 1), ox = gx * (d0 - 1) / (side - 1);
            double got = ones_t.data()[oy * d0 + ox];
            if (std::fabs(got - mass) > 1e-5) {
                o.pass = false;
                o.detail = "knot value does not equal sub-block row mass";
            }
            if (mass < -1e-6 || mass > 1.0 + 1e-5) {
                o.pass = false;
                o.detail = "row mass outside [0, 1]";
            }
        }
        for (int64_t i = 0; i < ones_t.numel(); ++i)
            if (ones_t.data()[i] < min_mass - 1e-5 || ones_t.data()[i] > 1.f + 1e-5f) {
                o.pass = false;
                o.detail = "transformed value escapes [sub-block mass, 1]";
            }

        // all-zeros mask annihilates exactly
        Tensor zeros_t = maskattn::mask_and_marginalize(
            sub, maskattn::downflat_mask(Image(d0, d0, 1, 0.f), d_i));
        for (int64_t i = 0; i < zeros_t.numel(); ++i)
            if (zeros_t.data()[i] != 0.f) {
                o.pass = false;
                o.detail = "all-zero mask did not annihilate";
            }
    }
    if (o.pass) o.detail = "50 random joint-attention draws, bound [min row mass, 1]";
    return o;
}

// ---- criterion 3: gradient checks ---------------------------------------------

Outcome criterion_gradients() {
    Rng rng(103);
    // attn_mask_loss through softmax logits, 16-dim toy. The numeric side
    // differentiates a double-precision forward of the same function (the
    // independent oracle transform), which keeps the difference quotient far
    // below the 1e-3 bound instead of drowning it in float noise.
    int d0 = 4, d_i = 4;
    Tensor logits = testing::random_tensor({d_i, d_i}, rng, 0.7f);
    Image mask(d0, d0, 1), gt(d0, d0, 1);
    maskattn::ReducedMask reduced;
    do {  // a constant reduced mask makes the transform independent of attention
        for (auto& v : mask.px) v = rng.uniform() < 0.5 ? 1.f : 0.f;
        reduced = maskattn::downflat_mask(mask, d_i);
    } while (*std::max_element(reduced.values.begin(), reduced.values.end()) -
                 *std::min_element(reduced.values.begin(), reduced.values.end()) <
             0.25f);
    for (auto& v : gt.px) v = rng.uniform() < 0.4 ? 1.f : 0.f;

    logits.zero_grad();
    backward(maskattn::attn_mask_loss(
        maskattn::mask_and_marginalize(softmax_rows(logits), reduced), gt));
    std::vector<float> analytic = logits.grad();

    std::vector<double> mask_d(mask.px.begin(), mask.px.end());
    auto loss_double = [&](const std::vector<double>& lg) {
        std::vector<double> attn(static_cast<size_t>(d_i) * d_i);
        for (int r = 0; r < d_i; ++r) {
            double mx = lg[r * d_i];
            for (int c = 1; c < d_i; ++c) mx = std::max(mx, lg[r * d_i + c]);
            double sum = 0;
            for (int c = 0; c < d_i; ++c) {
                attn[r * d_i + c] = std::exp(lg[r * d_i + c] - mx);
                sum += attn[r * d_i + c];
            }
            for (int c = 0; c < d_i; ++c) attn[r * d_i + c] /= sum;
        }
        std::vector<double> tr = testing::oracle_transform(attn, d_i, mask_d, d0);
        double acc = 0;
        for (int i = 0; i < d0 * d0; ++i) {
            double diff = tr[i] - gt.px[i];
            acc += diff * diff;
        }
        return acc / (d0 * d0);
    };
    std::vector<double> base(logits.data(), logits.data() + logits.numel());
    double rms = 0;
    for (float g : analytic) rms += static_cast<double>(g) * g;
    rms = std::sqrt(rms / analytic.size());
    double w1 = 0, h = 1e-5;
    for (int k = 0; k < 10; ++k) {
        int i = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(logits.numel())));
        std::vector<double> plus = base, minus = base;
        plus[i] += h;
        minus[i] -= h;
        double numeric = (loss_double(plus) - loss_double(minus)) / (2 * h);
        double a = analytic.empty() ? 0.0 : analytic[i];
        if (std::fabs(a) < 1e-12 && std::fabs(numeric) < 1e-12) continue;
        double denom = std::max({std::fabs(numeric), std::fabs(a), rms});
        w1 = std::max(w1, std::fabs(a - numeric) / denom);
    }

    // mask_loss on a 16-dim toy: quadratic, so plain central differences are
    // exact up to rounding at a generous step
    Tensor pred = testing::random_tensor({4, 4}, rng, 0.5f);
    Tensor target = Tensor::zeros({4, 4});
    for (int64_t i = 0; i < target.numel(); ++i)
        target.data()[i] = rng.uniform() < 0.5 ? 1.f : 0.f;
    double w2 = testing::gradcheck(pred, [&] { return mask_loss(pred, target); }, 10, rng, 0.1);

    Outcome o;
    o.pass = w1 <= 1e-3 && w2 <= 1e-3;
    std::snprintf(buf, sizeof(buf), "attn loss rel err %.2e, mask loss rel err %.2e", w1, w2);
    o.detail = buf;
    return o;
}

// ---- criterion 4: blend / schedule algebra -------------------------------------

Outcome criterion_blend_algebra() {
    Outcome o;
    Rng rng(104);
    Image pred(8, 8, 1);
    for (auto& v : pred.px) v = static_cast<float>(rng.uniform());
    Mask box(8, 8);
    for (auto& v : box.px) v = rng.uniform() < 0.5 ? 1 : 0;

    Image identity = blend_mask(pred, box, 1.f);
    for (size_t i = 0; i < pred.px.size(); ++i)
        if (identity.px[i] != pred.px[i]) o.pass = false;
    Image fallback = blend_mask(pred, box, 0.f);
    for (size_t i = 0; i < box.px.size(); ++i)
        if (fallback.px[i] != (box.px[i] ? 1.f : 0.f)) o.pass = false;
    Image box_img = mask_to_image(box);
    for (float a : {0.f, 0.25f, 0.6f, 1.f}) {
        Image fp = blend_mask(box_img, box, a);  // pred == box: fixed point
        for (size_t i = 0; i < box.px.size(); ++i)
            if (fp.px[i] != box_img.px[i]) o.pass = false;
    }

    AlphaSchedule s{0.1, 0.5};
    if (std::fabs(alpha_at(0.0, s) - 0.1) > 1e-12) o.pass = false;
    if (std::fabs(alpha_at(1.0, s) - 1.0) > 1e-12) o.pass = false;
    if (std::fabs(alpha_at(0.5, s) - 1.0) > 1e-12) o.pass = false;
    if (std::fabs(alpha_at(0.25, s) - 0.55) > 1e-12) o.pass = false;
    o.detail = "blend identity/fallback/fixed-point, alpha endpoints+midpoint at 1e-12";
    return o;
}

// ---- criterion 5: paste-back exterior bit-exactness ------------------------------

Outcome criterion_paste_back() {
    Rng rng(105);
    Outcome o;
    for (int rep = 0; rep < 50 && o.pass; ++rep) {
        int w = 80 + static_cast<int>(rng.uniform_int(64));
        int h = 80 + static_cast<int>(rng.uniform_int(64));
        Image img(w, h, 3);
        for (auto& v : img.px) v = static_cast<float>(rng.uniform());
        int side = 8 + static_cast<int>(rng.uniform_int(std::min(w, h) - 12));
        CropRegion region;
        region.side = side;
        region.x = static_cast<int>(rng.uniform_int(w - side + 1));
        region.y = static_cast<int>(rng.uniform_int(h - side + 1));
        Image generated(64, 64, 3);
        for (auto& v : generated.px) v = static_cast<float>(rng.uniform());
        Image out = paste_back(generated, img, region);
        for (int y = 0; y < h && o.pass; ++y)
            for (int x = 0; x < w && o.pass; ++x) {
                bool inside = x >= region.x && x < region.x + side && y >= region.y &&
                              y < region.y + side;
                if (inside) continue;
                for (int c = 0; c < 3; ++c)
                    if (to_byte(out.at(x, y, c)) != to_byte(img.at(x, y, c))) {
                        o.pass = false;
                        o.detail = "exterior byte changed";
                    }
            }
    }
    if (o.pass) o.detail = "50 random region/image pairs byte-identical outside";
    return o;
}

// ---- shared slow-path helpers -----------------------------------------------------

DatasetManifest ensure_dataset(const std::string& dir, int n, uint64_t seed) {
    std::string manifest_path = dir + "/manifest.json";
    if (fs::exists(manifest_path)) {
        try {
            DatasetManifest m = load_manifest(manifest_path);
            if (static_cast<int>(m.samples.size()) == n && m.master_seed == seed) return m;
        } catch (const Error&) {
        }
    }
    fs::remove_all(dir);
    SynthConfig cfg;
    cfg.master_seed = seed;
    return build_dataset(n, cfg, dir);
}

struct DeskRun {
    DatasetManifest manifest;
    std::string checkpoint;
    double train_seconds = 0;
    bool trained_now = false;
};

DeskRun ensure_desk_run() {
    DeskRun r;
    std::string base = work_dir();
    r.manifest = ensure_dataset(base + "/desk_data", 2000, 20260808ULL);

    TrainConfig cfg;  // the pinned desk configuration
    cfg.epochs = 20;
    cfg.seed = 11;
    AblationSpec spec{"desk", cfg};

    std::string meta_path = base + "/desk/train_meta.json";
    std::string ck_path = base + "/desk/checkpoint_final.bin";
    bool reusable = false;
    if (fs::exists(ck_path) && fs::exists(meta_path)) {
        try {
            Checkpoint existing = load_checkpoint(ck_path);
            reusable = config_hash(existing.config) == config_hash(cfg);
        } catch (const Error&) {
        }
    }
    if (reusable) {
        std::ifstream f(meta_path);
        nlohmann::json j;
        f >> j;
        r.train_seconds = j.value("train_seconds", 0.0);
        r.checkpoint = ck_path;
        return r;
    }

    auto t0 = Clock::now();
    TrainResult tr = fit(cfg, r.manifest, base + "/desk");
    r.train_seconds = seconds_since(t0);
    r.checkpoint = tr.checkpoint_path;
    r.trained_now = true;
    std::ofstream f(meta_path);
    f << nlohmann::json{{"train_seconds", r.train_seconds}}.dump() << "\n";
    return r;
}

// ---- criterion 6 + 9: desk training run and refinement convergence ---------------

Outcome criterion_desk_run(const DeskRun& desk, const EvalReport& report) {
    // the wall-clock bound is stated for an 8-core CPU; scale the budget by
    // the core deficit on smaller machines, never loosening it on larger ones
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    double budget = 7200.0 * (8.0 / std::min(8u, hw));
    Outcome o;
    bool time_ok = desk.train_seconds <= budget;
    bool iou_ok = report.mean_mask_iou > 0.6;
    bool comp_ok = report.mean_component_accuracy_beaded_chain >= 0.7;
    bool color_ok = report.mean_color_identity >= 0.7;
    o.pass = time_ok && iou_ok && comp_ok && color_ok;
    std::snprintf(buf, sizeof(buf),
                  "train %.0fs (budget %.0fs @%u threads), mask IoU %.3f (>0.6), "
                  "beaded/chain count acc %.3f (>=0.7), color %.3f (>=0.7), %d held-out",
                  desk.train_seconds, budget, hw, report.mean_mask_iou,
                  report.mean_component_accuracy_beaded_chain, report.mean_color_identity,
                  report.n_samples);
    o.detail = buf;
    return o;
}

Outcome criterion_refinement_convergence(const EvalReport& report) {
    int ok = 0, n = 0;
    for (const auto& s : report.per_sample) {
        if (s.iou_trajectory.size() < 10) continue;
        ++n;
        bool nondecreasing = true;
        size_t start = s.iou_trajectory.size() - 10;
        for (size_t i = start + 1; i < s.iou_trajectory.size(); ++i)
            if (s.iou_trajectory[i] < s.iou_trajectory[i - 1] - 1e-9) nondecreasing = false;
        if (nondecreasing) ++ok;
    }
    Outcome o;
    double frac = n ? static_cast<double>(ok) / n : 0.0;
    o.pass = n > 0 && frac >= 0.8;
    std::snprintf(buf, sizeof(buf), "%d/%d held-out samples nondecreasing over final 10 steps (%.0f%%)",
                  ok, n, frac * 100);
    o.detail = buf;
    return o;
}

// ---- criteria 7 & 8: ablation ordering and the mask ladder -----------------------

TrainConfig ablation_config(int epochs, bool refine, bool attn) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.seed = 7;
    cfg.mask_refinement = refine;
    cfg.mask_guided_attention = attn;
    // a 96-sample split keeps one sample flip (~1pp) below the 2pp tolerance
    cfg.val_count = 96;
    return cfg;
}

Outcome criterion_ablation_ordering(const DatasetManifest& manifest, const std::string& dir,
                                    int epochs) {
    std::vector<AblationSpec> specs = {
        {"full", ablation_config(epochs, true, true)},
        {"no_mask_refinement", ablation_config(epochs, false, true)},
        {"no_mask_guided_attention", ablation_config(epochs, true, false)},
        {"baseline", ablation_config(epochs, false, false)},
    };
    EvalOptions eopts;
    eopts.seed = 7;
    AblationTable table = ablate(manifest, specs, dir, eopts);
    {
        std::ofstream f(dir + "/modules.json");
        f << table.to_json() << "\n";
        std::ofstream t(dir + "/modules.txt");
        t << table.render_text();
    }
    Outcome o;
    for (const auto& row : table.rows)
        if (!row.ok) {
            o.pass = false;
            o.detail = row.name + " failed: " + row.error;
            return o;
        }
    const EvalReport& full = table.rows[0].report;
    const EvalReport& base = table.rows[3].report;
    constexpr double kTol = 0.02;  // strict inversion beyond 2 percentage points fails
    std::string viol;
    for (int v = 1; v <= 2; ++v) {
        const EvalReport& var = table.rows[v].report;
        if (var.mean_mask_iou - full.mean_mask_iou > kTol) viol += table.rows[v].name + ">full(iou) ";
        if (var.mean_component_accuracy - full.mean_component_accuracy > kTol)
            viol += table.rows[v].name + ">full(acc) ";
        if (base.mean_mask_iou - var.mean_mask_iou > kTol) viol += "base>" + table.rows[v].name + "(iou) ";
        if (base.mean_component_accuracy - var.mean_component_accuracy > kTol)
            viol += "base>" + table.rows[v].name + "(acc) ";
    }
    o.pass = viol.empty();
    std::snprintf(buf, sizeof(buf),
                  "iou full/no_ref/no_attn/base = %.3f/%.3f/%.3f/%.3f, "
                  "acc = %.3f/%.3f/%.3f/%.3f%s%s",
                  full.mean_mask_iou, table.rows[1].report.mean_mask_iou,
                  table.rows[2].report.mean_mask_iou, base.mean_mask_iou,
                  full.mean_component_accuracy, table.rows[1].report.mean_component_accuracy,
                  table.rows[2].report.mean_component_accuracy, base.mean_component_accuracy,
                  viol.empty() ? "" : " inversions: ", viol.c_str());
    o.detail = buf;
    return o;
}

Outcome criterion_mask_ladder(const DatasetManifest& manifest, const std::string& dir,
                              int epochs) {
    TrainConfig cfg = ablation_config(epochs, true, true);
    cfg.mask_kind = MaskKind::gt;
    std::string ck_path = ensure_checkpoint(manifest, {"ladder_gt_trained", cfg}, dir);
    Checkpoint ck = load_checkpoint(ck_path);
    EvalOptions eopts;
    eopts.seed = 7;
    AblationTable table = mask_ladder(manifest, ck, eopts);
    {
        std::ofstream f(dir + "/ladder.json");
        f << table.to_json() << "\n";
        std::ofstream t(dir + "/ladder.txt");
        t << table.render_text();
    }
    Outcome o;
    std::vector<double> ious;
    for (const auto& row : table.rows) {
        if (!row.ok) {
            o.pass = false;
            o.detail = row.name + " failed: " + row.error;
            return o;
        }
        ious.push_back(row.report.mean_mask_iou);
    }
    constexpr double kTol = 0.02;
    // order is gt, hull, obb, bbox; each step down may not invert by > 2pp
    for (size_t i = 1; i < ious.size(); ++i)
        if (ious[i] - ious[i - 1] > kTol) o.pass = false;
    std::snprintf(buf, sizeof(buf), "mask IoU gt/hull/obb/bbox = %.3f/%.3f/%.3f/%.3f", ious[0],
                  ious[1], ious[2], ious[3]);
    o.detail = buf;
    return o;
}

// ---- criterion 10: determinism -----------------------------------------------------

Outcome criterion_determinism(const DatasetManifest& small, const std::string& dir,
                              const std::string& desk_ckpt) {
    Outcome o;
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 8;
    cfg.seed = 99;
    cfg.val_count = 4;
    TrainResult a = fit(cfg, small, dir + "/det_a");
    TrainResult b = fit(cfg, small, dir + "/det_b");
    if (a.history.size() != b.history.size()) {
        o.pass = false;
        o.detail = "history lengths differ";
        return o;
    }
    for (size_t i = 0; i < a.history.size(); ++i)
        if (a.history[i].l1 != b.history[i].l1 || a.history[i].l2 != b.history[i].l2 ||
            a.history[i].l3 != b.history[i].l3 || a.history[i].total != b.history[i].total) {
            o.pass = false;
            o.detail = "loss curves diverge at step " + std::to_string(i);
            return o;
        }

    Checkpoint ck = load_checkpoint(desk_ckpt);
    TryonTriplet t = load_triplet(small, 0);
    NoiseSchedule sched = make_schedule(ck.config.timesteps, ck.config.beta_min,
                                        ck.config.beta_max, ck.config.schedule_shape);
    SampleConditioning cond{t.reference_image, t.reference_mask, t.masked_model_image,
                            t.input_mask};
    SampleResult s1 = sample(*ck.model, sched, cond, 50, 5, ck.config.alpha, true);
    SampleResult s2 = sample(*ck.model, sched, cond, 50, 5, ck.config.alpha, true);
    for (size_t i = 0; i < s1.image.px.size(); ++i)
        if (s1.image.px[i] != s2.image.px[i]) {
            o.pass = false;
            o.detail = "sampled images differ bitwise";
            return o;
        }
    o.detail = "loss curves and generated images bit-identical across reruns";
    return o;
}

}  // namespace

int main() {
    fs::create_directories(work_dir());
    int failures = 0;
    auto report = [&](int id, const char* name, const Outcome& o, double secs) {
        std::printf("[%s] criterion %2d: %s (%s) [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, name,
                    o.detail.c_str(), secs);
        std::fflush(stdout);
        if (!o.pass) ++failures;
    };

    struct Fast {
        int id;
        const char* name;
        Outcome (*fn)();
    };
    for (const Fast& c : std::initializer_list<Fast>{
             {1, "transform oracle equivalence", criterion_transform_oracle},
             {2, "softmax-mass invariants", criterion_softmax_mass},
             {3, "gradient checks", criterion_gradients},
             {4, "blend/schedule algebra", criterion_blend_algebra},
             {5, "paste-back exterior bit-exactness", criterion_paste_back}}) {
        auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        report(c.id, c.name, o, seconds_since(t0));
    }

    // slow criteria share artifacts
    try {
        auto t0 = Clock::now();
        DeskRun desk = ensure_desk_run();
        Checkpoint ck = load_checkpoint(desk.checkpoint);
        EvalOptions eopts;
        eopts.seed = 3;
        eopts.keep_trajectories = true;
        EvalReport desk_report = evaluate(desk.manifest, ck, eopts);
        {
            std::ofstream f(work_dir() + "/desk/eval_report.json");
            f << desk_report.to_json() << "\n";
        }
        report(6, "desk training run", criterion_desk_run(desk, desk_report), seconds_since(t0));

        int ab_samples = env_int("ORNATRY_ABLATION_SAMPLES", 600);
        int ab_epochs = env_int("ORNATRY_ABLATION_EPOCHS", 8);
        auto t7 = Clock::now();
        DatasetManifest ab_data = ensure_dataset(work_dir() + "/ablation_data", ab_samples, 7ULL);
        Outcome o7;
        try {
            o7 = criterion_ablation_ordering(ab_data, work_dir() + "/ablations", ab_epochs);
        } catch (const std::exception& e) {
            o7.pass = false;
            o7.detail = std::string("exception: ") + e.what();
        }
        report(7, "ablation ordering", o7, seconds_since(t7));

        auto t8 = Clock::now();
        Outcome o8;
        try {
            o8 = criterion_mask_ladder(ab_data, work_dir() + "/ablations", ab_epochs);
        } catch (const std::exception& e) {
            o8.pass = false;
            o8.detail = std::string("exception: ") + e.what();
        }
        report(8, "input-mask ladder ordering", o8, seconds_since(t8));

        auto t9 = Clock::now();
        report(9, "refinement convergence", criterion_refinement_convergence(desk_report),
               seconds_since(t9));

        auto t10 = Clock::now();
        DatasetManifest small = ensure_dataset(work_dir() + "/determinism_data", 24, 55ULL);
        Outcome o10;
        try {
            o10 = criterion_determinism(small, work_dir(), desk.checkpoint);
        } catch (const std::exception& e) {
            o10.pass = false;
            o10.detail = std::string("exception: ") + e.what();
        }
        report(10, "determinism", o10, seconds_since(t10));
    } catch (const std::exception& e) {
        std::printf("[FAIL] criteria 6-10 aborted: %s\n", e.what());
        failures += 5;
    }

    std::printf("%s: %d criterion(s) failed\n", failures ? "FAILURE" : "SUCCESS", failures);
    return failures ? 1 : 0;
}
