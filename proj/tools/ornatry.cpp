// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "ornatry/errors.hpp"
#include "ornatry/maskattn.hpp"
#include "ornatry/png_io.hpp"
#include "ornatry/rng.hpp"
#include "ornatry/tryon.hpp"

namespace fs = std::filesystem;
using namespace ornatry;

namespace {

Box parse_bbox(const std::string& s) {
    Box b;
    if (std::sscanf(s.c_str(), "%d,%d,%d,%d", &b.x, &b.y, &b.w, &b.h) != 4 || b.w <= 0 || b.h <= 0)
        throw CLI::ValidationError("--bbox", "expected x,y,w,h with positive size");
    return b;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << text;
    if (text.empty() || text.back() != '\n') f << "\n";
}

Image heatmap(const Tensor& t, int h, int w) {
    Image img(w, h, 1);
    float mx = 1e-12f;
    for (int64_t i = 0; i < t.numel(); ++i) mx = std::max(mx, t.data()[i]);
    for (int i = 0; i < h * w; ++i) img.px[i] = std::min(1.f, t.data()[i] / mx);
    return img;
}

int run(int argc, char** argv) {
    CLI::App app{"ornament virtual try-on workbench"};
    app.require_subcommand(1);

    // gen-data ---------------------------------------------------------------
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic triplet dataset");
    int gen_n = 2000;
    std::string gen_out;
    uint64_t gen_seed = 0;
    int gen_res = 64;
    std::string gen_kind = "bbox";
    float gen_jitter = 0.15f;
    gen->add_option("--n", gen_n, "number of triplets")->check(CLI::PositiveNumber);
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--seed", gen_seed, "master seed");
    gen->add_option("--resolution", gen_res, "image resolution");
    gen->add_option("--mask-kind", gen_kind, "input mask kind: bbox|obb|hull|gt");
    gen->add_option("--jitter", gen_jitter, "input mask expansion factor");

    // train ------------------------------------------------------------------
    auto* train = app.add_subcommand("train", "train the try-on model");
    std::string tr_data, tr_out, tr_config, tr_kind;
    std::optional<int> tr_epochs, tr_batch;
    std::optional<float> tr_lr;
    std::optional<uint64_t> tr_seed;
    bool tr_no_refine = false, tr_no_attn = false;
    train->add_option("--data", tr_data, "dataset manifest path")->required();
    train->add_option("--out", tr_out, "run directory")->required();
    train->add_option("--config", tr_config, "training config JSON");
    train->add_option("--epochs", tr_epochs, "override epochs");
    train->add_option("--batch", tr_batch, "override batch size");
    train->add_option("--lr", tr_lr, "override learning rate");
    train->add_option("--seed", tr_seed, "override seed");
    train->add_option("--mask-kind", tr_kind, "train-time input mask kind");
    train->add_flag("--no-mask-refinement", tr_no_refine, "ablate the mask refiner");
    train->add_flag("--no-mask-guided-attention", tr_no_attn, "ablate the attention loss");

    // tryon ------------------------------------------------------------------
    auto* tro = app.add_subcommand("tryon", "wear an ornament onto a model image");
    std::string to_model, to_ornament, to_bbox_str, to_ckpt, to_out, to_ornament_mask,
        to_bbox_from_gt;
    int to_steps = 50;
    uint64_t to_seed = 0;
    tro->add_option("--model", to_model, "model image PNG")->required();
    tro->add_option("--ornament", to_ornament, "reference ornament PNG")->required();
    tro->add_option("--bbox", to_bbox_str, "wearing box x,y,w,h");
    tro->add_option("--bbox-from-gt", to_bbox_from_gt,
                    "derive the box from this wearing-mask PNG (evaluation aid)");
    tro->add_option("--ckpt", to_ckpt, "checkpoint path")->required();
    tro->add_option("--steps", to_steps, "denoising steps");
    tro->add_option("--seed", to_seed, "sampling seed");
    tro->add_option("--out", to_out, "output directory")->required();
    tro->add_option("--ornament-mask", to_ornament_mask, "reference silhouette PNG (optional)");

    // eval -------------------------------------------------------------------
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string ev_data, ev_ckpt, ev_out, ev_kind;
    int ev_steps = 50, ev_n = 0;
    uint64_t ev_seed = 0;
    bool ev_gt = false, ev_traj = false;
    ev->add_option("--data", ev_data, "dataset manifest")->required();
    ev->add_option("--ckpt", ev_ckpt, "checkpoint")->required();
    ev->add_option("--out", ev_out, "output directory")->required();
    ev->add_option("--mask-kind", ev_kind, "input mask kind override");
    ev->add_option("--steps", ev_steps, "denoising steps");
    ev->add_option("--seed", ev_seed, "sampling seed");
    ev->add_option("--n", ev_n, "max validation samples (0 = all)");
    ev->add_flag("--use-gt", ev_gt, "score ground-truth images (oracle mode)");
    ev->add_flag("--trajectories", ev_traj, "record per-step mask IoU");

    // ablate -----------------------------------------------------------------
    auto* ab = app.add_subcommand("ablate", "module ablations and the input-mask ladder");
    std::string ab_data, ab_out;
    int ab_epochs = 8, ab_eval_n = 48, ab_steps = 50;
    uint64_t ab_seed = 0;
    bool ab_modules = false, ab_ladder = false;
    ab->add_option("--data", ab_data, "dataset manifest")->required();
    ab->add_option("--out", ab_out, "work directory")->required();
    ab->add_option("--epochs", ab_epochs, "training epochs per configuration");
    ab->add_option("--eval-samples", ab_eval_n, "validation samples per row");
    ab->add_option("--steps", ab_steps, "denoising steps");
    ab->add_option("--seed", ab_seed, "seed shared by all configurations");
    ab->add_flag("--modules", ab_modules, "run the module ablation table");
    ab->add_flag("--ladder", ab_ladder, "run the input-mask ladder");

    // attn-viz ---------------------------------------------------------------
    auto* av = app.add_subcommand("attn-viz", "dump attention maps and transformed masks");
    std::string av_ckpt, av_data, av_out;
    int av_index = 0, av_t = 200;
    av->add_option("--ckpt", av_ckpt, "checkpoint")->required();
    av->add_option("--data", av_data, "dataset manifest")->required();
    av->add_option("--index", av_index, "sample index");
    av->add_option("--t", av_t, "diffusion timestep for the forward pass");
    av->add_option("--out", av_out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    if (*gen) {
        SynthConfig cfg;
        cfg.resolution = gen_res;
        cfg.master_seed = gen_seed;
        cfg.mask_kind = mask_kind_from_name(gen_kind);
        cfg.jitter = gen_jitter;
        DatasetManifest m = build_dataset(gen_n, cfg, gen_out);
        std::printf("wrote %zu triplets to %s (beaded_ring=%d chain=%d pendant=%d stud=%d)\n",
                    m.samples.size(), gen_out.c_str(), m.histogram[0], m.histogram[1],
                    m.histogram[2], m.histogram[3]);
        return 0;
    }

    if (*train) {
        TrainConfig cfg = tr_config.empty() ? TrainConfig{} : train_config_from_json_file(tr_config);
        if (tr_epochs) cfg.epochs = *tr_epochs;
        if (tr_batch) cfg.batch_size = *tr_batch;
        if (tr_lr) cfg.learning_rate = *tr_lr;
        if (tr_seed) cfg.seed = *tr_seed;
        if (!tr_kind.empty()) cfg.mask_kind = mask_kind_from_name(tr_kind);
        if (tr_no_refine) cfg.mask_refinement = false;
        if (tr_no_attn) cfg.mask_guided_attention = false;
        DatasetManifest manifest = load_manifest(tr_data);
        cfg.resolution = manifest.resolution;
        cfg.model.resolution = manifest.resolution;
        TrainResult r = fit(cfg, manifest, tr_out);
        std::printf("final loss %.6f, mask-head val IoU %.4f, checkpoint %s\n", r.final_loss,
                    r.val_mask_iou, r.checkpoint_path.c_str());
        return 0;
    }

    if (*tro) {
        Image model_img = read_png(to_model);
        Image ornament = read_png(to_ornament);
        Box bbox;
        if (!to_bbox_from_gt.empty()) {
            bbox = bounding_box(read_png_mask(to_bbox_from_gt));
            if (bbox.empty()) throw ParamError("tryon: --bbox-from-gt mask is empty");
        } else if (!to_bbox_str.empty()) {
            bbox = parse_bbox(to_bbox_str);
        } else {
            throw CLI::RequiredError("--bbox or --bbox-from-gt");
        }
        std::optional<Mask> om;
        if (!to_ornament_mask.empty()) om = read_png_mask(to_ornament_mask);
        Checkpoint ck = load_checkpoint(to_ckpt);
        TryonResult r = tryon(model_img, ornament, bbox, ck, to_steps, to_seed, om);
        fs::create_directories(to_out);
        write_png((fs::path(to_out) / "final.png").string(), r.final_image);
        write_png((fs::path(to_out) / "mask.png").string(), r.predicted_mask);
        write_png((fs::path(to_out) / "crop.png").string(), r.crop_generated);
        // quick side-by-side: ornament | model | result
        int res = ck.config.resolution;
        Image grid(res * 3 + 2, res, 3, 1.f);
        Image orn_small = resize_bilinear(ornament, res, res);
        Image model_small = resize_bilinear(model_img, res, res);
        Image final_small = resize_bilinear(r.final_image, res, res);
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x)
                for (int c = 0; c < 3; ++c) {
                    grid.at(x, y, c) = orn_small.at(x, y, c);
                    grid.at(res + 1 + x, y, c) = model_small.at(x, y, c);
                    grid.at(2 * res + 2 + x, y, c) = final_small.at(x, y, c);
                }
        write_png((fs::path(to_out) / "grid.png").string(), grid);
        std::printf("wrote %s\n", (fs::path(to_out) / "final.png").string().c_str());
        return 0;
    }

    if (*ev) {
        DatasetManifest manifest = load_manifest(ev_data);
        Checkpoint ck = load_checkpoint(ev_ckpt);
        EvalOptions opts;
        if (!ev_kind.empty()) opts.mask_kind = mask_kind_from_name(ev_kind);
        opts.steps = ev_steps;
        opts.seed = ev_seed;
        opts.max_samples = ev_n;
        opts.use_ground_truth = ev_gt;
        opts.keep_trajectories = ev_traj;
        EvalReport rep = evaluate(manifest, ck, opts);
        fs::create_directories(ev_out);
        write_text((fs::path(ev_out) / "report.json").string(), rep.to_json());
        // review grids for the first few samples
        MaskKind kind = opts.mask_kind.value_or(manifest.mask_kind);
        NoiseSchedule sched = make_schedule(ck.config.timesteps, ck.config.beta_min,
                                            ck.config.beta_max, ck.config.schedule_shape);
        int n_grids = std::min<size_t>(4, rep.per_sample.size());
        for (int g = 0; g < n_grids; ++g) {
            int id = rep.per_sample[g].id;
            TryonTriplet t = load_triplet(manifest, id, kind);
            SampleConditioning cond{t.reference_image, t.reference_mask, t.masked_model_image,
                                    t.input_mask};
            SampleResult s = sample(*ck.model, sched, cond, ev_steps,
                                    Rng::mix(ev_seed, static_cast<uint64_t>(id)),
                                    ck.config.alpha, ck.config.mask_refinement);
            char name[64];
            std::snprintf(name, sizeof(name), "grid_%05d.png", id);
            write_png((fs::path(ev_out) / name).string(),
                      review_grid(t, s.image, s.final_mask));
        }
        std::printf("%s\n", rep.render_text().c_str());
        return 0;
    }

    if (*ab) {
        if (!ab_modules && !ab_ladder)
            throw CLI::ValidationError("ablate", "pass --modules and/or --ladder");
        DatasetManifest manifest = load_manifest(ab_data);
        EvalOptions eopts;
        eopts.steps = ab_steps;
        eopts.seed = ab_seed;
        eopts.max_samples = ab_eval_n;
        fs::create_directories(ab_out);

        TrainConfig base;
        base.epochs = ab_epochs;
        base.seed = ab_seed;
        base.resolution = manifest.resolution;
        base.model.resolution = manifest.resolution;

        if (ab_modules) {
            std::vector<AblationSpec> specs;
            auto add = [&](const char* name, bool refine, bool attn) {
                AblationSpec s;
                s.name = name;
                s.train = base;
                s.train.mask_refinement = refine;
                s.train.mask_guided_attention = attn;
                specs.push_back(std::move(s));
            };
            add("full", true, true);
            add("no_mask_refinement", false, true);
            add("no_mask_guided_attention", true, false);
            add("baseline", false, false);
            AblationTable t = ablate(manifest, specs, ab_out, eopts);
            write_text((fs::path(ab_out) / "modules.json").string(), t.to_json());
            write_text((fs::path(ab_out) / "modules.txt").string(), t.render_text());
            std::printf("%s", t.render_text().c_str());
        }
        if (ab_ladder) {
            TrainConfig ladder_cfg = base;
            ladder_cfg.mask_kind = MaskKind::gt;
            // train (or reuse) the gt-mask model, then sweep input kinds
            Checkpoint ck = load_checkpoint(
                ensure_checkpoint(manifest, {"ladder_gt_trained", ladder_cfg}, ab_out));
            AblationTable t = mask_ladder(manifest, ck, eopts);
            write_text((fs::path(ab_out) / "ladder.json").string(), t.to_json());
            write_text((fs::path(ab_out) / "ladder.txt").string(), t.render_text());
            std::printf("%s", t.render_text().c_str());
        }
        return 0;
    }

    if (*av) {
        Checkpoint ck = load_checkpoint(av_ckpt);
        DatasetManifest manifest = load_manifest(av_data);
        TryonTriplet t = load_triplet(manifest, av_index);
        const TrainConfig& cfg = ck.config;
        NoiseSchedule sched = make_schedule(cfg.timesteps, cfg.beta_min, cfg.beta_max,
                                            cfg.schedule_shape);
        NoGradGuard ng;
        Tensor orn = image_batch_to_tensor({&t.reference_image}, true);
        Tensor masked = image_batch_to_tensor({&t.masked_model_image}, true);
        Tensor tokens = ck.model->ornament_embed(orn);
        Tensor temb = ck.model->time_embed({av_t}, sched.T);
        Image box_img = mask_to_image(t.input_mask);
        Tensor mask_in = mask_to_tensor(box_img);
        FeatureStack feats = ck.model->encode_reference(orn, masked, mask_in, temb);

        Rng rng(Rng::mix(cfg.seed, 0x766975ULL));
        Tensor z0 = image_batch_to_tensor({&t.target_image}, true);
        Tensor eps = Tensor::zeros(z0.shape());
        for (int64_t i = 0; i < eps.numel(); ++i) eps.data()[i] = static_cast<float>(rng.normal());
        Tensor z_t = q_sample(z0, av_t, eps, sched);

        AttentionMapSet maps;
        ck.model->denoise(z_t, masked, mask_in, temb, feats, tokens, &maps);

        fs::create_directories(av_out);
        std::vector<Tensor> transformed;
        for (const auto& tap : maps.taps) {
            int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(tap.d))));
            const Tensor& m = tap.per_sample.at(0);
            write_png((fs::path(av_out) / ("attn_" + tap.tag + ".png")).string(),
                      heatmap(m, tap.d, tap.d));
            maskattn::ReducedMask reduced =
                maskattn::downflat_mask(mask_to_image(t.reference_mask), tap.d);
            Tensor red = Tensor::from(std::vector<float>(reduced.values), {side, side});
            write_png((fs::path(av_out) / ("reduced_mask_" + tap.tag + ".png")).string(),
                      heatmap(red, side, side));
            Tensor tr = maskattn::mask_and_marginalize(m, reduced);
            transformed.push_back(tr);
            write_png((fs::path(av_out) / ("transformed_" + tap.tag + ".png")).string(),
                      heatmap(tr, tr.dim(0), tr.dim(1)));
        }
        Tensor agg = maskattn::aggregate(transformed);
        write_png((fs::path(av_out) / "transformed_mean.png").string(),
                  heatmap(agg, agg.dim(0), agg.dim(1)));
        write_png((fs::path(av_out) / "wearing_mask_gt.png").string(), t.wearing_mask);
        std::printf("wrote attention visualizations to %s\n", av_out.c_str());
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const CLI::Error& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const ParamError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
