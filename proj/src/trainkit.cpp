// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#include "ornatry/trainkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ornatry/errors.hpp"
#include "ornatry/maskattn.hpp"
#include "ornatry/nn.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace ornatry {

std::pair<float, float> lambda_at(int64_t step, int64_t total_steps, const LossWeights& w) {
    if (step < 0 || step > total_steps) throw ParamError("lambda_at: step outside [0, total]");
    float t = total_steps > 0 ? static_cast<float>(step) / static_cast<float>(total_steps) : 0.f;
    float f = 1.f - (1.f - w.floor_fraction) * t;
    return {w.lambda1_0 * f, w.lambda2_0 * f};
}

Tensor total_loss(const Tensor& l1, const Tensor* l2, const Tensor* l3, int64_t step,
                  int64_t total_steps, const LossWeights& w) {
    for (const Tensor* l : {&l1, l2, l3}) {
        if (!l || !l->defined()) continue;
        if (!std::isfinite(l->item()))
            throw TrainError(l == &l1 ? "non-finite denoising loss"
                                      : (l == l2 ? "non-finite mask loss"
                                                 : "non-finite attention mask loss"));
    }
    auto [lam1, lam2] = lambda_at(step, total_steps, w);
    Tensor total = l1;
    if (l2 && l2->defined()) total = add(total, scale(*l2, lam1));
    if (l3 && l3->defined()) total = add(total, scale(*l3, lam2));
    return total;
}

// ---- config (de)serialization -------------------------------------------------

namespace {

ordered_json config_to_json_obj(const TrainConfig& c) {
    ordered_json j;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["learning_rate"] = c.learning_rate;
    j["clip_norm"] = c.clip_norm;
    j["seed"] = c.seed;
    j["resolution"] = c.resolution;
    j["mask_refinement"] = c.mask_refinement;
    j["mask_guided_attention"] = c.mask_guided_attention;
    j["alpha"] = {{"start_value", c.alpha.start_value}, {"ramp_fraction", c.alpha.ramp_fraction}};
    j["loss_weights"] = {{"lambda1_0", c.weights.lambda1_0},
                         {"lambda2_0", c.weights.lambda2_0},
                         {"floor_fraction", c.weights.floor_fraction}};
    j["timesteps"] = c.timesteps;
    j["beta_min"] = c.beta_min;
    j["beta_max"] = c.beta_max;
    j["schedule_shape"] = c.schedule_shape == ScheduleShape::linear ? "linear" : "cosine";
    j["inference_steps"] = c.inference_steps;
    j["refine_iterations"] = c.refine_iterations;
    j["mask_kind"] = c.mask_kind ? mask_kind_name(*c.mask_kind) : "manifest";
    j["val_count"] = c.val_count;
    j["checkpoint_every_epochs"] = c.checkpoint_every_epochs;
    j["model"] = {{"resolution", c.model.resolution},
                  {"time_dim", c.model.time_dim},
                  {"token_dim", c.model.token_dim},
                  {"token_count", c.model.token_count},
                  {"widths", c.model.widths}};
    return j;
}

TrainConfig config_from_json_obj(const ordered_json& j) {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.seed = j.value("seed", c.seed);
    c.resolution = j.value("resolution", c.resolution);
    c.mask_refinement = j.value("mask_refinement", c.mask_refinement);
    c.mask_guided_attention = j.value("mask_guided_attention", c.mask_guided_attention);
    if (j.contains("alpha")) {
        c.alpha.start_value = j["alpha"].value("start_value", c.alpha.start_value);
        c.alpha.ramp_fraction = j["alpha"].value("ramp_fraction", c.alpha.ramp_fraction);
    }
    if (j.contains("loss_weights")) {
        c.weights.lambda1_0 = j["loss_weights"].value("lambda1_0", c.weights.lambda1_0);
        c.weights.lambda2_0 = j["loss_weights"].value("lambda2_0", c.weights.lambda2_0);
        c.weights.floor_fraction = j["loss_weights"].value("floor_fraction", c.weights.floor_fraction);
    }
    c.timesteps = j.value("timesteps", c.timesteps);
    c.beta_min = j.value("beta_min", c.beta_min);
    c.beta_max = j.value("beta_max", c.beta_max);
    if (j.value("schedule_shape", "linear") == std::string("cosine"))
        c.schedule_shape = ScheduleShape::cosine;
    c.inference_steps = j.value("inference_steps", c.inference_steps);
    c.refine_iterations = j.value("refine_iterations", c.refine_iterations);
    std::string mk = j.value("mask_kind", "manifest");
    if (mk != "manifest") c.mask_kind = mask_kind_from_name(mk);
    c.val_count = j.value("val_count", c.val_count);
    c.checkpoint_every_epochs = j.value("checkpoint_every_epochs", c.checkpoint_every_epochs);
    if (j.contains("model")) {
        const auto& m = j["model"];
        c.model.resolution = m.value("resolution", c.model.resolution);
        c.model.time_dim = m.value("time_dim", c.model.time_dim);
        c.model.token_dim = m.value("token_dim", c.model.token_dim);
        c.model.token_count = m.value("token_count", c.model.token_count);
        if (m.contains("widths"))
            for (int i = 0; i < 3; ++i) c.model.widths[i] = m["widths"].at(i).get<int>();
    }
    c.model.resolution = c.resolution;
    return c;
}

}  // namespace

std::string train_config_to_json(const TrainConfig& cfg) {
    return config_to_json_obj(cfg).dump(1);
}

TrainConfig train_config_from_json(const std::string& text) {
    try {
        return config_from_json_obj(ordered_json::parse(text));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad train config JSON: ") + e.what());
    }
}

TrainConfig train_config_from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return train_config_from_json(text);
}

uint64_t config_hash(const TrainConfig& cfg) {
    std::string s = train_config_to_json(cfg);
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// ---- checkpoint I/O ------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'O', 'R', 'N', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

void put_floats(std::ofstream& f, const std::vector<float>& v) {
    put<uint64_t>(f, v.size());
    if (!v.empty()) f.write(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
}

std::vector<float> get_floats(std::ifstream& f) {
    uint64_t n = get<uint64_t>(f);
    std::vector<float> v(n);
    if (n) f.read(reinterpret_cast<char*>(v.data()), n * sizeof(float));
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const TryonModel& model, const TrainConfig& cfg,
                     int64_t step, const std::vector<float>& adam_m,
                     const std::vector<float>& adam_v, int64_t adam_t) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw IoError("cannot open checkpoint for write: " + path);
        f.write(kMagic, 8);
        put<uint32_t>(f, 1);  // format version
        put<int64_t>(f, step);
        std::string cfg_json = train_config_to_json(cfg);
        put<uint64_t>(f, cfg_json.size());
        f.write(cfg_json.data(), cfg_json.size());
        const auto& params = model.params().params();
        put<uint64_t>(f, params.size());
        for (const auto& [name, t] : params) {
            put<uint64_t>(f, name.size());
            f.write(name.data(), name.size());
            put<uint32_t>(f, static_cast<uint32_t>(t.shape().size()));
            for (int d : t.shape()) put<int32_t>(f, d);
            put_floats(f, t.node()->val);
        }
        put_floats(f, adam_m);
        put_floats(f, adam_v);
        put<int64_t>(f, adam_t);
        if (!f) throw IoError("checkpoint write failed: " + path);
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("checkpoint rename failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw IoError("not an ornatry checkpoint: " + path);
    uint32_t version = get<uint32_t>(f);
    if (version != 1) throw IoError("unsupported checkpoint version");
    Checkpoint ck;
    ck.step = get<int64_t>(f);
    uint64_t cfg_len = get<uint64_t>(f);
    std::string cfg_json(cfg_len, '\0');
    f.read(cfg_json.data(), cfg_len);
    ck.config = train_config_from_json(cfg_json);
    ck.model = std::make_shared<TryonModel>(ck.config.model, ck.config.seed);
    uint64_t n_params = get<uint64_t>(f);
    const auto& params = ck.model->params().params();
    if (n_params != params.size()) throw IoError("checkpoint parameter count mismatch");
    for (const auto& [name, t] : params) {
        uint64_t name_len = get<uint64_t>(f);
        std::string got(name_len, '\0');
        f.read(got.data(), name_len);
        if (got != name) throw IoError("checkpoint parameter order mismatch: " + got);
        uint32_t ndims = get<uint32_t>(f);
        Shape s(ndims);
        for (auto& d : s) d = get<int32_t>(f);
        if (s != t.shape()) throw IoError("checkpoint shape mismatch: " + name);
        std::vector<float> vals = get_floats(f);
        if (static_cast<int64_t>(vals.size()) != t.numel())
            throw IoError("checkpoint data size mismatch: " + name);
        Tensor tt = t;
        std::copy(vals.begin(), vals.end(), tt.data());
    }
    ck.adam_m = get_floats(f);
    ck.adam_v = get_floats(f);
    ck.adam_t = get<int64_t>(f);
    if (!f) throw IoError("truncated checkpoint: " + path);
    return ck;
}

// ---- training loop -------------------------------------------------------------

std::vector<int> validation_indices(const DatasetManifest& manifest, int val_count) {
    int n = static_cast<int>(manifest.samples.size());
    int vc = std::min(val_count, n / 4);
    std::vector<int> idx;
    for (int i = n - vc; i < n; ++i) idx.push_back(i);
    return idx;
}

namespace {

struct Batch {
    Tensor z0, eps, masked, ornament, box, gt_mask, ref_mask;
    std::vector<int> ts;
    std::vector<Image> reference_masks;  // for the attention transform
};

Batch assemble_batch(const DatasetManifest& manifest, const std::vector<int>& ids,
                     MaskKind kind, Rng& noise_rng, const NoiseSchedule& sched) {
    Batch b;
    std::vector<TryonTriplet> triplets;
    triplets.reserve(ids.size());
    for (int id : ids) triplets.push_back(load_triplet(manifest, id, kind));

    std::vector<const Image*> targets, maskeds, refs;
    int res = triplets[0].target_image.w;
    Tensor box = Tensor::zeros({static_cast<int>(ids.size()), 1, res, res});
    Tensor gt = Tensor::zeros({static_cast<int>(ids.size()), 1, res, res});
    Tensor rmask = Tensor::zeros({static_cast<int>(ids.size()), 1, res, res});
    for (size_t i = 0; i < triplets.size(); ++i) {
        targets.push_back(&triplets[i].target_image);
        maskeds.push_back(&triplets[i].masked_model_image);
        refs.push_back(&triplets[i].reference_image);
        for (int p = 0; p < res * res; ++p) {
            box.data()[i * res * res + p] = triplets[i].input_mask.px[p] ? 1.f : 0.f;
            gt.data()[i * res * res + p] = triplets[i].wearing_mask.px[p] ? 1.f : 0.f;
            rmask.data()[i * res * res + p] = triplets[i].reference_mask.px[p] ? 1.f : 0.f;
        }
        b.reference_masks.push_back(mask_to_image(triplets[i].reference_mask));
    }
    b.z0 = image_batch_to_tensor(targets, true);
    b.masked = image_batch_to_tensor(maskeds, true);
    b.ornament = image_batch_to_tensor(refs, true);
    b.box = box;
    b.gt_mask = gt;
    b.ref_mask = rmask;

    b.eps = Tensor::zeros(b.z0.shape());
    for (int64_t i = 0; i < b.eps.numel(); ++i)
        b.eps.data()[i] = static_cast<float>(noise_rng.normal());
    b.ts.resize(ids.size());
    for (size_t i = 0; i < ids.size(); ++i)
        b.ts[i] = static_cast<int>(noise_rng.uniform_int(sched.T));
    return b;
}

void append_log(std::ofstream& log, const StepLog& s) {
    ordered_json j;
    j["step"] = s.step;
    j["l1"] = s.l1;
    j["l2"] = s.l2;
    j["l3"] = s.l3;
    j["lambda1"] = s.lambda1;
    j["lambda2"] = s.lambda2;
    j["total"] = s.total;
    if (s.val_iou) j["val_iou"] = *s.val_iou;
    log << j.dump() << "\n";
}

}  // namespace

double quick_mask_iou(const TryonModel& model, const DatasetManifest& manifest,
                      const std::vector<int>& indices, const TrainConfig& cfg) {
    if (indices.empty()) return 0.0;
    NoGradGuard ng;
    MaskKind kind = cfg.mask_kind.value_or(manifest.mask_kind);
    double acc = 0;
    for (int id : indices) {
        TryonTriplet t = load_triplet(manifest, id, kind);
        Tensor orn = image_batch_to_tensor({&t.reference_image}, true);
        Tensor masked = image_batch_to_tensor({&t.masked_model_image}, true);
        Tensor rmask = mask_to_tensor(mask_to_image(t.reference_mask));
        Tensor temb = model.time_embed({0}, cfg.timesteps);
        Image mask_img = mask_to_image(t.input_mask);
        Tensor pred;
        for (int it = 0; it < std::max(1, cfg.refine_iterations); ++it) {
            Tensor mask_in = mask_to_tensor(mask_img);
            FeatureStack feats = model.encode_reference(orn, masked, mask_in, temb, rmask);
            pred = model.predict_mask(feats, mask_in);
            mask_img = tensor_to_mask_image(pred);  // alpha = 1 late in refinement
        }
        acc += mask_iou_soft(tensor_to_mask_image(pred), t.wearing_mask, 0.5f);
    }
    return acc / indices.size();
}

TrainResult fit(const TrainConfig& cfg, const DatasetManifest& manifest,
                const std::string& out_dir) {
    if (manifest.samples.empty()) throw TrainError("fit: empty dataset");
    if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.learning_rate <= 0)
        throw ParamError("fit: invalid training configuration");
    fs::create_directories(out_dir);

    MaskKind kind = cfg.mask_kind.value_or(manifest.mask_kind);
    std::vector<int> val_ids = validation_indices(manifest, cfg.val_count);
    int n_train = static_cast<int>(manifest.samples.size()) - static_cast<int>(val_ids.size());
    if (n_train < cfg.batch_size) throw TrainError("fit: dataset smaller than one batch");

    int steps_per_epoch = n_train / cfg.batch_size;
    int64_t total_steps = static_cast<int64_t>(steps_per_epoch) * cfg.epochs;

    TryonModel model(cfg.model, cfg.seed);
    AdamOptimizer opt(model.params(), cfg.learning_rate, 0.9f, 0.999f, 1e-8f, cfg.clip_norm);
    NoiseSchedule sched = make_schedule(cfg.timesteps, cfg.beta_min, cfg.beta_max,
                                        cfg.schedule_shape);

    Rng order_rng(Rng::mix(cfg.seed, 0x6f72646572ULL));
    Rng noise_rng(Rng::mix(cfg.seed, 0x6e6f697365ULL));

    std::string log_path = (fs::path(out_dir) / "train_log.jsonl").string();
    std::ofstream log(log_path, std::ios::trunc);
    if (!log) throw IoError("fit: cannot open log " + log_path);

    std::ofstream cfg_out((fs::path(out_dir) / "config.json").string());
    cfg_out << train_config_to_json(cfg) << "\n";
    cfg_out.close();

    TrainResult result;
    result.log_path = log_path;
    std::string last_good;
    int64_t step = 0;

    std::vector<int> order(n_train);
    for (int i = 0; i < n_train; ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // deterministic Fisher-Yates
        for (int i = n_train - 1; i > 0; --i) {
            int j = static_cast<int>(order_rng.uniform_int(static_cast<uint64_t>(i) + 1));
            std::swap(order[i], order[j]);
        }
        for (int bstart = 0; bstart + cfg.batch_size <= n_train; bstart += cfg.batch_size) {
            std::vector<int> ids(order.begin() + bstart, order.begin() + bstart + cfg.batch_size);
            Batch batch = assemble_batch(manifest, ids, kind, noise_rng, sched);
            int bsz = cfg.batch_size;
            int res = cfg.resolution;

            Tensor z_t = q_sample_batch(batch.z0, batch.ts, batch.eps, sched);
            Tensor temb = model.time_embed(batch.ts, sched.T);
            Tensor tokens = model.ornament_embed(batch.ornament);

            float train_progress = total_steps > 1
                                       ? static_cast<float>(step) / (total_steps - 1)
                                       : 1.f;

            Tensor cond_mask = batch.box;
            FeatureStack feats;
            Tensor l2;
            if (cfg.mask_refinement) {
                float a = static_cast<float>(alpha_at(std::min(1.f, train_progress), cfg.alpha));
                std::vector<Tensor> preds;
                Tensor cur = batch.box;
                for (int it = 0; it < std::max(1, cfg.refine_iterations); ++it) {
                    feats = model.encode_reference(batch.ornament, batch.masked, cur, temb,
                                                   batch.ref_mask);
                    Tensor pred = model.predict_mask(feats, cur);
                    preds.push_back(pred);
                    cur = blend_mask(pred, batch.box, a);
                }
                cond_mask = cur;
                std::vector<Tensor> losses;
                for (const Tensor& p : preds) losses.push_back(mask_loss(p, batch.gt_mask));
                l2 = mean_of(losses);
            } else {
                feats = model.encode_reference(batch.ornament, batch.masked, batch.box, temb,
                                               batch.ref_mask);
            }

            AttentionMapSet maps;
            Tensor eps_pred = model.denoise(z_t, batch.masked, cond_mask, temb, feats, tokens,
                                            cfg.mask_guided_attention ? &maps : nullptr);
            Tensor l1 = denoise_loss(eps_pred, batch.eps);

            Tensor l3;
            if (cfg.mask_guided_attention) {
                std::vector<Tensor> sample_losses;
                for (int b = 0; b < bsz; ++b) {
                    std::vector<Tensor> transformed;
                    for (const auto& tap : maps.taps) {
                        maskattn::ReducedMask reduced =
                            maskattn::downflat_mask(batch.reference_masks[b], tap.d);
                        transformed.push_back(
                            maskattn::mask_and_marginalize(tap.per_sample[b], reduced));
                    }
                    Tensor agg = maskattn::aggregate(transformed);
                    // per-sample ground-truth wearing mask as (res,res)
                    std::vector<float> gt_vals(static_cast<size_t>(res) * res);
                    std::memcpy(gt_vals.data(),
                                batch.gt_mask.data() + static_cast<size_t>(b) * res * res,
                                sizeof(float) * res * res);
                    Tensor gt_t = Tensor::from(std::move(gt_vals), {res, res});
                    sample_losses.push_back(maskattn::attn_mask_loss(agg, gt_t));
                }
                l3 = mean_of(sample_losses);
            }

            Tensor total = total_loss(l1, l2.defined() ? &l2 : nullptr,
                                      l3.defined() ? &l3 : nullptr, step, total_steps, cfg.weights);
            if (!std::isfinite(total.item())) {
                throw TrainError("fit: non-finite total loss at step " + std::to_string(step) +
                                 (last_good.empty() ? "" : "; last good checkpoint: " + last_good));
            }

            // scalars must be captured before backward frees the graph buffers
            auto [lam1, lam2] = lambda_at(step, total_steps, cfg.weights);
            StepLog slog;
            slog.step = step;
            slog.l1 = l1.item();
            slog.l2 = l2.defined() ? l2.item() : 0.0;
            slog.l3 = l3.defined() ? l3.item() : 0.0;
            slog.lambda1 = lam1;
            slog.lambda2 = lam2;
            slog.total = total.item();

            opt.zero_grad();
            backward(total);
            opt.step();
            ++step;
            if (step == total_steps || (step % steps_per_epoch) == 0) {
                slog.val_iou = quick_mask_iou(model, manifest, val_ids, cfg);
            }
            append_log(log, slog);
            result.history.push_back(slog);
            result.final_loss = slog.total;
        }

        if ((epoch + 1) % cfg.checkpoint_every_epochs == 0 || epoch + 1 == cfg.epochs) {
            std::string p = (fs::path(out_dir) / "checkpoint_last.bin").string();
            save_checkpoint(p, model, cfg, step, opt.moment1(), opt.moment2(), opt.step_count());
            last_good = p;
        }
    }

    std::string final_path = (fs::path(out_dir) / "checkpoint_final.bin").string();
    save_checkpoint(final_path, model, cfg, step, opt.moment1(), opt.moment2(), opt.step_count());
    result.checkpoint_path = final_path;
    result.val_mask_iou = result.history.empty() || !result.history.back().val_iou
                              ? quick_mask_iou(model, manifest, val_ids, cfg)
                              : *result.history.back().val_iou;
    return result;
}

}  // namespace ornatry
