#include "bevadapt/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "bevadapt/common.hpp"
#include "bevadapt/rng.hpp"
#include "bevadapt/serde.hpp"

namespace bevadapt::trainer {

using perception::Detector;
using scenegen::MultiViewSample;

gas::GasConfig TrainConfig::gas_config() const {
    gas::GasConfig g;
    g.n_categories = net.num_categories;
    g.proj_hidden = gas_proj_hidden;
    g.reversal_weight = reversal_weight;
    g.c_img = net.c_img;
    g.c_vox = net.c_img;
    g.c_bev = net.c_bev;
    return g;
}

std::uint64_t TrainConfig::hash() const { return fnv1a64(config_to_json(*this)); }

std::string config_to_json(const TrainConfig& cfg) {
    nlohmann::json j = cfg;
    return j.dump(2);
}

TrainConfig config_from_json(const std::string& text) {
    return nlohmann::json::parse(text).get<TrainConfig>();
}

TrainConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f.good()) throw IoError("cannot open config: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return config_from_json(ss.str());
}

void save_config(const TrainConfig& cfg, const std::string& path) {
    std::ofstream f(path);
    BEVA_CHECK(f.good(), "cannot write config: " + path);
    f << config_to_json(cfg) << "\n";
}

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

namespace {

double now_sec() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::uint64_t rig_hash(const scenegen::CameraRig& rig) {
    std::uint64_t h = fnv1a64("rig");
    for (const auto& v : rig.views) {
        const double vals[] = {v.intrinsics.fx, v.intrinsics.fy, v.intrinsics.cx,
                               v.intrinsics.cy, v.ego_to_cam.t.x, v.ego_to_cam.t.y,
                               v.ego_to_cam.t.z};
        h = fnv1a64(vals, sizeof(vals), h);
        h = fnv1a64(v.ego_to_cam.R.m.data(), 9 * sizeof(double), h);
    }
    return h;
}

struct MappingCache {
    std::map<std::uint64_t, geometry::FrustumMapping> cache;

    const geometry::FrustumMapping& get(const scenegen::CameraRig& rig,
                                        const perception::NetConfig& net) {
        const std::uint64_t key = hash_combine(rig_hash(rig), net.frustum.d_bins);
        auto it = cache.find(key);
        if (it == cache.end())
            it = cache.emplace(key, geometry::build_frustum_mapping(rig, net.frustum, net.voxel,
                                                                    net.feat_h(), net.feat_w()))
                     .first;
        return it->second;
    }
};

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t stream) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t(0));
    Rng rng(stream);
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    return idx;
}

struct CsvLogger {
    std::ofstream file;
    bool active = false;

    void open(const std::string& path, const std::string& header) {
        if (path.empty()) return;
        const bool fresh = !std::filesystem::exists(path);
        file.open(path, std::ios::app);
        BEVA_CHECK(file.good(), "cannot open metrics csv: " + path);
        if (fresh) file << header << "\n";
        active = true;
    }
    void row(const std::string& line) {
        if (!active) return;
        file << line << "\n";
        file.flush();
    }
};

void abort_if_diverged(double loss, std::int64_t iter) {
    if (!std::isfinite(loss))
        throw ContractError("training diverged: non-finite loss at iteration " +
                            std::to_string(iter) + " (last finite iteration " +
                            std::to_string(iter - 1) + ")");
}

// student backward bookkeeping for one sample
struct SampleWork {
    const MultiViewSample* sample = nullptr;
    perception::SampleActs acts;
    perception::BackwardSeeds seeds;
    gas::EmbedActs embed;
    gas::ProtoActs proto;
    geometry::SpaceFeatures spaces;
    bool has_gas = false;
};

void init_seeds(perception::BackwardSeeds& seeds, const perception::NetConfig& net,
                bool det_heads, bool space_grads, bool depth_grads) {
    const int nx = net.voxel.nx(), ny = net.voxel.ny();
    if (det_heads) {
        seeds.dheat.reshape({net.num_categories, nx, ny});
        seeds.dreg.reshape({6, nx, ny});
    }
    if (space_grads) {
        seeds.dbev.reshape({net.c_bev, nx, ny});
        seeds.dvoxel.reshape({net.voxel.n_cells(), net.c_img});
        seeds.dimage.resize(std::size_t(net.num_views));
        for (auto& t : seeds.dimage) t.reshape({net.c_img, net.feat_h(), net.feat_w()});
    }
    if (depth_grads) {
        seeds.ddepth_logits.resize(std::size_t(net.num_views));
        for (auto& t : seeds.ddepth_logits)
            t.reshape({net.frustum.d_bins, net.feat_h(), net.feat_w()});
    }
}

} // namespace

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

namespace {

struct DetRecord {
    int sample = 0;
    double score = 0, x = 0, y = 0;
    int category = 0;
};
struct GtRecord {
    int sample = 0;
    double x = 0, y = 0;
    int category = 0;
};

double average_precision(std::vector<DetRecord> dets, const std::vector<GtRecord>& gts,
                         int category, double thr) {
    std::size_t n_gt = 0;
    std::map<int, std::vector<const GtRecord*>> gt_by_sample;
    for (const auto& g : gts)
        if (g.category == category) {
            gt_by_sample[g.sample].push_back(&g);
            ++n_gt;
        }
    if (n_gt == 0) return -1.0; // no gt for this category: skip from the mean
    std::erase_if(dets, [&](const DetRecord& d) { return d.category != category; });
    std::stable_sort(dets.begin(), dets.end(),
                     [](const DetRecord& a, const DetRecord& b) { return a.score > b.score; });
    std::map<int, std::vector<bool>> used;
    for (auto& [s, v] : gt_by_sample) used[s].assign(v.size(), false);
    std::vector<int> tp(dets.size(), 0);
    for (std::size_t i = 0; i < dets.size(); ++i) {
        const auto it = gt_by_sample.find(dets[i].sample);
        if (it == gt_by_sample.end()) continue;
        double best = thr;
        int best_j = -1;
        for (std::size_t j = 0; j < it->second.size(); ++j) {
            if (used[dets[i].sample][j]) continue;
            const double dist = std::hypot(dets[i].x - it->second[j]->x,
                                           dets[i].y - it->second[j]->y);
            if (dist <= best) {
                best = dist;
                best_j = int(j);
            }
        }
        if (best_j >= 0) {
            used[dets[i].sample][std::size_t(best_j)] = true;
            tp[i] = 1;
        }
    }
    // 41-point interpolated AP, integrated over the 40 nonzero recall levels
    std::vector<double> precision, recall;
    int cum_tp = 0;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        cum_tp += tp[i];
        precision.push_back(double(cum_tp) / double(i + 1));
        recall.push_back(double(cum_tp) / double(n_gt));
    }
    double ap = 0;
    for (int r = 1; r <= 40; ++r) {
        const double level = double(r) / 40.0;
        double best = 0;
        for (std::size_t i = 0; i < precision.size(); ++i)
            if (recall[i] >= level) best = std::max(best, precision[i]);
        ap += best / 40.0;
    }
    return ap;
}

} // namespace

EvalReport evaluate(const TrainConfig& cfg, const Detector& det,
                    const std::vector<MultiViewSample>& data) {
    BEVA_CHECK(!data.empty(), "evaluate: empty dataset");
    const double t0 = now_sec();
    MappingCache maps;
    std::vector<DetRecord> dets;
    std::vector<GtRecord> gts;
    perception::SampleActs acts;
    for (int i = 0; i < int(data.size()); ++i) {
        const MultiViewSample& s = data[std::size_t(i)];
        const auto& map = maps.get(s.rig, cfg.net);
        det.forward(s, map, acts); // deterministic, camera-only
        const auto found = perception::decode_detections(acts.heat, acts.reg, cfg.net.voxel,
                                                         cfg.eval_threshold, cfg.eval_max_k);
        for (const auto& d : found)
            dets.push_back({i, d.score, d.center.x, d.center.y, d.category});
        for (const auto& b : s.gt_boxes)
            gts.push_back({i, b.center.x, b.center.y, b.category % cfg.net.num_categories});
    }
    EvalReport rep;
    rep.thresholds = cfg.eval_thresholds;
    rep.num_samples = data.size();
    rep.num_gt = gts.size();
    rep.num_detections = dets.size();
    for (double thr : rep.thresholds) {
        double acc = 0;
        int counted = 0;
        for (int c = 0; c < cfg.net.num_categories; ++c) {
            const double ap = average_precision(dets, gts, c, thr);
            if (ap >= 0) {
                acc += ap;
                ++counted;
            }
        }
        rep.ap.push_back(counted ? acc / counted : 0.0);
    }
    rep.map = rep.ap.empty() ? 0.0
                             : std::accumulate(rep.ap.begin(), rep.ap.end(), 0.0) /
                                   double(rep.ap.size());
    rep.runtime_sec = now_sec() - t0;
    return rep;
}

Detector load_detector(const TrainConfig& cfg, const std::string& ckpt) {
    Detector det(cfg.net);
    perception::load_checkpoint(ckpt, {{"det", &det.params}});
    return det;
}

EvalReport evaluate_checkpoint(const TrainConfig& cfg, const std::string& ckpt,
                               const std::vector<MultiViewSample>& data) {
    Detector det = load_detector(cfg, ckpt);
    return evaluate(cfg, det, data);
}

std::string EvalReport::metrics_digest() const {
    std::ostringstream os;
    os.precision(17);
    os << "thr:";
    for (double t : thresholds) os << t << ",";
    os << " ap:";
    for (double a : ap) os << a << ",";
    os << " map:" << map << " gt:" << num_gt << " det:" << num_detections
       << " n:" << num_samples;
    return os.str();
}

std::string EvalReport::table() const {
    std::ostringstream os;
    os << "  threshold    AP\n";
    char buf[64];
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "  %6.2f m   %.4f\n", thresholds[i], ap[i]);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "  mAP        %.4f\n", map);
    os << buf;
    os << "  samples " << num_samples << ", gt " << num_gt << ", detections " << num_detections
       << ", " << runtime_sec << " s\n";
    return os.str();
}

std::string EvalReport::to_json() const {
    nlohmann::json j{{"thresholds", thresholds},
                     {"ap", ap},
                     {"map", map},
                     {"num_samples", num_samples},
                     {"num_gt", num_gt},
                     {"num_detections", num_detections},
                     {"runtime_sec", runtime_sec}};
    return j.dump(2);
}

void write_report(const EvalReport& report, const std::string& path) {
    std::ofstream f(path);
    BEVA_CHECK(f.good(), "cannot write report: " + path);
    f << report.to_json() << "\n";
}

// ---------------------------------------------------------------------------
// source pretraining
// ---------------------------------------------------------------------------

RunResult pretrain_source(const TrainConfig& cfg, const std::vector<MultiViewSample>& source,
                          const std::string& ckpt_out, const std::string& csv_path) {
    BEVA_CHECK(!source.empty(), "pretrain: labeled source data required");
    Detector det(cfg.net);
    det.init_params(cfg.seed);
    perception::AdamW opt;
    opt.lr = cfg.lr;
    opt.attach({&det.params});
    MappingCache maps;
    CsvLogger csv;
    csv.open(csv_path, "iter,l_sup,l_depth,total,lr,wall_sec");
    const double t0 = now_sec();

    RunResult result;
    std::int64_t iter = 0;
    const int batch = std::max(1, cfg.batch_size);
    for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        const auto order = shuffled_indices(
            source.size(), hash_combine(hash_combine(fnv1a64("pretrain.shuffle"), cfg.seed),
                                        std::uint64_t(epoch)));
        for (std::size_t start = 0; start < order.size(); start += std::size_t(batch)) {
            const std::size_t bsz = std::min<std::size_t>(batch, order.size() - start);
            det.params.zero_grads();
            double l_sup = 0, l_depth = 0;
            for (std::size_t bi = 0; bi < bsz; ++bi) {
                const MultiViewSample& s = source[order[start + bi]];
                const auto& map = maps.get(s.rig, cfg.net);
                perception::SampleActs acts;
                det.forward(s, map, acts);
                perception::BackwardSeeds seeds;
                const bool want_det = cfg.weights.lambda_sup != 0.0;
                const bool want_depth = cfg.depth_loss_weight != 0.0;
                init_seeds(seeds, cfg.net, want_det, false, want_depth);
                if (want_det) {
                    const auto targets = perception::render_targets(s.gt_boxes, cfg.net.voxel,
                                                                    cfg.net.num_categories);
                    l_sup += perception::loss_detection_grad(acts.heat, acts.reg, targets,
                                                             seeds.dheat, seeds.dreg) / double(bsz);
                    kernels::scale(seeds.dheat.data(), cfg.weights.lambda_sup / double(bsz),
                                   seeds.dheat.size());
                    kernels::scale(seeds.dreg.data(), cfg.weights.lambda_sup / double(bsz),
                                   seeds.dreg.size());
                }
                if (want_depth) {
                    for (int v = 0; v < cfg.net.num_views; ++v) {
                        const auto full = scenegen::project_lidar_depth(s, v);
                        const auto fd = scenegen::downsample_depth(full, cfg.net.frustum.stride);
                        l_depth += perception::loss_depth_grad_logits(
                                       acts.views[std::size_t(v)].depth_dist, fd, cfg.net.frustum,
                                       seeds.ddepth_logits[std::size_t(v)]) /
                                   double(bsz);
                        kernels::scale(seeds.ddepth_logits[std::size_t(v)].data(),
                                       cfg.depth_loss_weight / double(bsz),
                                       seeds.ddepth_logits[std::size_t(v)].size());
                    }
                }
                if (want_det || want_depth) det.backward(map, acts, seeds);
            }
            const double total = cfg.weights.lambda_sup * l_sup + cfg.depth_loss_weight * l_depth;
            abort_if_diverged(total, iter);
            opt.step();
            result.step_losses.push_back(total);
            ++iter;
            std::ostringstream row;
            row.precision(10);
            row << iter << "," << l_sup << "," << l_depth << "," << total << "," << cfg.lr << ","
                << now_sec() - t0;
            csv.row(row.str());
        }
    }
    result.iterations = iter;
    if (!ckpt_out.empty())
        perception::save_checkpoint(ckpt_out, {{"det", &det.params}}, cfg.hash(), iter, &opt);
    return result;
}

// ---------------------------------------------------------------------------
// UDA adaptation
// ---------------------------------------------------------------------------

StepLosses adapt_step_loss_and_grads(const TrainConfig& cfg, Detector& det, gas::AlignHead& align,
                                     const dat::TeacherState& teacher,
                                     const std::vector<const MultiViewSample*>& src_batch,
                                     const std::vector<const MultiViewSample*>& tgt_batch,
                                     const geometry::FrustumMapping& map,
                                     std::uint64_t step_stream) {
    const AblationToggles& tg = cfg.toggles;
    const std::size_t bs = src_batch.size(), bt = tgt_batch.size();
    BEVA_CHECK(bs > 0 && bt > 0, "adaptation step needs both domains");

    const bool need_teacher = tg.pl || tg.kt;
    const bool gas_on = tg.gas_any();
    const objective::SpaceToggles kt_spaces{tg.kt_image, tg.kt_voxel, tg.kt_bev};
    const std::array<bool, 3> gas_spaces{tg.ia, tg.va, tg.ba};

    dat::TeacherConfig tc;
    tc.mc_passes = cfg.mc_passes;
    tc.quantile_q = cfg.quantile_q;
    tc.gate = cfg.gate;
    tc.soft_blend = cfg.teacher_soft_blend;
    tc.depth_aware = tg.da;
    tc.decode_threshold = cfg.decode_threshold;
    tc.max_detections = cfg.eval_max_k;

    StepLosses losses;

    // target-domain side (skipped entirely when no target term is active,
    // which is the source-only fine-tuning control)
    const bool target_side = need_teacher || gas_on;
    std::vector<SampleWork> tgt_work(target_side ? bt : 0);
    for (std::size_t i = 0; i < tgt_work.size(); ++i) {
        SampleWork& w = tgt_work[i];
        w.sample = tgt_batch[i];
        det.forward(*w.sample, map, w.acts);
        init_seeds(w.seeds, cfg.net, tg.pl, tg.kt || gas_on, false);

        if (need_teacher) {
            const dat::TeacherOutput tout = dat::teacher_forward(
                teacher, *w.sample, map, tc, hash_combine(step_stream, std::uint64_t(i)));
            if (tg.pl) {
                const auto pseudo = dat::make_pseudo_labels(tout.detections, cfg.tau_pl);
                const auto targets =
                    perception::render_targets(pseudo, cfg.net.voxel, cfg.net.num_categories);
                losses.uns += perception::loss_detection_grad(w.acts.heat, w.acts.reg, targets,
                                                              w.seeds.dheat, w.seeds.dreg) /
                              double(bt);
                kernels::scale(w.seeds.dheat.data(),
                               cfg.weights.lambda_uns / double(bt), w.seeds.dheat.size());
                kernels::scale(w.seeds.dreg.data(),
                               cfg.weights.lambda_uns / double(bt), w.seeds.dreg.size());
            }
            if (tg.kt && kt_spaces.any()) {
                w.spaces = det.spaces(w.acts);
                objective::MktGrads mg;
                mg.dimage = &w.seeds.dimage;
                mg.dvoxel = &w.seeds.dvoxel;
                mg.dbev = &w.seeds.dbev;
                losses.mkt += objective::loss_mkt_grad(tout.spaces, w.spaces, kt_spaces,
                                                       cfg.mkt_image_mean_views,
                                                       cfg.weights.lambda_mkt / double(bt), mg) /
                              double(bt);
            }
        }
        if (gas_on) {
            if (w.spaces.image_feat.empty()) w.spaces = det.spaces(w.acts);
            w.embed = gas::build_embedding(w.spaces, align, gas_spaces);
            w.proto = gas::aggregate_prototype(w.embed, align);
            w.has_gas = true;
        }
    }

    // source-domain side
    std::vector<SampleWork> src_work(bs);
    for (std::size_t i = 0; i < bs; ++i) {
        SampleWork& w = src_work[i];
        w.sample = src_batch[i];
        det.forward(*w.sample, map, w.acts);
        init_seeds(w.seeds, cfg.net, true, gas_on, false);
        const auto targets =
            perception::render_targets(w.sample->gt_boxes, cfg.net.voxel, cfg.net.num_categories);
        losses.sup += perception::loss_detection_grad(w.acts.heat, w.acts.reg, targets,
                                                      w.seeds.dheat, w.seeds.dreg) /
                      double(bs);
        kernels::scale(w.seeds.dheat.data(), cfg.weights.lambda_sup / double(bs),
                       w.seeds.dheat.size());
        kernels::scale(w.seeds.dreg.data(), cfg.weights.lambda_sup / double(bs),
                       w.seeds.dreg.size());
        if (gas_on) {
            w.spaces = det.spaces(w.acts);
            w.embed = gas::build_embedding(w.spaces, align, gas_spaces);
            w.proto = gas::aggregate_prototype(w.embed, align);
            w.has_gas = true;
        }
    }

    // adversarial alignment on batch-mean prototypes
    if (gas_on) {
        const int c = align.cfg.c_embed, n = align.cfg.n_categories;
        Tensor proto_s({c, n}), proto_t({c, n});
        for (const auto& w : src_work) axpy(1.0 / double(bs), w.proto.prototype, proto_s);
        for (const auto& w : tgt_work) axpy(1.0 / double(bt), w.proto.prototype, proto_t);
        // discriminator ascends the objective (descends its BCE); everything
        // upstream of the reversal boundary descends it
        gas::GasGrads gg =
            gas::loss_gas_grads(proto_s, proto_t, align, -cfg.weights.lambda_gas);
        losses.gas = gg.value;
        const double feat_scale = cfg.reversal_weight * cfg.weights.lambda_gas;
        for (auto& w : src_work) {
            Tensor dproto = gg.dproto_src;
            kernels::scale(dproto.data(), feat_scale / double(bs), dproto.size());
            gas::SpaceGrads sg{std::move(w.seeds.dimage), std::move(w.seeds.dvoxel),
                               std::move(w.seeds.dbev)};
            gas::prototype_backward(w.spaces, w.embed, w.proto, dproto, align, sg);
            w.seeds.dimage = std::move(sg.dimage);
            w.seeds.dvoxel = std::move(sg.dvoxel);
            w.seeds.dbev = std::move(sg.dbev);
        }
        for (auto& w : tgt_work) {
            Tensor dproto = gg.dproto_tgt;
            kernels::scale(dproto.data(), feat_scale / double(bt), dproto.size());
            gas::SpaceGrads sg{std::move(w.seeds.dimage), std::move(w.seeds.dvoxel),
                               std::move(w.seeds.dbev)};
            gas::prototype_backward(w.spaces, w.embed, w.proto, dproto, align, sg);
            w.seeds.dimage = std::move(sg.dimage);
            w.seeds.dvoxel = std::move(sg.dvoxel);
            w.seeds.dbev = std::move(sg.dbev);
        }
    }

    losses.total = objective::loss_total(losses.uns, losses.sup, losses.mkt, losses.gas,
                                         cfg.weights);

    for (auto& w : tgt_work) det.backward(map, w.acts, w.seeds);
    for (auto& w : src_work) det.backward(map, w.acts, w.seeds);
    return losses;
}

RunResult adapt_uda(const TrainConfig& cfg, const std::vector<MultiViewSample>& source,
                    const std::vector<MultiViewSample>& target, const std::string& source_ckpt,
                    const std::string& ckpt_out, const std::string& csv_path) {
    BEVA_CHECK(!source.empty() && !target.empty(), "adapt: both domains required");
    Detector det(cfg.net);
    perception::load_checkpoint(source_ckpt, {{"det", &det.params}});

    gas::AlignHead align(cfg.gas_config());
    align.init_params(cfg.seed);

    dat::TeacherState teacher(cfg.net);
    for (std::size_t i = 0; i < det.params.items.size(); ++i)
        teacher.model.params.items[i].value = det.params.items[i].value;
    teacher.alpha = cfg.ema_alpha;

    perception::AdamW opt;
    opt.lr = cfg.lr;
    opt.attach({&det.params, &align.params});

    MappingCache maps;
    CsvLogger csv;
    csv.open(csv_path, "iter,l_uns,l_sup,l_mkt,l_gas,total,lr,wall_sec");
    const double t0 = now_sec();

    RunResult result;
    std::int64_t iter = 0;
    const int batch = std::max(1, cfg.batch_size);

    // source sampling stream, reshuffled whenever exhausted
    std::vector<std::size_t> src_order;
    std::size_t src_cursor = 0;
    std::uint64_t src_shuffle_round = 0;
    auto next_src = [&]() {
        if (src_cursor >= src_order.size()) {
            src_order = shuffled_indices(
                source.size(), hash_combine(hash_combine(fnv1a64("adapt.src"), cfg.seed),
                                            src_shuffle_round++));
            src_cursor = 0;
        }
        return src_order[src_cursor++];
    };

    for (int epoch = 0; epoch < cfg.adapt_epochs; ++epoch) {
        const auto tgt_order = shuffled_indices(
            target.size(),
            hash_combine(hash_combine(fnv1a64("adapt.tgt"), cfg.seed), std::uint64_t(epoch)));
        for (std::size_t start = 0; start < tgt_order.size(); start += std::size_t(batch)) {
            const std::size_t bsz = std::min<std::size_t>(batch, tgt_order.size() - start);
            std::vector<const MultiViewSample*> tgt_batch, src_batch;
            for (std::size_t i = 0; i < bsz; ++i) {
                tgt_batch.push_back(&target[tgt_order[start + i]]);
                src_batch.push_back(&source[next_src()]);
            }
            const auto& map = maps.get(tgt_batch[0]->rig, cfg.net);
            det.params.zero_grads();
            align.params.zero_grads();
            const StepLosses losses = adapt_step_loss_and_grads(
                cfg, det, align, teacher, src_batch, tgt_batch, map,
                hash_combine(hash_combine(fnv1a64("adapt.step"), cfg.seed), std::uint64_t(iter)));
            abort_if_diverged(losses.total, iter);
            opt.step();
            if (cfg.toggles.ema) dat::ema_update(teacher, det.params, cfg.ema_alpha);
            result.step_losses.push_back(losses.total);
            ++iter;
            std::ostringstream row;
            row.precision(10);
            row << iter << "," << losses.uns << "," << losses.sup << "," << losses.mkt << ","
                << losses.gas << "," << losses.total << "," << cfg.lr << "," << now_sec() - t0;
            csv.row(row.str());
        }
    }
    result.iterations = iter;
    if (!ckpt_out.empty())
        perception::save_checkpoint(
            ckpt_out,
            {{"det", &det.params}, {"align", &align.params}, {"teacher", &teacher.model.params}},
            cfg.hash(), iter, &opt);
    return result;
}

} // namespace bevadapt::trainer
