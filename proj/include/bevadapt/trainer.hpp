#pragma once

#include <string>
#include <vector>

#include "bevadapt/dat.hpp"
#include "bevadapt/gas.hpp"
#include "bevadapt/objective.hpp"
#include "bevadapt/perception.hpp"

namespace bevadapt::trainer {

struct AblationToggles {
    bool da = true;  // depth-aware composition in the teacher
    bool ema = true; // teacher EMA updates
    bool kt = true;  // multi-space knowledge transfer
    bool pl = true;  // pseudo-label training
    bool ba = true;  // BEV space in the shared embedding
    bool ia = true;  // image space in the shared embedding
    bool va = true;  // voxel space in the shared embedding
    bool kt_bev = true, kt_voxel = true, kt_image = true; // transfer spaces

    bool gas_any() const { return ba || ia || va; }
    static AblationToggles all_off() {
        AblationToggles t;
        t.da = t.ema = t.kt = t.pl = t.ba = t.ia = t.va = false;
        return t;
    }
};

struct TrainConfig {
    perception::NetConfig net;
    double lr = 2e-4;
    int pretrain_epochs = 8;
    int adapt_epochs = 4;
    int batch_size = 8;
    std::uint64_t seed = 0;

    double ema_alpha = 0.99;
    int mc_passes = 10;
    double quantile_q = 0.7;
    double tau_pl = 0.3;
    double decode_threshold = 0.1;
    double eval_threshold = 0.05;
    int eval_max_k = 64;
    double depth_loss_weight = 1.0;
    objective::LossWeights weights;
    AblationToggles toggles;
    dat::GateMode gate = dat::GateMode::UNCERTAINTY;
    double teacher_soft_blend = 0.0;
    bool mkt_image_mean_views = false;
    double reversal_weight = 1.0;
    int gas_proj_hidden = 128;
    std::vector<double> eval_thresholds = {0.5, 1.0, 2.0, 4.0};

    gas::GasConfig gas_config() const;
    std::uint64_t hash() const;
};

TrainConfig load_config(const std::string& path);
void save_config(const TrainConfig& cfg, const std::string& path);
std::string config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const std::string& text);

struct EvalReport {
    std::vector<double> thresholds;
    std::vector<double> ap; // per threshold, averaged over categories with gt
    double map = 0;
    std::size_t num_samples = 0, num_gt = 0, num_detections = 0;
    double runtime_sec = 0;

    // canonical metric bytes (runtime excluded: it is not a metric)
    std::string metrics_digest() const;
    std::string table() const;
    std::string to_json() const;
};

void write_report(const EvalReport& report, const std::string& path);

struct RunResult {
    std::vector<double> step_losses; // total loss per optimizer step
    std::int64_t iterations = 0;
};

// Supervised source training: lambda2 * detection loss + depth supervision
// from projected lidar. Saves the checkpoint (with optimizer state) to
// ckpt_out; appends one CSV row per step when csv_path is non-empty.
RunResult pretrain_source(const TrainConfig& cfg,
                          const std::vector<scenegen::MultiViewSample>& source,
                          const std::string& ckpt_out, const std::string& csv_path = "");

// One full domain-adaptation run starting from a source checkpoint: teacher
// forward on target (depth-aware), pseudo labels, knowledge transfer,
// adversarial prototype alignment, composite loss, then the EMA update.
// Ablation toggles excise terms exactly.
RunResult adapt_uda(const TrainConfig& cfg, const std::vector<scenegen::MultiViewSample>& source,
                    const std::vector<scenegen::MultiViewSample>& target,
                    const std::string& source_ckpt, const std::string& ckpt_out,
                    const std::string& csv_path = "");

// Camera-only evaluation: deterministic depth, no lidar access, greedy
// center-distance matching, 41-point interpolated AP per threshold.
EvalReport evaluate(const TrainConfig& cfg, const perception::Detector& det,
                    const std::vector<scenegen::MultiViewSample>& data);
EvalReport evaluate_checkpoint(const TrainConfig& cfg, const std::string& ckpt,
                               const std::vector<scenegen::MultiViewSample>& data);

perception::Detector load_detector(const TrainConfig& cfg, const std::string& ckpt);

// Exposed for the adversarial-contract and end-to-end gradient tests: runs
// one full adaptation step's loss computation (no optimizer update) and
// leaves gradients in the student/align parameter sets.
struct StepLosses {
    double uns = 0, sup = 0, mkt = 0, gas = 0, total = 0;
};
StepLosses adapt_step_loss_and_grads(const TrainConfig& cfg, perception::Detector& det,
                                     gas::AlignHead& align, const dat::TeacherState& teacher,
                                     const std::vector<const scenegen::MultiViewSample*>& src_batch,
                                     const std::vector<const scenegen::MultiViewSample*>& tgt_batch,
                                     const geometry::FrustumMapping& map,
                                     std::uint64_t step_stream);

} // namespace bevadapt::trainer
