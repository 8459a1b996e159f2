#include "bevadapt/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>

#include "bevadapt/dataset_io.hpp"
#include "bevadapt/plotting.hpp"
#include "bevadapt/serde.hpp"
#include "bevadapt/trainer.hpp"

namespace fs = std::filesystem;

namespace bevadapt::cli {

namespace {

using scenegen::DomainShiftConfig;
using scenegen::MultiViewSample;
using scenegen::SceneSpec;
using scenegen::ShiftKind;
using trainer::TrainConfig;

struct CommonOpts {
    std::string config_path;
    std::int64_t seed = -1; // -1 = keep config value

    TrainConfig load() const {
        TrainConfig cfg = config_path.empty() ? TrainConfig{} : trainer::load_config(config_path);
        if (seed >= 0) cfg.seed = std::uint64_t(seed);
        return cfg;
    }
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "path to a config JSON file");
    cmd->add_option("--seed", opts.seed, "seed override");
}

SceneSpec scene_spec_for(const TrainConfig& cfg, std::uint64_t seed, int num_objects) {
    SceneSpec spec = SceneSpec::defaults();
    spec.seed = seed;
    spec.image_h = cfg.net.image_h;
    spec.image_w = cfg.net.image_w;
    spec.num_views = cfg.net.num_views;
    if (num_objects >= 0) spec.num_objects = num_objects;
    return spec;
}

std::vector<MultiViewSample> generate_split(const TrainConfig& cfg, ShiftKind scenario,
                                            bool target_split, int n, std::uint64_t base_seed,
                                            int num_objects) {
    const DomainShiftConfig shift =
        target_split ? DomainShiftConfig::preset(scenario) : DomainShiftConfig::none();
    std::vector<MultiViewSample> out;
    out.reserve(std::size_t(n));
    for (int i = 0; i < n; ++i) {
        SceneSpec spec = scene_spec_for(cfg, hash_combine(base_seed, std::uint64_t(i)), num_objects);
        out.push_back(scenegen::generate_sample(spec, shift));
    }
    return out;
}

int cmd_gen_data(const CommonOpts& common, const std::string& scenario_str,
                 const std::string& split, int n, const std::string& out_dir, int num_objects) {
    const TrainConfig cfg = common.load();
    const ShiftKind scenario = scenegen::shift_kind_from_string(scenario_str);
    const bool target = split == "tgt";
    const std::uint64_t base = common.seed >= 0 ? std::uint64_t(common.seed) : cfg.seed;
    auto samples = generate_split(cfg, scenario, target, n, base, num_objects);
    scenegen::DatasetMeta meta;
    meta.split = split;
    meta.spec = scene_spec_for(cfg, base, num_objects);
    meta.shift = target ? DomainShiftConfig::preset(scenario) : DomainShiftConfig::none();
    meta.count = samples.size();
    scenegen::write_dataset(out_dir, samples, meta);
    std::cout << "wrote " << samples.size() << " samples to " << out_dir << "\n";
    return 0;
}

int cmd_pretrain(const CommonOpts& common, const std::string& src_dir, const std::string& out,
                 int epochs, double lr, const std::string& csv) {
    TrainConfig cfg = common.load();
    if (epochs > 0) cfg.pretrain_epochs = epochs;
    if (lr > 0) cfg.lr = lr;
    const auto src = scenegen::read_dataset(src_dir);
    const auto result = trainer::pretrain_source(cfg, src, out, csv);
    std::cout << "pretrained " << result.iterations << " steps; final loss "
              << (result.step_losses.empty() ? 0.0 : result.step_losses.back()) << "; saved "
              << out << "\n";
    return 0;
}

int cmd_adapt(const CommonOpts& common, const std::string& src_dir, const std::string& tgt_dir,
              const std::string& ckpt, const std::string& out, int epochs, double lr,
              const std::string& csv, const trainer::AblationToggles& toggles,
              const std::string& gate) {
    TrainConfig cfg = common.load();
    if (epochs > 0) cfg.adapt_epochs = epochs;
    if (lr > 0) cfg.lr = lr;
    cfg.toggles = toggles;
    if (!gate.empty()) cfg.gate = dat::gate_mode_from_string(gate);
    const auto src = scenegen::read_dataset(src_dir);
    const auto tgt = scenegen::read_dataset(tgt_dir);
    const auto result = trainer::adapt_uda(cfg, src, tgt, ckpt, out, csv);
    std::cout << "adapted " << result.iterations << " steps; final loss "
              << (result.step_losses.empty() ? 0.0 : result.step_losses.back()) << "; saved "
              << out << "\n";
    return 0;
}

int cmd_eval(const CommonOpts& common, const std::string& data_dir, const std::string& ckpt,
             const std::string& out) {
    const TrainConfig cfg = common.load();
    const auto data = scenegen::read_dataset(data_dir);
    const auto report = trainer::evaluate_checkpoint(cfg, ckpt, data);
    std::cout << report.table();
    if (!out.empty()) {
        trainer::write_report(report, out);
        std::cout << "report written to " << out << "\n";
    }
    return 0;
}

struct GridVariant {
    std::string name;
    trainer::AblationToggles toggles;
    dat::GateMode gate = dat::GateMode::UNCERTAINTY;
};

std::vector<GridVariant> make_grid(const std::string& grid) {
    using T = trainer::AblationToggles;
    auto off = T::all_off();
    std::vector<GridVariant> v;
    if (grid == "components") {
        T dat_only = off;
        dat_only.da = dat_only.kt = dat_only.pl = true;
        dat_only.ema = false;
        v.push_back({"da_kt", dat_only});
        T with_ema = dat_only;
        with_ema.ema = true;
        v.push_back({"da_ema_kt", with_ema});
        T ba = off;
        ba.ba = true;
        v.push_back({"gas_b", ba});
        T bia = ba;
        bia.ia = true;
        v.push_back({"gas_bi", bia});
        T biv = bia;
        biv.va = true;
        v.push_back({"gas_biv", biv});
        v.push_back({"full", T{}});
    } else if (grid == "gate") {
        T base = off;
        base.da = base.ema = base.kt = base.pl = true;
        v.push_back({"lidar_only", base, dat::GateMode::LIDAR_ONLY});
        v.push_back({"pred_ungated", base, dat::GateMode::ALL_PRED});
        v.push_back({"conf_gate", base, dat::GateMode::CONFIDENCE});
        v.push_back({"unc_gate", base, dat::GateMode::UNCERTAINTY});
    } else if (grid == "transfer") {
        T pl_only = off;
        pl_only.da = pl_only.ema = pl_only.pl = true;
        v.push_back({"pl", pl_only});
        T bev = pl_only;
        bev.kt = true;
        bev.kt_bev = true;
        bev.kt_voxel = bev.kt_image = false;
        v.push_back({"pl_bev", bev});
        T vox = bev;
        vox.kt_voxel = true;
        v.push_back({"pl_bev_voxel", vox});
        T img = vox;
        img.kt_image = true;
        v.push_back({"pl_bev_voxel_image", img});
    } else {
        throw ContractError("unknown grid: " + grid + " (use components|gate|transfer)");
    }
    return v;
}

int cmd_ablate(const CommonOpts& common, const std::string& src_dir, const std::string& tgt_dir,
               const std::string& eval_dir, const std::string& out_dir, const std::string& grid,
               const std::string& seeds_csv) {
    TrainConfig base_cfg = common.load();
    std::vector<std::uint64_t> seeds;
    {
        std::stringstream ss(seeds_csv);
        std::string tok;
        while (std::getline(ss, tok, ',')) seeds.push_back(std::stoull(tok));
    }
    BEVA_CHECK(!seeds.empty(), "ablate: need at least one seed");
    const auto src = scenegen::read_dataset(src_dir);
    const auto tgt = scenegen::read_dataset(tgt_dir);
    const auto eval_data = scenegen::read_dataset(eval_dir);
    fs::create_directories(out_dir);

    const auto variants = make_grid(grid);
    std::map<std::string, std::vector<double>> results; // variant -> per-seed mAP
    std::vector<double> baseline;

    for (std::uint64_t seed : seeds) {
        TrainConfig cfg = base_cfg;
        cfg.seed = seed;
        const std::string seed_dir = out_dir + "/seed" + std::to_string(seed);
        fs::create_directories(seed_dir);
        const std::string pre_ckpt = seed_dir + "/pretrain.ckpt";
        bool reuse = false;
        if (fs::exists(pre_ckpt)) {
            try {
                reuse = perception::peek_checkpoint(pre_ckpt).config_hash == cfg.hash();
            } catch (const std::exception&) {
                reuse = false;
            }
        }
        if (!reuse) trainer::pretrain_source(cfg, src, pre_ckpt, seed_dir + "/pretrain.csv");
        baseline.push_back(trainer::evaluate_checkpoint(cfg, pre_ckpt, eval_data).map);
        for (const auto& var : variants) {
            TrainConfig vcfg = cfg;
            vcfg.toggles = var.toggles;
            vcfg.gate = var.gate;
            const std::string ckpt = seed_dir + "/" + var.name + ".ckpt";
            trainer::adapt_uda(vcfg, src, tgt, pre_ckpt, ckpt, seed_dir + "/" + var.name + ".csv");
            const auto rep = trainer::evaluate_checkpoint(vcfg, ckpt, eval_data);
            results[var.name].push_back(rep.map);
            trainer::write_report(rep, seed_dir + "/" + var.name + ".report.json");
        }
    }

    auto mean = [](const std::vector<double>& v) {
        return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    };
    std::ostringstream table;
    table << "variant,";
    for (std::uint64_t s : seeds) table << "seed" << s << ",";
    table << "mean_map\n";
    table << "source_only,";
    for (double v : baseline) table << v << ",";
    table << mean(baseline) << "\n";
    for (const auto& var : variants) {
        table << var.name << ",";
        for (double v : results[var.name]) table << v << ",";
        table << mean(results[var.name]) << "\n";
    }
    std::ofstream tf(out_dir + "/" + grid + "_table.csv");
    tf << table.str();
    std::cout << table.str();
    return 0;
}

std::vector<double> read_csv_column(const std::string& path, const std::string& column) {
    std::ifstream f(path);
    if (!f.good()) throw IoError("cannot open csv: " + path);
    std::string header;
    std::getline(f, header);
    std::vector<std::string> cols;
    {
        std::stringstream ss(header);
        std::string tok;
        while (std::getline(ss, tok, ',')) cols.push_back(tok);
    }
    int target = -1;
    for (std::size_t i = 0; i < cols.size(); ++i)
        if (cols[i] == column) target = int(i);
    if (target < 0) throw IoError("csv " + path + " has no column " + column);
    std::vector<double> out;
    std::string line;
    while (std::getline(f, line)) {
        std::stringstream ss(line);
        std::string tok;
        for (int i = 0; i <= target; ++i) std::getline(ss, tok, ',');
        if (!tok.empty()) out.push_back(std::stod(tok));
    }
    return out;
}

int cmd_plot(const CommonOpts& common, const std::string& metrics_csv,
             const std::vector<std::string>& report_paths, const std::string& ckpt,
             const std::string& src_dir, const std::string& tgt_dir, const std::string& out_dir) {
    const TrainConfig cfg = common.load();
    fs::create_directories(out_dir);
    bool produced = false;

    if (!metrics_csv.empty()) {
        std::vector<plot::Series> series;
        const plot::Color palette[] = {{200, 40, 40}, {40, 90, 200}, {40, 160, 60}, {200, 140, 20},
                                       {120, 60, 160}};
        std::vector<std::string> names = {"total", "l_sup", "l_uns", "l_mkt", "l_gas", "l_depth"};
        int ci = 0;
        for (const auto& name : names) {
            try {
                auto vals = read_csv_column(metrics_csv, name);
                if (!vals.empty())
                    series.push_back({name, vals, palette[ci++ % 5]});
            } catch (const IoError&) {
            }
        }
        BEVA_CHECK(!series.empty(), "no loss columns found in " + metrics_csv);
        plot::plot_curves(out_dir + "/loss_curves.ppm", series);
        std::cout << "wrote " << out_dir << "/loss_curves.ppm\n";
        produced = true;
    }

    if (!report_paths.empty()) {
        std::vector<plot::Bar> bars;
        const plot::Color palette[] = {{90, 90, 200}, {200, 90, 90}, {90, 180, 90}, {200, 160, 40}};
        int ci = 0;
        for (const auto& p : report_paths) {
            std::ifstream f(p);
            if (!f.good()) throw IoError("cannot open report: " + p);
            nlohmann::json j;
            f >> j;
            bars.push_back({fs::path(p).stem().string(), j.at("map").get<double>(),
                            palette[ci++ % 4]});
        }
        plot::plot_bars(out_dir + "/metric_bars.ppm", bars);
        std::cout << "wrote " << out_dir << "/metric_bars.ppm\n";
        produced = true;
    }

    if (!ckpt.empty() && !src_dir.empty() && !tgt_dir.empty()) {
        perception::Detector det(cfg.net);
        gas::AlignHead align(cfg.gas_config());
        perception::load_checkpoint(ckpt, {{"det", &det.params}, {"align", &align.params}});
        const auto src = scenegen::read_dataset(src_dir);
        const auto tgt = scenegen::read_dataset(tgt_dir);
        BEVA_CHECK(!src.empty() && !tgt.empty(), "plot: need non-empty datasets");
        const auto map = geometry::build_frustum_mapping(src[0].rig, cfg.net.frustum,
                                                         cfg.net.voxel, cfg.net.feat_h(),
                                                         cfg.net.feat_w());
        std::vector<std::vector<double>> rows;
        std::size_t n_src = 0;
        for (const auto* domain : {&src, &tgt}) {
            for (const auto& s : *domain) {
                perception::SampleActs acts;
                det.forward(s, map, acts);
                const auto spaces = det.spaces(acts);
                const auto embed = gas::build_embedding(spaces, align);
                const auto proto = gas::aggregate_prototype(embed, align);
                rows.emplace_back(proto.prototype.data(),
                                  proto.prototype.data() + proto.prototype.size());
            }
            if (domain == &src) n_src = rows.size();
        }
        const auto pts = plot::pca2(rows);
        plot::ScatterGroup gs, gt;
        gs.color = {40, 90, 200};
        gt.color = {200, 40, 40};
        for (std::size_t i = 0; i < pts.size(); ++i) {
            auto& g = i < n_src ? gs : gt;
            g.x.push_back(pts[i].first);
            g.y.push_back(pts[i].second);
        }
        plot::plot_scatter(out_dir + "/prototypes.ppm", {gs, gt});
        std::cout << "wrote " << out_dir << "/prototypes.ppm\n";
        produced = true;
    }
    BEVA_CHECK(produced, "plot: nothing to do (pass --metrics, --reports, or --ckpt with data)");
    return 0;
}

int edit_distance(const std::string& a, const std::string& b) {
    std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
    std::iota(prev.begin(), prev.end(), 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = int(i);
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1,
                               prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

} // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"synthetic multi-view BEV 3D detection with teacher-student domain adaptation"};
    app.require_subcommand(1);

    // gen-data
    CommonOpts gen_common;
    std::string gen_scenario = "weather", gen_split = "src", gen_out;
    int gen_n = 10, gen_objects = -1;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset split");
    add_common(gen, gen_common);
    gen->add_option("--scenario", gen_scenario, "shift family: scene|weather|daynight")
        ->check(CLI::IsMember({"scene", "weather", "daynight"}));
    gen->add_option("--split", gen_split, "src (clean) or tgt (shifted)")
        ->check(CLI::IsMember({"src", "tgt"}));
    gen->add_option("--n", gen_n, "number of samples")->required();
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--objects", gen_objects, "objects per scene (default from spec)");

    // pretrain
    CommonOpts pre_common;
    std::string pre_src, pre_out, pre_csv;
    int pre_epochs = -1;
    double pre_lr = -1;
    auto* pre = app.add_subcommand("pretrain", "supervised source-domain training");
    add_common(pre, pre_common);
    pre->add_option("--src", pre_src, "source dataset directory")->required();
    pre->add_option("--out", pre_out, "output checkpoint path")->required();
    pre->add_option("--epochs", pre_epochs, "epoch override");
    pre->add_option("--lr", pre_lr, "learning-rate override");
    pre->add_option("--csv", pre_csv, "metrics CSV path");

    // adapt
    CommonOpts ad_common;
    std::string ad_src, ad_tgt, ad_ckpt, ad_out, ad_csv, ad_gate;
    int ad_epochs = -1;
    double ad_lr = -1;
    trainer::AblationToggles ad_toggles;
    auto* ad = app.add_subcommand("adapt", "teacher-student domain adaptation");
    add_common(ad, ad_common);
    ad->add_option("--src", ad_src, "source dataset directory")->required();
    ad->add_option("--tgt", ad_tgt, "target dataset directory")->required();
    ad->add_option("--ckpt", ad_ckpt, "source-pretrained checkpoint")->required();
    ad->add_option("--out", ad_out, "output checkpoint path")->required();
    ad->add_option("--epochs", ad_epochs, "epoch override");
    ad->add_option("--lr", ad_lr, "learning-rate override");
    ad->add_option("--csv", ad_csv, "metrics CSV path");
    ad->add_option("--gate", ad_gate, "depth gate: unc|conf|pred|lidar")
        ->check(CLI::IsMember({"unc", "conf", "pred", "lidar"}));
    bool no_da = false, no_ema = false, no_kt = false, no_pl = false;
    bool no_ba = false, no_ia = false, no_va = false;
    ad->add_flag("--no-da", no_da, "disable depth-aware composition");
    ad->add_flag("--no-ema", no_ema, "freeze the teacher");
    ad->add_flag("--no-kt", no_kt, "disable knowledge transfer");
    ad->add_flag("--no-pl", no_pl, "disable pseudo labels");
    ad->add_flag("--no-ba", no_ba, "drop the BEV space from alignment");
    ad->add_flag("--no-ia", no_ia, "drop the image space from alignment");
    ad->add_flag("--no-va", no_va, "drop the voxel space from alignment");

    // eval
    CommonOpts ev_common;
    std::string ev_data, ev_ckpt, ev_out;
    auto* ev = app.add_subcommand("eval", "camera-only evaluation (center-distance mAP)");
    add_common(ev, ev_common);
    ev->add_option("--data", ev_data, "dataset directory")->required();
    ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
    ev->add_option("--out", ev_out, "report JSON path");

    // ablate
    CommonOpts ab_common;
    std::string ab_src, ab_tgt, ab_eval, ab_out, ab_grid = "components", ab_seeds = "0,1,2";
    auto* ab = app.add_subcommand("ablate", "run an ablation grid and write a comparison table");
    add_common(ab, ab_common);
    ab->add_option("--src", ab_src, "source dataset directory")->required();
    ab->add_option("--tgt", ab_tgt, "target dataset directory")->required();
    ab->add_option("--eval", ab_eval, "target eval dataset directory")->required();
    ab->add_option("--out", ab_out, "output directory")->required();
    ab->add_option("--grid", ab_grid, "components|gate|transfer")
        ->check(CLI::IsMember({"components", "gate", "transfer"}));
    ab->add_option("--seeds", ab_seeds, "comma-separated seed list");

    // plot
    CommonOpts pl_common;
    std::string pl_metrics, pl_ckpt, pl_src, pl_tgt, pl_out = "plots";
    std::vector<std::string> pl_reports;
    auto* pl = app.add_subcommand("plot", "render loss curves, metric bars, prototype scatter");
    add_common(pl, pl_common);
    pl->add_option("--metrics", pl_metrics, "training metrics CSV");
    pl->add_option("--reports", pl_reports, "eval report JSON files")->delimiter(',');
    pl->add_option("--ckpt", pl_ckpt, "adapted checkpoint (for the prototype scatter)");
    pl->add_option("--src", pl_src, "source dataset (for the prototype scatter)");
    pl->add_option("--tgt", pl_tgt, "target dataset (for the prototype scatter)");
    pl->add_option("--out", pl_out, "output directory");

    std::vector<std::string> argv_vec = args;
    try {
        app.parse(argv_vec.empty() ? std::vector<std::string>{"--help"} : argv_vec);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        if (!args.empty()) {
            const std::vector<std::string> known = {"gen-data", "pretrain", "adapt",
                                                    "eval",     "ablate",   "plot"};
            int best = 1000;
            std::string suggestion;
            for (const auto& k : known) {
                const int d = edit_distance(args[0], k);
                if (d < best) {
                    best = d;
                    suggestion = k;
                }
            }
            if (best <= 4) std::cerr << "did you mean '" << suggestion << "'?\n";
        }
        return 2;
    }

    try {
        if (gen->parsed())
            return cmd_gen_data(gen_common, gen_scenario, gen_split, gen_n, gen_out, gen_objects);
        if (pre->parsed())
            return cmd_pretrain(pre_common, pre_src, pre_out, pre_epochs, pre_lr, pre_csv);
        if (ad->parsed()) {
            ad_toggles.da = !no_da;
            ad_toggles.ema = !no_ema;
            ad_toggles.kt = !no_kt;
            ad_toggles.pl = !no_pl;
            ad_toggles.ba = !no_ba;
            ad_toggles.ia = !no_ia;
            ad_toggles.va = !no_va;
            return cmd_adapt(ad_common, ad_src, ad_tgt, ad_ckpt, ad_out, ad_epochs, ad_lr, ad_csv,
                             ad_toggles, ad_gate);
        }
        if (ev->parsed()) return cmd_eval(ev_common, ev_data, ev_ckpt, ev_out);
        if (ab->parsed())
            return cmd_ablate(ab_common, ab_src, ab_tgt, ab_eval, ab_out, ab_grid, ab_seeds);
        if (pl->parsed())
            return cmd_plot(pl_common, pl_metrics, pl_reports, pl_ckpt, pl_src, pl_tgt, pl_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

} // namespace bevadapt::cli
