#pragma once

#include <nlohmann/json.hpp>

#include "bevadapt/scenegen.hpp"
#include "bevadapt/trainer.hpp"

// JSON bindings for the configuration types.

namespace bevadapt::scenegen {

inline void to_json(nlohmann::json& j, const Interval& v) { j = {v.lo, v.hi}; }
inline void from_json(const nlohmann::json& j, Interval& v) {
    v.lo = j.at(0).get<double>();
    v.hi = j.at(1).get<double>();
}

inline void to_json(nlohmann::json& j, const CategorySpec& c) {
    j = {{"name", c.name}, {"length", c.length}, {"width", c.width}, {"height", c.height}};
}
inline void from_json(const nlohmann::json& j, CategorySpec& c) {
    j.at("name").get_to(c.name);
    j.at("length").get_to(c.length);
    j.at("width").get_to(c.width);
    j.at("height").get_to(c.height);
}

inline void to_json(nlohmann::json& j, const SceneSpec& s) {
    j = {{"seed", s.seed},
         {"num_objects", s.num_objects},
         {"layout_x", {s.layout_x_min, s.layout_x_max}},
         {"layout_y", {s.layout_y_min, s.layout_y_max}},
         {"categories", s.categories},
         {"num_views", s.num_views},
         {"image_h", s.image_h},
         {"image_w", s.image_w},
         {"lidar_rays", s.lidar_rays},
         {"fov_deg", s.fov_deg},
         {"camera_height", s.camera_height},
         {"camera_radius", s.camera_radius},
         {"lidar_height", s.lidar_height},
         {"lidar_elev_min_deg", s.lidar_elev_min_deg},
         {"lidar_elev_max_deg", s.lidar_elev_max_deg},
         {"lidar_elev_count", s.lidar_elev_count},
         {"lidar_max_range", s.lidar_max_range},
         {"ego_clearance", s.ego_clearance}};
}
inline void from_json(const nlohmann::json& j, SceneSpec& s) {
    s = SceneSpec::defaults();
    j.at("seed").get_to(s.seed);
    j.at("num_objects").get_to(s.num_objects);
    s.layout_x_min = j.at("layout_x").at(0).get<double>();
    s.layout_x_max = j.at("layout_x").at(1).get<double>();
    s.layout_y_min = j.at("layout_y").at(0).get<double>();
    s.layout_y_max = j.at("layout_y").at(1).get<double>();
    j.at("categories").get_to(s.categories);
    j.at("num_views").get_to(s.num_views);
    j.at("image_h").get_to(s.image_h);
    j.at("image_w").get_to(s.image_w);
    j.at("lidar_rays").get_to(s.lidar_rays);
    j.at("fov_deg").get_to(s.fov_deg);
    j.at("camera_height").get_to(s.camera_height);
    j.at("camera_radius").get_to(s.camera_radius);
    j.at("lidar_height").get_to(s.lidar_height);
    j.at("lidar_elev_min_deg").get_to(s.lidar_elev_min_deg);
    j.at("lidar_elev_max_deg").get_to(s.lidar_elev_max_deg);
    j.at("lidar_elev_count").get_to(s.lidar_elev_count);
    j.at("lidar_max_range").get_to(s.lidar_max_range);
    j.at("ego_clearance").get_to(s.ego_clearance);
}

inline void to_json(nlohmann::json& j, const DomainShiftConfig& c) {
    j = {{"kind", to_string(c.kind)},
         {"gain", c.gain},
         {"gamma", c.gamma},
         {"noise_sigma", c.noise_sigma},
         {"streak_density", c.streak_density},
         {"palette_id", c.palette_id}};
}
inline void from_json(const nlohmann::json& j, DomainShiftConfig& c) {
    c.kind = shift_kind_from_string(j.at("kind").get<std::string>());
    j.at("gain").get_to(c.gain);
    j.at("gamma").get_to(c.gamma);
    j.at("noise_sigma").get_to(c.noise_sigma);
    j.at("streak_density").get_to(c.streak_density);
    j.at("palette_id").get_to(c.palette_id);
}

} // namespace bevadapt::scenegen

namespace bevadapt::geometry {

inline void to_json(nlohmann::json& j, const FrustumGrid& g) {
    j = {{"d_bins", g.d_bins}, {"d_min", g.d_min}, {"d_max", g.d_max}, {"stride", g.stride}};
}
inline void from_json(const nlohmann::json& j, FrustumGrid& g) {
    j.at("d_bins").get_to(g.d_bins);
    j.at("d_min").get_to(g.d_min);
    j.at("d_max").get_to(g.d_max);
    j.at("stride").get_to(g.stride);
}

inline void to_json(nlohmann::json& j, const VoxelGridSpec& v) {
    j = {{"x", {v.x_min, v.x_max}}, {"y", {v.y_min, v.y_max}}, {"z", {v.z_min, v.z_max}},
         {"dx", v.dx},             {"dy", v.dy},             {"dz", v.dz}};
}
inline void from_json(const nlohmann::json& j, VoxelGridSpec& v) {
    v.x_min = j.at("x").at(0).get<double>();
    v.x_max = j.at("x").at(1).get<double>();
    v.y_min = j.at("y").at(0).get<double>();
    v.y_max = j.at("y").at(1).get<double>();
    v.z_min = j.at("z").at(0).get<double>();
    v.z_max = j.at("z").at(1).get<double>();
    j.at("dx").get_to(v.dx);
    j.at("dy").get_to(v.dy);
    j.at("dz").get_to(v.dz);
}

} // namespace bevadapt::geometry

namespace bevadapt::perception {

inline void to_json(nlohmann::json& j, const NetConfig& n) {
    j = {{"image_h", n.image_h},       {"image_w", n.image_w},
         {"num_views", n.num_views},   {"enc_c1", n.enc_c1},
         {"enc_c2", n.enc_c2},         {"enc_c3", n.enc_c3},
         {"c_img", n.c_img},           {"depth_hidden", n.depth_hidden},
         {"dropout_rho", n.dropout_rho}, {"frustum", n.frustum},
         {"voxel", n.voxel},           {"bev_c_mid", n.bev_c_mid},
         {"c_bev", n.c_bev},           {"num_categories", n.num_categories},
         {"heat_bias_init", n.heat_bias_init}};
}
inline void from_json(const nlohmann::json& j, NetConfig& n) {
    j.at("image_h").get_to(n.image_h);
    j.at("image_w").get_to(n.image_w);
    j.at("num_views").get_to(n.num_views);
    j.at("enc_c1").get_to(n.enc_c1);
    j.at("enc_c2").get_to(n.enc_c2);
    j.at("enc_c3").get_to(n.enc_c3);
    j.at("c_img").get_to(n.c_img);
    j.at("depth_hidden").get_to(n.depth_hidden);
    j.at("dropout_rho").get_to(n.dropout_rho);
    j.at("frustum").get_to(n.frustum);
    j.at("voxel").get_to(n.voxel);
    j.at("bev_c_mid").get_to(n.bev_c_mid);
    j.at("c_bev").get_to(n.c_bev);
    j.at("num_categories").get_to(n.num_categories);
    j.at("heat_bias_init").get_to(n.heat_bias_init);
}

} // namespace bevadapt::perception

namespace bevadapt::objective {

inline void to_json(nlohmann::json& j, const LossWeights& w) {
    j = {w.lambda_uns, w.lambda_sup, w.lambda_mkt, w.lambda_gas};
}
inline void from_json(const nlohmann::json& j, LossWeights& w) {
    w.lambda_uns = j.at(0).get<double>();
    w.lambda_sup = j.at(1).get<double>();
    w.lambda_mkt = j.at(2).get<double>();
    w.lambda_gas = j.at(3).get<double>();
}

} // namespace bevadapt::objective

namespace bevadapt::trainer {

inline void to_json(nlohmann::json& j, const AblationToggles& t) {
    j = {{"da", t.da}, {"ema", t.ema}, {"kt", t.kt}, {"pl", t.pl},
         {"ba", t.ba}, {"ia", t.ia},   {"va", t.va},
         {"kt_bev", t.kt_bev}, {"kt_voxel", t.kt_voxel}, {"kt_image", t.kt_image}};
}
inline void from_json(const nlohmann::json& j, AblationToggles& t) {
    j.at("da").get_to(t.da);
    j.at("ema").get_to(t.ema);
    j.at("kt").get_to(t.kt);
    j.at("pl").get_to(t.pl);
    j.at("ba").get_to(t.ba);
    j.at("ia").get_to(t.ia);
    j.at("va").get_to(t.va);
    j.at("kt_bev").get_to(t.kt_bev);
    j.at("kt_voxel").get_to(t.kt_voxel);
    j.at("kt_image").get_to(t.kt_image);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"net", c.net},
         {"lr", c.lr},
         {"pretrain_epochs", c.pretrain_epochs},
         {"adapt_epochs", c.adapt_epochs},
         {"batch_size", c.batch_size},
         {"seed", c.seed},
         {"ema_alpha", c.ema_alpha},
         {"mc_passes", c.mc_passes},
         {"quantile_q", c.quantile_q},
         {"tau_pl", c.tau_pl},
         {"decode_threshold", c.decode_threshold},
         {"eval_threshold", c.eval_threshold},
         {"eval_max_k", c.eval_max_k},
         {"depth_loss_weight", c.depth_loss_weight},
         {"weights", c.weights},
         {"toggles", c.toggles},
         {"gate", dat::to_string(c.gate)},
         {"teacher_soft_blend", c.teacher_soft_blend},
         {"mkt_image_mean_views", c.mkt_image_mean_views},
         {"reversal_weight", c.reversal_weight},
         {"gas_proj_hidden", c.gas_proj_hidden},
         {"eval_thresholds", c.eval_thresholds}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    j.at("net").get_to(c.net);
    j.at("lr").get_to(c.lr);
    j.at("pretrain_epochs").get_to(c.pretrain_epochs);
    j.at("adapt_epochs").get_to(c.adapt_epochs);
    j.at("batch_size").get_to(c.batch_size);
    j.at("seed").get_to(c.seed);
    j.at("ema_alpha").get_to(c.ema_alpha);
    j.at("mc_passes").get_to(c.mc_passes);
    j.at("quantile_q").get_to(c.quantile_q);
    j.at("tau_pl").get_to(c.tau_pl);
    j.at("decode_threshold").get_to(c.decode_threshold);
    j.at("eval_threshold").get_to(c.eval_threshold);
    j.at("eval_max_k").get_to(c.eval_max_k);
    j.at("depth_loss_weight").get_to(c.depth_loss_weight);
    j.at("weights").get_to(c.weights);
    j.at("toggles").get_to(c.toggles);
    c.gate = dat::gate_mode_from_string(j.at("gate").get<std::string>());
    j.at("teacher_soft_blend").get_to(c.teacher_soft_blend);
    j.at("mkt_image_mean_views").get_to(c.mkt_image_mean_views);
    j.at("reversal_weight").get_to(c.reversal_weight);
    j.at("gas_proj_hidden").get_to(c.gas_proj_hidden);
    j.at("eval_thresholds").get_to(c.eval_thresholds);
}

} // namespace bevadapt::trainer
