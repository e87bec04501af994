#include "flownorm/config_json.hpp"

namespace flownorm {

using nlohmann::json;

json config_to_json(const FlowNormParams& p) {
  return {{"activation_radius_multiplier", p.activation_radius_multiplier},
          {"tangent_radius_multiplier", p.tangent_radius_multiplier},
          {"min_weight", p.min_weight},
          {"mode", to_string(p.mode)}};
}

json config_to_json(const SolverConfig& c) {
  return {{"max_iterations_per_level", c.max_iterations_per_level},
          {"step_norm_threshold", c.step_norm_threshold},
          {"lm_initial_lambda", c.lm_initial_lambda},
          {"lambda_up", c.lambda_up},
          {"lambda_down", c.lambda_down},
          {"pyramid_levels", c.pyramid_levels},
          {"flownorm_levels", c.flownorm_levels},
          {"huber_delta", c.huber_delta},
          {"flow_norm", config_to_json(c.flow_norm)},
          {"use_patch", c.residual.use_patch},
          {"joint_depth", c.joint_depth}};
}

json config_to_json(const FlowProviderConfig& p) {
  return {{"kind", to_string(p.kind)},
          {"noise_sigma", p.noise_sigma},
          {"bias", {p.bias.x(), p.bias.y()}},
          {"seed", p.seed},
          {"block_matching",
           {{"patch_size", p.block_matching.patch_size},
            {"search_radius", p.block_matching.search_radius},
            {"min_score", p.block_matching.min_score},
            {"grid_width", p.block_matching.grid_width},
            {"grid_height", p.block_matching.grid_height}}}};
}

json config_to_json(const AlignerConfig& a) {
  return {{"id", a.id}, {"kind", to_string(a.kind)}, {"provider", config_to_json(a.provider)}};
}

json config_to_json(const SuccessThresholds& t) {
  return {{"rotation_deg", t.rotation_deg},
          {"translation_frac_of_depth", t.translation_frac_of_depth},
          {"lost_rotation_deg", t.lost_rotation_deg},
          {"lost_translation_frac_of_depth", t.lost_translation_frac_of_depth}};
}

namespace {

json configs_json(const std::vector<AlignerConfig>& configs) {
  json arr = json::array();
  for (const AlignerConfig& c : configs) arr.push_back(config_to_json(c));
  return arr;
}

}  // namespace

json config_to_json(const BasinTrialSpec& s) {
  return {{"scene", json::parse(s.scene.to_json())},
          {"pair_rotation_deg", {s.pair_rotation_deg.x(), s.pair_rotation_deg.y(), s.pair_rotation_deg.z()}},
          {"pair_translation", {s.pair_translation.x(), s.pair_translation.y(), s.pair_translation.z()}},
          {"rotation_noise_deg", s.rotation_noise_deg},
          {"translation_noise_frac", s.translation_noise_frac},
          {"trial_count", s.trial_count},
          {"seed", s.seed},
          {"configs", configs_json(s.configs)},
          {"solver", config_to_json(s.solver)},
          {"thresholds", config_to_json(s.thresholds)}};
}

json config_to_json(const SkipTrialSpec& s) {
  json j{{"scene", json::parse(s.scene.to_json())},
         {"num_frames", s.num_frames},
         {"step_deg", s.step_deg},
         {"step_accel_deg", s.step_accel_deg},
         {"swing_amplitude_deg", s.swing_amplitude_deg},
         {"swing_period_frames", s.swing_period_frames},
         {"skips", s.skips},
         {"runs_per_skip", s.runs_per_skip},
         {"acceptable_multiplier", s.acceptable_multiplier},
         {"seed", s.seed},
         {"configs", configs_json(s.configs)},
         {"solver", config_to_json(s.solver)},
         {"thresholds", config_to_json(s.thresholds)}};
  if (s.sequence_dir) j["sequence_dir"] = *s.sequence_dir;
  return j;
}

}  // namespace flownorm
