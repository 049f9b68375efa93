#include "aquaforge/jsonconv.hpp"

namespace aquaforge {

using json = nlohmann::ordered_json;

void to_json(json& j, const SynthParams& p) {
  j = json{{"water_type", p.water_type},
           {"depth_m", p.depth_m},
           {"surface_light", {p.surface_light[0], p.surface_light[1], p.surface_light[2]}},
           {"artificial_peak", {p.artificial_peak[0], p.artificial_peak[1], p.artificial_peak[2]}},
           {"center_u", p.center_u},
           {"center_v", p.center_v},
           {"sigma_rate", p.sigma_rate},
           {"omega_a", p.omega_a},
           {"omega_b", p.omega_b},
           {"kappa", p.kappa}};
}

void from_json(const json& j, SynthParams& p) {
  j.at("water_type").get_to(p.water_type);
  j.at("depth_m").get_to(p.depth_m);
  for (int c = 0; c < 3; ++c) {
    p.surface_light[c] = j.at("surface_light").at(std::size_t(c)).get<double>();
    p.artificial_peak[c] = j.at("artificial_peak").at(std::size_t(c)).get<double>();
  }
  j.at("center_u").get_to(p.center_u);
  j.at("center_v").get_to(p.center_v);
  j.at("sigma_rate").get_to(p.sigma_rate);
  j.at("omega_a").get_to(p.omega_a);
  j.at("omega_b").get_to(p.omega_b);
  j.at("kappa").get_to(p.kappa);
}

void to_json(json& j, const ArchConfig& c) {
  j = json{{"num_enc_blocks", c.num_enc_blocks}, {"num_dec_blocks", c.num_dec_blocks},
           {"base_channels", c.base_channels},   {"max_channels", c.max_channels},
           {"use_skip", c.use_skip},             {"use_shortcut", c.use_shortcut},
           {"patch_size", c.patch_size}};
}

void to_json(json& j, const MetaConfig& c) {
  j = json{{"inner_lr", c.inner_lr},
           {"outer_lr", c.outer_lr},
           {"finetune_lr", c.finetune_lr},
           {"task_batch", c.task_batch},
           {"data_batch", c.data_batch},
           {"pretrain_epochs", c.pretrain_epochs},
           {"finetune_epochs", c.finetune_epochs},
           {"lr_decay_factor", c.lr_decay_factor},
           {"lr_decay_every_pretrain", c.lr_decay_every_pretrain},
           {"lr_decay_every_finetune", c.lr_decay_every_finetune},
           {"iters_per_epoch", c.iters_per_epoch},
           {"seed", c.seed}};
}

}  // namespace aquaforge
