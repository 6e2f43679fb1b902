#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stockrl/catalog.hpp"
#include "stockrl/ppo.hpp"

namespace stockrl {

/// Training settings shared by every preset.
inline PpoConfig common_ppo_config() {
  PpoConfig c;
  c.horizon = 200;
  c.gamma = 0.99;
  c.lr = 1e-4;
  c.share_layers = false;
  c.rollout_fragment_length = 200;
  c.train_batch_size = 8000;
  c.minibatch_size = 250;
  c.num_sgd_iter = 20;
  c.activation = nn::Activation::relu;
  c.gae_lambda = 1.0;
  c.kl_coeff = 0.2;
  c.kl_target = 0.01;
  c.entropy_coeff = 0.01;
  c.clip_eps = 0.3;
  return c;
}

namespace detail {

inline PpoConfig single_preset(HeadKind head, double lr, double vf_clip, double vf_coeff) {
  PpoConfig c = common_ppo_config();
  c.head = head;
  c.hidden = {512, 512};
  c.grad_clip = 40.0;
  c.lr = lr;
  c.share_layers = false;
  c.use_gae = true;
  c.vf_clip = vf_clip;
  c.vf_loss_coeff = vf_coeff;
  return c;
}

inline PpoConfig ippo_preset(double grad_clip, double lr, double vf_coeff) {
  PpoConfig c = common_ppo_config();
  c.head = HeadKind::gaussian;
  c.hidden = {512, 256};
  c.grad_clip = grad_clip;
  c.lr = lr;
  c.share_layers = true;
  c.use_gae = false;
  c.vf_clip = 5e2;
  c.vf_loss_coeff = vf_coeff;
  return c;
}

/// Gaussian agent small enough to train on a few CPU cores in minutes.
inline PpoConfig desk_preset(double lr) {
  PpoConfig c = single_preset(HeadKind::gaussian, lr, 1e3, 1e-2);
  c.hidden = {64, 64};
  return c;
}

}  // namespace detail

/// Named presets: the two single-item agent families in both action modes
/// one independent-learner preset per cluster size, and two small
/// Gaussian variants sized for a desk machine.
inline std::map<std::string, PpoConfig> builtin_presets() {
  using detail::ippo_preset;
  using detail::desk_preset;
  using detail::single_preset;
  return {
      {"ppo_d", single_preset(HeadKind::discrete, 1e-4, 1e3, 1.0)},
      {"ppo_d2", single_preset(HeadKind::discrete, 1e-4, 1e4, 1e-2)},
      {"ppo_c", single_preset(HeadKind::gaussian, 1e-4, 1e3, 1e-2)},
      {"ppo_c2", single_preset(HeadKind::gaussian, 2e-4, 5e2, 1e-2)},
      {"ippo_n1", ippo_preset(40.0, 5e-5, 1e-3)},
      {"ippo_n2", ippo_preset(20.0, 2e-5, 1e-4)},
      {"ippo_n3", ippo_preset(20.0, 2e-5, 1e-4)},
      {"ppo_c_desk", desk_preset(1e-4)},
      {"ippo_desk", desk_preset(3e-4)},
  };
}

inline nlohmann::json to_json(const PpoConfig& c) {
  return nlohmann::json{
      {"fcnet_hidden", c.hidden},
      {"fcnet_activation", nn::to_string(c.activation)},
      {"grad_clip", c.grad_clip},
      {"lr", c.lr},
      {"vf_share_layers", c.share_layers},
      {"use_gae", c.use_gae},
      {"lambda", c.gae_lambda},
      {"vf_clip_param", c.vf_clip},
      {"vf_loss_coeff", c.vf_loss_coeff},
      {"horizon", c.horizon},
      {"gamma", c.gamma},
      {"rollout_fragment_length", c.rollout_fragment_length},
      {"batch_mode", "complete_episodes"},
      {"train_batch_size", c.train_batch_size},
      {"sgd_minibatch_size", c.minibatch_size},
      {"num_sgd_iter", c.num_sgd_iter},
      {"normalize_actions", true},
      {"use_critic", true},
      {"kl_coeff", c.kl_coeff},
      {"kl_target", c.kl_target},
      {"adaptive_kl", c.adaptive_kl},
      {"entropy_coeff", c.entropy_coeff},
      {"clip_param", c.clip_eps},
      {"head", to_string(c.head)},
      {"normalize_advantages", c.normalize_advantages},
      {"reward_scale", c.reward_scale},
      {"action_stride", c.action_stride},
      {"total_timesteps", c.total_timesteps},
      {"workers", c.workers},
      {"observe_space", c.observe_space},
      {"share_policy", c.share_policy},
  };
}

/// Overrides the fields present in `j` on top of `base`. Unknown keys and
/// unsupported modes are errors.
inline PpoConfig config_from_json(const nlohmann::json& j, PpoConfig base = common_ppo_config()) {
  if (!j.is_object()) throw ParseError("training config must be a JSON object");
  PpoConfig c = std::move(base);
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "fcnet_hidden") c.hidden = v.get<std::vector<int>>();
      else if (key == "fcnet_activation") c.activation = nn::activation_from_string(v.get<std::string>());
      else if (key == "grad_clip") c.grad_clip = v.get<double>();
      else if (key == "lr") c.lr = v.get<double>();
      else if (key == "vf_share_layers") c.share_layers = v.get<bool>();
      else if (key == "use_gae") c.use_gae = v.get<bool>();
      else if (key == "lambda") c.gae_lambda = v.get<double>();
      else if (key == "vf_clip_param") c.vf_clip = v.get<double>();
      else if (key == "vf_loss_coeff") c.vf_loss_coeff = v.get<double>();
      else if (key == "horizon") c.horizon = v.get<int>();
      else if (key == "gamma") c.gamma = v.get<double>();
      else if (key == "rollout_fragment_length") c.rollout_fragment_length = v.get<int>();
      else if (key == "batch_mode") {
        if (v.get<std::string>() != "complete_episodes")
          throw ParseError("only complete_episodes batching is supported");
      } else if (key == "train_batch_size") c.train_batch_size = v.get<int>();
      else if (key == "sgd_minibatch_size") c.minibatch_size = v.get<int>();
      else if (key == "num_sgd_iter") c.num_sgd_iter = v.get<int>();
      else if (key == "normalize_actions") {
        if (!v.get<bool>()) throw ParseError("only normalized actions are supported");
      } else if (key == "use_critic") {
        if (!v.get<bool>()) throw ParseError("a critic is required");
      } else if (key == "kl_coeff") c.kl_coeff = v.get<double>();
      else if (key == "kl_target") c.kl_target = v.get<double>();
      else if (key == "adaptive_kl") c.adaptive_kl = v.get<bool>();
      else if (key == "entropy_coeff") c.entropy_coeff = v.get<double>();
      else if (key == "clip_param") c.clip_eps = v.get<double>();
      else if (key == "head") c.head = head_from_string(v.get<std::string>());
      else if (key == "normalize_advantages") c.normalize_advantages = v.get<bool>();
      else if (key == "reward_scale") c.reward_scale = v.get<double>();
      else if (key == "action_stride") c.action_stride = v.get<std::int64_t>();
      else if (key == "total_timesteps") c.total_timesteps = v.get<std::int64_t>();
      else if (key == "workers") c.workers = v.get<int>();
      else if (key == "observe_space") c.observe_space = v.get<int>();
      else if (key == "share_policy") c.share_policy = v.get<bool>();
      else throw ParseError("unknown training field '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("training field '" + key + "': " + e.what());
    } catch (const std::invalid_argument& e) {
      throw ParseError("training field '" + key + "': " + e.what());
    }
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("training config: ") + e.what());
  }
  return c;
}

inline PpoConfig preset(const std::string& name) {
  const auto all = builtin_presets();
  const auto it = all.find(name);
  if (it == all.end()) {
    std::string known;
    for (const auto& [k, v] : all) known += (known.empty() ? "" : ", ") + k;
    throw ParseError("unknown preset '" + name + "' (known: " + known + ")");
  }
  return it->second;
}

}  // namespace stockrl
