// SPDX-License-Identifier: Apache-2.0
#include "organ/config_io.hpp"

#include <fstream>

#include <json.hpp>

namespace organ {

namespace {

using nlohmann::json;

json parse_object(const std::string& text, const char* what) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string(what) + ": invalid JSON: " + e.what());
  }
  if (!j.is_object())
    throw ConfigError(std::string(what) + ": expected a JSON object");
  return j;
}

// Pulls typed values out of an object while tracking which keys were
// consumed, so leftovers can be reported by name.
class Reader {
 public:
  Reader(const json& j, const char* what) : j_(j), what_(what) {}

  template <typename T>
  void get(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.push_back(key);
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(std::string(what_) + ": key \"" + key +
                        "\" has the wrong type");
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool known = false;
      for (const auto& k : seen_)
        if (k == it.key()) {
          known = true;
          break;
        }
      if (!known)
        throw ConfigError(std::string(what_) + ": unknown key \"" + it.key() +
                          "\"");
    }
  }

 private:
  const json& j_;
  const char* what_;
  std::vector<std::string> seen_;
};

json arch_json(const ArchConfig& a) {
  return json{{"dim", a.dim},
              {"in_channels", a.in_channels},
              {"enc_channels", a.enc_channels},
              {"dec_channels", a.dec_channels},
              {"n_classes", a.n_classes},
              {"label_embed", a.label_embed},
              {"label_channels", a.label_channels},
              {"se_ratio", a.se_ratio},
              {"critic_dense", a.critic_dense},
              {"leaky_slope", a.leaky_slope},
              {"kernel", a.kernel},
              {"stride", a.stride},
              {"pad", a.pad},
              {"use_skips", a.use_skips},
              {"use_se", a.use_se}};
}

ArchConfig arch_from(const json& j) {
  ArchConfig a;
  Reader r(j, "arch config");
  r.get("dim", a.dim);
  r.get("in_channels", a.in_channels);
  r.get("enc_channels", a.enc_channels);
  r.get("dec_channels", a.dec_channels);
  r.get("n_classes", a.n_classes);
  r.get("label_embed", a.label_embed);
  r.get("label_channels", a.label_channels);
  r.get("se_ratio", a.se_ratio);
  r.get("critic_dense", a.critic_dense);
  r.get("leaky_slope", a.leaky_slope);
  r.get("kernel", a.kernel);
  r.get("stride", a.stride);
  r.get("pad", a.pad);
  r.get("use_skips", a.use_skips);
  r.get("use_se", a.use_se);
  r.finish();
  a.validate();
  return a;
}

json train_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"lr", c.lr},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"adam_eps", c.adam_eps},
              {"gp_lambda", c.gp_lambda},
              {"completion_k", c.completion_k},
              {"gen_every", c.gen_every},
              {"gen_sign", c.gen_sign},
              {"seed", c.seed},
              {"checkpoint_keep", c.checkpoint_keep}};
}

TrainConfig train_from(const json& j) {
  TrainConfig c;
  Reader r(j, "train config");
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("lr", c.lr);
  r.get("beta1", c.beta1);
  r.get("beta2", c.beta2);
  r.get("adam_eps", c.adam_eps);
  r.get("gp_lambda", c.gp_lambda);
  r.get("completion_k", c.completion_k);
  r.get("gen_every", c.gen_every);
  r.get("gen_sign", c.gen_sign);
  r.get("seed", c.seed);
  r.get("checkpoint_keep", c.checkpoint_keep);
  r.finish();
  c.validate();
  return c;
}

json fracture_json(const FractureParams& p) {
  return json{{"n_lo", p.n_lo},       {"n_hi", p.n_hi},
              {"m_lo", p.m_lo},       {"m_hi", p.m_hi},
              {"p_sphere", p.p_sphere}, {"seed", p.seed}};
}

FractureParams fracture_from(const json& j) {
  FractureParams p;
  Reader r(j, "fracture config");
  r.get("n_lo", p.n_lo);
  r.get("n_hi", p.n_hi);
  r.get("m_lo", p.m_lo);
  r.get("m_hi", p.m_hi);
  r.get("p_sphere", p.p_sphere);
  r.get("seed", p.seed);
  r.finish();
  p.validate();
  return p;
}

}  // namespace

std::string arch_to_json(const ArchConfig& a) { return arch_json(a).dump(2); }

ArchConfig arch_from_json(const std::string& text) {
  return arch_from(parse_object(text, "arch config"));
}

std::string train_to_json(const TrainConfig& c) {
  return train_json(c).dump(2);
}

TrainConfig train_from_json(const std::string& text) {
  return train_from(parse_object(text, "train config"));
}

std::string fracture_to_json(const FractureParams& p) {
  return fracture_json(p).dump(2);
}

FractureParams fracture_from_json(const std::string& text) {
  return fracture_from(parse_object(text, "fracture config"));
}

RunConfig run_config_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  json j = parse_object(text, "run config");
  RunConfig rc;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "arch")
      rc.arch = arch_from(*it);
    else if (it.key() == "train")
      rc.train = train_from(*it);
    else if (it.key() == "fracture")
      rc.fracture = fracture_from(*it);
    else
      throw ConfigError("run config: unknown section \"" + it.key() + "\"");
  }
  return rc;
}

}  // namespace organ
