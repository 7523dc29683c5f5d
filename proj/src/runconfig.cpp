#include "pcsg/runconfig.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "pcsg/kvfile.hpp"

namespace pcsg {

namespace {

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError("config field " + key + ": " + what);
}

template <class Get>
Field number(const std::string& key, Get ref, double lo, double hi = 1e300) {
  return {key, [ref](const RunConfig& c) { return format_double(ref(const_cast<RunConfig&>(c))); },
          [ref, key, lo, hi](RunConfig& c, const std::string& v) {
            const double x = parse_double(v, key);
            require(x >= lo && x <= hi, key, "value " + v + " outside [" + format_double(lo) + ", " + format_double(hi) + "]");
            ref(c) = x;
          }};
}

template <class Get>
Field count(const std::string& key, Get ref, long long lo, long long hi = (1LL << 53)) {
  return {key, [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
          [ref, key, lo, hi](RunConfig& c, const std::string& v) {
            const long long x = parse_int(v, key);
            require(x >= lo && x <= hi, key, "value " + v + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
            ref(c) = static_cast<std::remove_reference_t<decltype(ref(c))>>(x);
          }};
}

template <class Get>
Field flag(const std::string& key, Get ref) {
  return {key, [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [ref, key](RunConfig& c, const std::string& v) {
            require(v == "true" || v == "false", key, "expected true or false, got " + v);
            ref(c) = v == "true";
          }};
}

template <class Get>
Field text(const std::string& key, Get ref) {
  return {key, [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); },
          [ref](RunConfig& c, const std::string& v) { ref(c) = v; }};
}

#define PCSG_REF(expr) [](RunConfig & c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(text("name", PCSG_REF(name)));
    f.push_back(text("scenarios", PCSG_REF(scenarios)));
    f.push_back(text("episodes", PCSG_REF(episodes)));

    f.push_back(count("collect.seed_base", PCSG_REF(data_seed_base), 0));
    f.push_back(count("collect.seeds", PCSG_REF(data_seeds), 1, 100000));
    f.push_back(number("collect.goal_distance", PCSG_REF(goal_distance), 1.0));
    f.push_back(number("expert.cruise_speed", PCSG_REF(expert.cruise_speed), 0.1, 30.0));
    f.push_back(number("expert.curve_speed", PCSG_REF(expert.curve_speed), 0.1, 30.0));
    f.push_back(number("expert.approach_slowdown", PCSG_REF(expert.approach_slowdown), 0.0));
    f.push_back(number("expert.comfort_decel", PCSG_REF(expert.comfort_decel), 0.1, 8.0));
    f.push_back(number("expert.stop_wait", PCSG_REF(expert.stop_wait), 0.0));
    f.push_back(number("expert.lookahead", PCSG_REF(expert.lookahead), 0.5));
    f.push_back(number("expert.lookahead_gain", PCSG_REF(expert.lookahead_gain), 0.0));
    f.push_back(number("expert.light_margin", PCSG_REF(expert.light_margin), 0.0));
    f.push_back(number("expert.sign_margin", PCSG_REF(expert.sign_margin), 0.0));
    f.push_back(number("expert.follow_gap", PCSG_REF(expert.follow_gap), 0.0));
    f.push_back(flag("expert.run_red_lights", PCSG_REF(expert.run_red_lights)));

    f.push_back(count("model.init_seed", PCSG_REF(init_seed), 0));
    f.push_back(count("model.img_embed_dim", PCSG_REF(model.img_embed_dim), 1, 1 << 16));
    f.push_back(count("model.lidar_embed_dim", PCSG_REF(model.lidar_embed_dim), 1, 1 << 16));
    f.push_back(count("model.shared_dim", PCSG_REF(model.shared_dim), 1, 1 << 16));
    f.push_back(count("model.hidden_dim", PCSG_REF(model.hidden_dim), 1, 1 << 16));
    f.push_back(count("model.encoder_hidden", PCSG_REF(model.encoder_hidden), 1, 1 << 16));
    f.push_back(count("model.gauss_hidden", PCSG_REF(model.gauss_hidden), 1, 1 << 16));
    f.push_back(count("model.seg_hidden", PCSG_REF(model.seg_hidden), 1, 1 << 16));
    f.push_back(count("model.aux_hidden", PCSG_REF(model.aux_hidden), 1, 1 << 16));
    f.push_back(count("model.fusion_hidden", PCSG_REF(model.fusion_hidden), 1, 1 << 16));
    f.push_back(flag("model.use_shared", PCSG_REF(model.use_shared)));

    f.push_back(number("loss.eta_front", PCSG_REF(train.weights.eta_front), 0.0));
    f.push_back(number("loss.eta_td", PCSG_REF(train.weights.eta_td), 0.0));
    f.push_back(number("loss.eta_light", PCSG_REF(train.weights.eta_light), 0.0));
    f.push_back(number("loss.eta_stop", PCSG_REF(train.weights.eta_stop), 0.0));
    f.push_back(number("loss.eta_align", PCSG_REF(train.weights.eta_align), 0.0));
    f.push_back(number("loss.lambda_red", PCSG_REF(train.weights.lambda_red), 0.0));
    f.push_back(number("loss.lambda_stop", PCSG_REF(train.weights.lambda_stop), 0.0));
    f.push_back(number("loss.lambda_speed", PCSG_REF(train.weights.lambda_speed), 0.0));
    f.push_back(number("loss.eps_a", PCSG_REF(train.weights.eps_a), 0.0));
    f.push_back(number("loss.eps_v", PCSG_REF(train.weights.eps_v), 0.0));
    f.push_back(number("loss.v_lb", PCSG_REF(train.weights.v_lb), 0.0));
    f.push_back(number("loss.dt", PCSG_REF(train.weights.dt), 1e-6));

    f.push_back(count("train.epochs", PCSG_REF(train.epochs), 0, 100000));
    f.push_back(count("train.batch_size", PCSG_REF(train.batch_size), 2, 100000));
    f.push_back(count("train.seed", PCSG_REF(train.seed), 0));
    f.push_back(number("train.lr", PCSG_REF(train.adam.lr), 0.0, 10.0));
    f.push_back(number("train.lr_floor", PCSG_REF(train.lr_floor), 0.0, 1.0));
    f.push_back(number("train.beta1", PCSG_REF(train.adam.beta1), 0.0, 0.999999));
    f.push_back(number("train.beta2", PCSG_REF(train.adam.beta2), 0.0, 0.999999999));
    f.push_back(number("train.adam_eps", PCSG_REF(train.adam.eps), 1e-300, 1.0));

    for (const char* side : {"lateral", "longitudinal"}) {
      const std::string p = std::string("pid.") + side;
      const bool lat = std::string(side) == "lateral";
      auto gains = [lat](RunConfig& c) -> control::PidGains& { return lat ? c.pid.lateral : c.pid.longitudinal; };
      f.push_back(number(p + ".kp", [gains](RunConfig& c) -> auto& { return gains(c).kp; }, 0.0));
      f.push_back(number(p + ".ki", [gains](RunConfig& c) -> auto& { return gains(c).ki; }, 0.0));
      f.push_back(number(p + ".kd", [gains](RunConfig& c) -> auto& { return gains(c).kd; }, 0.0));
      f.push_back(number(p + ".integral_clamp", [gains](RunConfig& c) -> auto& { return gains(c).integral_clamp; }, 0.0));
    }
    f.push_back(number("pid.speed_scale", PCSG_REF(pid.speed_scale), 0.0));
    f.push_back(number("pid.brake_threshold", PCSG_REF(pid.brake_threshold), 0.0));
    f.push_back(number("pid.brake_ratio", PCSG_REF(pid.brake_ratio), 1.0));
    f.push_back(number("pid.brake_gain", PCSG_REF(pid.brake_gain), 0.0, 1.0));

    f.push_back({"eval.seeds",
                 [](const RunConfig& c) {
                   std::string s;
                   for (auto v : c.eval_seeds) s += (s.empty() ? "" : " ") + std::to_string(v);
                   return s;
                 },
                 [](RunConfig& c, const std::string& v) {
                   c.eval_seeds.clear();
                   for (const auto& w : split_ws(v)) {
                     const long long x = parse_int(w, "eval.seeds");
                     require(x >= 0, "eval.seeds", "negative seed " + w);
                     c.eval_seeds.push_back(static_cast<std::uint64_t>(x));
                   }
                   require(!c.eval_seeds.empty(), "eval.seeds", "at least one seed is required");
                 }});
    f.push_back(count("eval.workers", PCSG_REF(workers), 1, 256));

    f.push_back(number("attack.epsilon", PCSG_REF(epsilon), 0.0, 1.0));
    f.push_back(count("attack.dot_steps", PCSG_REF(dot.steps), 0, 1000000));
    f.push_back(number("attack.dot_lr", PCSG_REF(dot.lr), 0.0));
    f.push_back(count("attack.dot_batch_size", PCSG_REF(dot.batch_size), 2, 100000));
    f.push_back(count("attack.dot_seed", PCSG_REF(dot.seed), 0));
    f.push_back(number("attack.dot_radius", PCSG_REF(dot_radius), 0.5, 1000.0));
    f.push_back(count("attack.data_seed", PCSG_REF(attack_data_seed), 0));
    return f;
  }();
  return table;
}

#undef PCSG_REF

}  // namespace

std::vector<std::string> run_config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

std::string format_run_config(const RunConfig& cfg) {
  std::ostringstream os;
  os << kRunConfigHeader << '\n';
  for (const auto& f : fields()) os << f.key << " = " << f.get(cfg) << '\n';
  return os.str();
}

RunConfig parse_run_config(const std::string& text) {
  const KvFile kv = KvFile::parse(text, kRunConfigHeader);
  RunConfig cfg;
  std::set<std::string> seen;
  for (const auto& e : kv.entries()) {
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == e.key; });
    if (it == table.end()) throw ConfigError("line " + std::to_string(e.line) + ": unknown config field " + e.key);
    if (!seen.insert(e.key).second)
      throw ConfigError("line " + std::to_string(e.line) + ": config field " + e.key + " given twice");
    it->set(cfg, e.value);
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void save_run_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << format_run_config(cfg);
  if (!out) throw ConfigError("failed writing config " + path.string());
}

}  // namespace pcsg
