#include "runner/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdlib>
#include <map>
#include <set>

namespace drift::runner {

namespace {

using diffusion::BlockMode;

std::string where(const std::string& source, const YAML::Mark& mark) {
  if (mark.is_null()) return source;
  return source + ":" + std::to_string(mark.line + 1) + ":" + std::to_string(mark.column + 1);
}

// Walks one mapping, remembering which keys were consumed so that leftovers
// can be reported as unknown.
class Section {
 public:
  Section(YAML::Node node, std::string path, const std::string& source, const std::map<std::string, std::string>& ov)
      : node_(std::move(node)), path_(std::move(path)), source_(source), overrides_(ov) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) fail(node_, "expected a mapping");
  }

  [[noreturn]] void fail(const YAML::Node& at, const std::string& what, const std::string& key = "") const {
    const std::string full = key.empty() ? path_ : qualify(key);
    const auto ov = overrides_.find(full);
    const std::string loc = ov != overrides_.end() ? "override '" + ov->second + "'" : where(source_, at.Mark());
    throw ConfigError(loc + ": " + (full.empty() ? "" : full + ": ") + what);
  }

  YAML::Node raw(const std::string& key) {
    seen_.insert(key);
    return node_ && node_.IsMap() ? node_[key] : YAML::Node();
  }

  bool has(const std::string& key) const {
    return node_ && node_.IsMap() && node_[key] && !node_[key].IsNull();
  }

  Section child(const std::string& key) { return Section(raw(key), qualify(key), source_, overrides_); }

  template <typename T>
  void read(const std::string& key, T& out, const char* type_name) {
    YAML::Node n = raw(key);
    if (!n || n.IsNull()) return;
    if (!n.IsScalar()) fail(n, std::string("expected ") + type_name, key);
    try {
      out = n.as<T>();
    } catch (const YAML::BadConversion&) {
      fail(n, std::string("expected ") + type_name + ", got '" + n.Scalar() + "'", key);
    }
  }

  void read_int(const std::string& key, int& out) { read(key, out, "an integer"); }
  void read_size(const std::string& key, std::size_t& out) {
    long long v = static_cast<long long>(out);
    read(key, v, "an integer");
    if (v < 0) fail(raw(key), "must be >= 0", key);
    out = static_cast<std::size_t>(v);
  }
  void read_double(const std::string& key, double& out) {
    read(key, out, "a number");
    if (!std::isfinite(out)) fail(raw(key), "must be finite", key);
  }
  void read_bool(const std::string& key, bool& out) { read(key, out, "a boolean"); }
  void read_string(const std::string& key, std::string& out) { read(key, out, "a string"); }

  // "auto" (or absent) leaves `out` untouched and returns false.
  template <typename T>
  bool read_auto(const std::string& key, T& out, const char* type_name) {
    YAML::Node n = raw(key);
    if (!n || n.IsNull()) return false;
    if (n.IsScalar() && n.Scalar() == "auto") return false;
    read(key, out, type_name);
    return true;
  }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) fail(kv.first, "unknown key", key);
    }
  }

  std::string qualify(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  YAML::Node node() const { return node_; }

 private:
  YAML::Node node_;
  std::string path_;
  const std::string& source_;
  const std::map<std::string, std::string>& overrides_;
  std::set<std::string> seen_;
};

void set_path(YAML::Node node, const std::vector<std::string>& parts, std::size_t i, const YAML::Node& value) {
  if (i + 1 == parts.size()) {
    node[parts[i]] = value;
    return;
  }
  YAML::Node child = node[parts[i]];
  if (!child.IsMap()) child = YAML::Node(YAML::NodeType::Map);
  set_path(child, parts, i + 1, value);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

BlockMode parse_mode(Section& s, const std::string& key, const std::string& text) {
  if (text == "plain") return BlockMode::kPlain;
  if (text == "factored") return BlockMode::kFactored;
  if (text == "lora") return BlockMode::kLora;
  s.fail(s.raw(key), "unknown block mode '" + text + "' (plain | factored | lora)", key);
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides,
                       const std::string& source, bool honor_env_seed) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(where(source, e.mark) + ": " + e.msg);
  }
  if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  if (!root.IsMap()) throw ConfigError(where(source, root.Mark()) + ": top level must be a mapping");

  std::map<std::string, std::string> ov_text;
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "': expected key=value");
    const std::string key = o.substr(0, eq);
    YAML::Node value;
    try {
      value = YAML::Load(o.substr(eq + 1));
    } catch (const YAML::ParserException& e) {
      throw ConfigError("override '" + o + "': " + e.msg);
    }
    set_path(root, split(key, '.'), 0, value);
    ov_text[key] = o;
  }
  if (const char* env_seed = honor_env_seed ? std::getenv("DRIFT_SEED") : nullptr; env_seed && *env_seed) {
    root["seed"] = YAML::Load(env_seed);
    ov_text["seed"] = std::string("DRIFT_SEED=") + env_seed;
  }

  RunConfig cfg;
  harness::SessionConfig& sc = cfg.session;
  Section top(root, "", source, ov_text);
  top.read_string("run_id", sc.run_id);
  top.read_string("output_dir", cfg.output_dir);
  {
    long long seed = 0;
    top.read("seed", seed, "an integer");
    if (seed < 0) top.fail(top.raw("seed"), "must be >= 0", "seed");
    sc.seed = static_cast<std::uint64_t>(seed);
  }

  Section session = top.child("session");
  if (!session.has("strategy")) {
    const YAML::Node at = top.has("session") ? top.raw("session") : root;
    throw ConfigError(where(source, at.Mark()) + ": session.strategy: missing required field");
  }
  {
    std::string name;
    session.read_string("strategy", name);
    const auto s = harness::parse_strategy(name);
    if (!s) {
      session.fail(session.raw("strategy"),
                   "unknown strategy '" + name +
                       "' (drift_rm | fpmo | mplo | drift_lora_static | drift_lora_sched | hg_full | bc)",
                   "strategy");
    }
    sc.strategy = *s;
  }
  session.read_int("offline_epochs", sc.offline_epochs);
  session.read_int("online_iterations", sc.online_iterations);
  session.read_size("offline_rollouts", sc.offline_rollouts);
  session.read_size("eval_rollouts", sc.eval_rollouts);
  session.read_int("checkpoint_every", sc.checkpoint_every);
  session.read_bool("qr_refresh", sc.qr_refresh);
  session.finish();

  Section env = top.child("env");
  env.read_double("dt", sc.env.dt);
  env.read_double("v_max", sc.env.v_max);
  env.read_double("tolerance", sc.env.tolerance);
  env.read_int("max_steps", sc.env.max_steps);
  env.read_double("min_separation", sc.env.min_separation);
  env.finish();
  if (sc.env.dt <= 0 || sc.env.v_max <= 0 || sc.env.tolerance <= 0 || sc.env.max_steps < 1)
    env.fail(env.node(), "dt, v_max, tolerance and max_steps must be positive");

  Section net = top.child("net");
  sc.net.mode = harness::default_mode(sc.strategy);
  {
    std::string mode;
    if (net.read_auto("mode", mode, "a string")) {
      sc.net.mode = parse_mode(net, "mode", mode);
      const bool full_rank = sc.strategy == harness::Strategy::kHgFull || sc.strategy == harness::Strategy::kBc;
      const auto expected = harness::default_mode(sc.strategy);
      if (full_rank ? sc.net.mode == BlockMode::kLora : sc.net.mode != expected) {
        net.fail(net.raw("mode"),
                 "strategy " + harness::to_string(sc.strategy) + " cannot run with mode " + mode + " (expected " +
                     (full_rank ? std::string("plain or factored") : diffusion::to_string(expected)) + ")",
                 "mode");
      }
    }
  }
  if (net.has("channels")) {
    YAML::Node ch = net.raw("channels");
    if (!ch.IsSequence() || ch.size() == 0) net.fail(ch, "expected a non-empty list of integers", "channels");
    sc.net.channels.clear();
    for (const auto& c : ch) {
      long long v = 0;
      try {
        v = c.as<long long>();
      } catch (const YAML::BadConversion&) {
        net.fail(c, "expected a list of integers", "channels");
      }
      if (v <= 0) net.fail(c, "channel widths must be positive", "channels");
      sc.net.channels.push_back(static_cast<std::size_t>(v));
    }
  } else {
    net.raw("channels");
  }
  net.read_size("mid_blocks", sc.net.mid_blocks);
  net.read_size("kernel", sc.net.kernel);
  net.read_size("horizon", sc.net.horizon);
  net.read_size("obs_horizon", sc.net.obs_horizon);
  net.read_size("time_embed_dim", sc.net.time_embed_dim);
  net.read_size("cond_dim", sc.net.cond_dim);
  net.read_double("lora_alpha", sc.net.lora_alpha);
  net.finish();

  Section sch = top.child("schedule");
  {
    std::string kind;
    sch.read_string("kind", kind);
    if (!kind.empty()) {
      const auto k = sched::parse_decay_kind(kind);
      if (!k) {
        sch.fail(sch.raw("kind"),
                 "unknown decay kind '" + kind + "' (linear | cosine | sigmoid | exponential | constant)", "kind");
      }
      sc.schedule.kind = *k;
    }
  }
  sch.read_auto("r_max", sc.schedule.r_max, "an integer or auto");
  sch.read_int("r_min", sc.schedule.r_min);
  sch.read_auto("total_epochs", sc.schedule.total_epochs, "an integer or auto");
  {
    std::string span;
    sch.read_string("span", span);
    if (!span.empty()) {
      const auto s = harness::parse_schedule_span(span);
      if (!s) sch.fail(sch.raw("span"), "unknown schedule span '" + span + "' (offline | combined)", "span");
      sc.schedule_span = *s;
    }
  }
  sch.read_double("steepness", sc.schedule.steepness);
  {
    double mid = 0;
    if (sch.read_auto("midpoint", mid, "a number or auto")) sc.schedule.midpoint = mid;
  }
  sch.finish();

  Section opt = top.child("optimizer");
  opt.read_double("lr", sc.optimizer.lr);
  opt.read_double("beta1", sc.optimizer.beta1);
  opt.read_double("beta2", sc.optimizer.beta2);
  opt.read_double("eps", sc.optimizer.eps);
  opt.read_size("batch_size", sc.batch_size);
  opt.finish();

  Section gate = top.child("gate");
  {
    double t = 0;
    if (gate.read_auto("threshold", t, "a number or auto")) sc.gate_threshold = t;
  }
  gate.finish();

  Section diff = top.child("diffusion");
  diff.read_size("steps", sc.diffusion_steps);
  diff.read_double("beta_start", sc.beta_start);
  diff.read_double("beta_end", sc.beta_end);
  diff.read_bool("clip_sample", sc.clip_sample);
  diff.finish();

  Section ev = top.child("eval");
  ev.read_size("exec_steps", sc.exec_steps);
  ev.finish();
  top.finish();

  try {
    sc = harness::resolve(sc);
  } catch (const ConfigError& e) {
    throw ConfigError(where(source, top.has("session") ? root["session"].Mark() : root.Mark()) + ": " + e.what());
  }
  return cfg;
}

nlohmann::json to_json(const RunConfig& cfg) {
  const auto& s = cfg.session;
  nlohmann::json j;
  j["run_id"] = s.run_id;
  j["seed"] = s.seed;
  j["output_dir"] = cfg.output_dir;
  j["session"] = {{"strategy", harness::to_string(s.strategy)},
                  {"offline_epochs", s.offline_epochs},
                  {"online_iterations", s.online_iterations},
                  {"offline_rollouts", s.offline_rollouts},
                  {"eval_rollouts", s.eval_rollouts},
                  {"checkpoint_every", s.checkpoint_every},
                  {"qr_refresh", s.qr_refresh}};
  j["env"] = {{"dt", s.env.dt},
              {"v_max", s.env.v_max},
              {"tolerance", s.env.tolerance},
              {"max_steps", s.env.max_steps},
              {"min_separation", s.env.min_separation}};
  j["net"] = {{"mode", diffusion::to_string(s.net.mode)},
              {"channels", s.net.channels},
              {"mid_blocks", s.net.mid_blocks},
              {"kernel", s.net.kernel},
              {"horizon", s.net.horizon},
              {"obs_horizon", s.net.obs_horizon},
              {"time_embed_dim", s.net.time_embed_dim},
              {"cond_dim", s.net.cond_dim},
              {"lora_alpha", s.net.lora_alpha}};
  j["schedule"] = {{"kind", sched::to_string(s.schedule.kind)},
                   {"r_max", s.schedule.r_max},
                   {"r_min", s.schedule.r_min},
                   {"total_epochs", s.schedule.total_epochs},
                   {"span", harness::to_string(s.schedule_span)},
                   {"steepness", s.schedule.steepness},
                   {"midpoint", s.schedule.midpoint ? nlohmann::json(*s.schedule.midpoint) : nlohmann::json("auto")}};
  j["optimizer"] = {{"lr", s.optimizer.lr},
                    {"beta1", s.optimizer.beta1},
                    {"beta2", s.optimizer.beta2},
                    {"eps", s.optimizer.eps},
                    {"batch_size", s.batch_size}};
  j["gate"] = {{"threshold", s.gate_threshold ? nlohmann::json(*s.gate_threshold) : nlohmann::json("auto")}};
  j["diffusion"] = {{"steps", s.diffusion_steps},
                    {"beta_start", s.beta_start},
                    {"beta_end", s.beta_end},
                    {"clip_sample", s.clip_sample}};
  j["eval"] = {{"exec_steps", s.exec_steps}};
  return j;
}

std::string canonical_config(const RunConfig& cfg) { return to_json(cfg).dump(); }

std::uint64_t config_hash(const std::string& canonical) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

}  // namespace drift::runner
