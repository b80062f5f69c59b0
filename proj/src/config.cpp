#include "lyapgdm/config.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "lyapgdm/errors.hpp"

namespace lyapgdm::config {

namespace {

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw ConfigError(std::string(key) + ": expected " + std::string(want) + ", got '" + std::string(value) + "'");
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  if (trim(s).empty()) return parts;
  std::size_t begin = 0;
  while (true) {
    const std::size_t pos = s.find(sep, begin);
    parts.push_back(trim(s.substr(begin, pos - begin)));
    if (pos == std::string_view::npos) break;
    begin = pos + 1;
  }
  return parts;
}

template <typename Int>
Int parse_integer(std::string_view s, std::string_view key) {
  const std::string_view t = trim(s);
  Int v{};
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) bad_value(key, s, "an integer");
  return v;
}

bool parse_bool(std::string_view s, std::string_view key) {
  const std::string_view t = trim(s);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  bad_value(key, s, "true or false");
}

env::Vec2 parse_vec2(std::string_view s, std::string_view key) {
  const auto parts = split(s, ',');
  if (parts.size() != 2) bad_value(key, s, "a point 'x,y'");
  return {parse_double(parts[0], key), parse_double(parts[1], key)};
}

std::string format_vec2(env::Vec2 p) { return format_double(p.x) + "," + format_double(p.y); }

std::vector<int> parse_int_list(std::string_view s, std::string_view key) {
  std::vector<int> out;
  for (auto p : split(s, ',')) out.push_back(parse_integer<int>(p, key));
  return out;
}

std::vector<double> parse_double_list(std::string_view s, std::string_view key) {
  std::vector<double> out;
  for (auto p : split(s, ',')) out.push_back(parse_double(p, key));
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& xs, const char* sep, F fmt) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += sep;
    out += fmt(xs[i]);
  }
  return out;
}

std::string strip_quotes(std::string_view s) {
  s = trim(s);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return std::string(s);
}

struct Entry {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <typename Member>
Entry real(std::string key, Member member) {
  return {key, [member](const RunConfig& c) { return format_double(member(const_cast<RunConfig&>(c))); },
          [member, key](RunConfig& c, std::string_view v) { member(c) = parse_double(v, key); }};
}

template <typename Int, typename Member>
Entry integer(std::string key, Member member) {
  return {key, [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
          [member, key](RunConfig& c, std::string_view v) { member(c) = parse_integer<Int>(v, key); }};
}

template <typename Member>
Entry boolean(std::string key, Member member) {
  return {key, [member](const RunConfig& c) { return std::string(member(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [member, key](RunConfig& c, std::string_view v) { member(c) = parse_bool(v, key); }};
}

template <typename Member>
Entry int_list(std::string key, Member member) {
  return {key,
          [member](const RunConfig& c) {
            return join(member(const_cast<RunConfig&>(c)), ",", [](int w) { return std::to_string(w); });
          },
          [member, key](RunConfig& c, std::string_view v) { member(c) = parse_int_list(v, key); }};
}

template <typename Member>
Entry text(std::string key, Member member) {
  return {key, [member](const RunConfig& c) { return member(const_cast<RunConfig&>(c)); },
          [member](RunConfig& c, std::string_view v) { member(c) = strip_quotes(v); }};
}

template <typename Member>
Entry point(std::string key, Member member) {
  return {key, [member](const RunConfig& c) { return format_vec2(member(const_cast<RunConfig&>(c))); },
          [member, key](RunConfig& c, std::string_view v) { member(c) = parse_vec2(v, key); }};
}

#define FIELD(path) [](RunConfig& c) -> auto& { return c.path; }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back(real("env.area_x", FIELD(env.area_x)));
    t.push_back(real("env.area_y", FIELD(env.area_y)));
    t.push_back(point("env.start", FIELD(env.start)));
    t.push_back(point("env.dest", FIELD(env.dest)));
    t.push_back(real("env.altitude", FIELD(env.altitude)));
    t.push_back(real("env.v_max", FIELD(env.v_max)));
    t.push_back(integer<int>("env.horizon", FIELD(env.horizon)));
    t.push_back(real("env.dt", FIELD(env.dt)));
    t.push_back(real("env.bandwidth", FIELD(env.bandwidth)));
    t.push_back(real("env.tx_power", FIELD(env.tx_power)));
    t.push_back(real("env.energy_budget", FIELD(env.energy_budget)));
    t.push_back({"env.device_positions",
                 [](const RunConfig& c) { return join(c.env.device_positions, ";", format_vec2); },
                 [](RunConfig& c, std::string_view v) {
                   std::vector<env::Vec2> pts;
                   for (auto p : split(v, ';')) pts.push_back(parse_vec2(p, "env.device_positions"));
                   c.env.device_positions = std::move(pts);
                 }});
    t.push_back({"env.device_layout",
                 [](const RunConfig& c) {
                   return std::string(c.env.device_layout == env::DeviceLayout::fixed ? "fixed" : "random");
                 },
                 [](RunConfig& c, std::string_view v) {
                   const std::string_view s = trim(v);
                   if (s == "fixed") c.env.device_layout = env::DeviceLayout::fixed;
                   else if (s == "random") c.env.device_layout = env::DeviceLayout::random;
                   else bad_value("env.device_layout", v, "fixed or random");
                 }});
    t.push_back(integer<int>("env.device_count", FIELD(env.device_count)));
    t.push_back(integer<std::uint64_t>("env.device_seed", FIELD(env.device_seed)));
    t.push_back(real("env.beta0", FIELD(env.beta0)));
    t.push_back(real("env.noise_psd", FIELD(env.noise_psd)));
    t.push_back(real("env.v_weight", FIELD(env.v_weight)));

    t.push_back(real("trainer.gamma", FIELD(trainer.gamma)));
    t.push_back(real("trainer.tau", FIELD(trainer.tau)));
    t.push_back(integer<int>("trainer.batch", FIELD(trainer.batch)));
    t.push_back(integer<int>("trainer.warmup", FIELD(trainer.warmup)));
    t.push_back(real("trainer.actor_lr", FIELD(trainer.actor_lr)));
    t.push_back(real("trainer.critic_lr", FIELD(trainer.critic_lr)));
    t.push_back(integer<int>("trainer.episodes", FIELD(trainer.episodes)));
    t.push_back(integer<int>("trainer.updates_per_step", FIELD(trainer.updates_per_step)));
    t.push_back(integer<std::uint64_t>("trainer.seed", FIELD(trainer.seed)));
    t.push_back(integer<int>("trainer.buffer_capacity", FIELD(trainer.buffer_capacity)));
    t.push_back(real("trainer.grad_clip", FIELD(trainer.grad_clip)));
    t.push_back(real("trainer.explore_sigma_start", FIELD(trainer.explore_sigma_start)));
    t.push_back(real("trainer.explore_sigma_end", FIELD(trainer.explore_sigma_end)));
    t.push_back(boolean("trainer.explore", FIELD(trainer.explore)));
    t.push_back(int_list("trainer.critic_hidden", FIELD(networks.critic_hidden)));
    t.push_back(int_list("trainer.mlp_actor_hidden", FIELD(networks.mlp_actor_hidden)));
    t.push_back(integer<int>("trainer.checkpoint_every", FIELD(experiment.checkpoint_every)));

    t.push_back(integer<int>("diffusion.steps", FIELD(diffusion.steps)));
    t.push_back(real("diffusion.beta_min", FIELD(diffusion.beta_min)));
    t.push_back(real("diffusion.beta_max", FIELD(diffusion.beta_max)));
    t.push_back(integer<int>("diffusion.embed_dim", FIELD(diffusion.embed_dim)));
    t.push_back(real("diffusion.x0_clip", FIELD(diffusion.x0_clip)));
    t.push_back(boolean("diffusion.train_chain_noise", FIELD(diffusion.train_chain_noise)));
    t.push_back(boolean("diffusion.eval_chain_noise", FIELD(diffusion.eval_chain_noise)));
    t.push_back(int_list("diffusion.denoiser_hidden", FIELD(networks.denoiser_hidden)));

    t.push_back({"experiment.agent", [](const RunConfig& c) { return to_string(c.experiment.agent); },
                 [](RunConfig& c, std::string_view v) { c.experiment.agent = policy_kind_from_string(trim(v)); }});
    t.push_back(text("experiment.out", FIELD(experiment.out)));
    t.push_back(integer<int>("experiment.eval_episodes", FIELD(experiment.eval_episodes)));
    t.push_back(integer<std::uint64_t>("experiment.eval_seed", FIELD(experiment.eval_seed)));
    t.push_back(text("experiment.checkpoint", FIELD(experiment.checkpoint)));
    t.push_back(text("experiment.sweep_param", FIELD(experiment.sweep_param)));
    t.push_back({"experiment.sweep_values",
                 [](const RunConfig& c) { return join(c.experiment.sweep_values, ",", format_double); },
                 [](RunConfig& c, std::string_view v) {
                   c.experiment.sweep_values = parse_double_list(v, "experiment.sweep_values");
                 }});
    t.push_back({"experiment.sweep_mode",
                 [](const RunConfig& c) {
                   return std::string(c.experiment.sweep_mode == SweepMode::eval ? "eval" : "train");
                 },
                 [](RunConfig& c, std::string_view v) {
                   const std::string_view s = trim(v);
                   if (s == "eval") c.experiment.sweep_mode = SweepMode::eval;
                   else if (s == "train") c.experiment.sweep_mode = SweepMode::train;
                   else bad_value("experiment.sweep_mode", v, "eval or train");
                 }});
    return t;
  }();
  return table;
}

#undef FIELD

const Entry& find_entry(std::string_view key) {
  for (const Entry& e : entries()) {
    if (e.key == key) return e;
  }
  throw ConfigError(std::string(key) + ": unknown configuration key");
}

void require(bool ok, const char* key, const char* what) {
  if (!ok) throw ConfigError(std::string(key) + ": " + what);
}

}  // namespace

std::string to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::gdm_ddpg: return "gdm-ddpg";
    case PolicyKind::mlp_ddpg: return "mlp-ddpg";
    case PolicyKind::myopic: return "myopic";
    case PolicyKind::static_path: return "static";
    case PolicyKind::random: return "random";
  }
  return "?";
}

PolicyKind policy_kind_from_string(std::string_view s) {
  for (PolicyKind k : {PolicyKind::gdm_ddpg, PolicyKind::mlp_ddpg, PolicyKind::myopic,
                       PolicyKind::static_path, PolicyKind::random}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("experiment.agent: unknown policy '" + std::string(s) +
                    "' (expected gdm-ddpg, mlp-ddpg, myopic, static or random)");
}

bool is_learned(PolicyKind k) { return k == PolicyKind::gdm_ddpg || k == PolicyKind::mlp_ddpg; }

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

double parse_double(std::string_view s, std::string_view key) {
  std::string_view t = trim(s);
  if (!t.empty() && t.front() == '+') t.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) bad_value(key, s, "a number");
  return v;
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const Entry& e : entries()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

void set_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  find_entry(key).set(cfg, value);
}

std::string get_value(const RunConfig& cfg, std::string_view key) { return find_entry(key).get(cfg); }

void RunConfig::validate() const {
  env::EnvConfig e = env;
  e.materialize_devices();
  e.validate();
  trainer.validate();
  diffusion.validate();
  networks.validate();
  require(experiment.eval_episodes >= 1, "experiment.eval_episodes", "must be >= 1");
  require(experiment.checkpoint_every >= 0, "trainer.checkpoint_every", "must be >= 0");
  if (!experiment.sweep_param.empty()) {
    const auto& keys = known_keys();
    require(std::find(keys.begin(), keys.end(), experiment.sweep_param) != keys.end(),
            "experiment.sweep_param", "must name a configuration key");
    require(experiment.sweep_param.rfind("experiment.", 0) != 0, "experiment.sweep_param",
            "cannot sweep experiment settings");
  }
  for (double v : experiment.sweep_values) {
    require(std::isfinite(v), "experiment.sweep_values", "must be finite");
  }
}

namespace {

void parse_into(RunConfig& cfg, std::string_view text, std::vector<std::string>* assigned) {
  std::string section;
  int line_no = 0;
  std::size_t begin = 0;
  while (begin <= text.size()) {
    const std::size_t end = std::min(text.find('\n', begin), text.size());
    std::string_view line = text.substr(begin, end - begin);
    begin = end + 1;
    ++line_no;
    line = trim(line.substr(0, line.find('#')));
    // ';' separates device points, so it only starts a comment at the line start.
    if (line.empty() || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section != "env" && section != "trainer" && section != "diffusion" && section != "experiment") {
        throw ConfigError("line " + std::to_string(line_no) + ": unknown section [" + section + "]");
      }
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string_view raw_key = trim(line.substr(0, eq));
    const std::string key = raw_key.find('.') != std::string_view::npos || section.empty()
                                ? std::string(raw_key)
                                : section + "." + std::string(raw_key);
    set_value(cfg, key, line.substr(eq + 1));
    if (assigned) assigned->push_back(key);
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

RunConfig parse_config_text(std::string_view text) {
  RunConfig cfg;
  parse_into(cfg, text, nullptr);
  return cfg;
}

RunConfig parse_config_file(const std::string& path) { return parse_config_text(read_file(path)); }

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const Entry& e : entries()) {
    const std::size_t dot = e.key.find('.');
    const std::string sec = e.key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += e.key.substr(dot + 1) + " = " + e.get(cfg) + "\n";
  }
  return out;
}

RunConfig resolve(const std::optional<std::string>& path, const std::vector<Override>& overrides,
                  std::optional<std::uint64_t> explicit_seed, const char* env_seed) {
  RunConfig cfg;
  bool seed_set = false;
  if (path) {
    std::vector<std::string> assigned;
    parse_into(cfg, read_file(*path), &assigned);
    seed_set = std::find(assigned.begin(), assigned.end(), "trainer.seed") != assigned.end();
  }
  for (const Override& o : overrides) {
    set_value(cfg, o.key, o.value);
    if (o.key == "trainer.seed") seed_set = true;
  }
  if (explicit_seed) {
    cfg.trainer.seed = *explicit_seed;
  } else if (!seed_set && env_seed != nullptr && *env_seed != '\0') {
    cfg.trainer.seed = parse_integer<std::uint64_t>(env_seed, "LYAPGDM_SEED");
  }
  cfg.validate();
  return cfg;
}

}  // namespace lyapgdm::config
