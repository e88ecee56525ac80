#include "rldn/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <variant>

#include "rldn/errors.hpp"

namespace rldn {

namespace {

std::string trim(std::string s) {
  auto space = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), space));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), space).base(), s.end());
  return s;
}

std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "seeds are stored through size_t fields");
using Field = std::variant<int*, std::size_t*, double*, bool*, std::string*>;

std::vector<std::pair<std::string, Field>> fields(TrainConfig& c) {
  return {
      {"episodes", &c.episodes},
      {"max_steps", &c.max_steps},
      {"multi_passes", &c.multi_passes},
      {"image_size", &c.image_size},
      {"data_count", &c.data_count},
      {"dose", &c.dose},
      {"sigma", &c.sigma},
      {"data_seed", &c.data_seed},
      {"data_dir", &c.data_dir},
      {"seed", &c.seed},
      {"eval_every", &c.eval_every},
      {"checkpoint_every", &c.checkpoint_every},
      {"gamma", &c.ppo.gamma},
      {"lambda", &c.ppo.lambda},
      {"clip_epsilon", &c.ppo.clip_epsilon},
      {"ppo_lr", &c.ppo.learning_rate},
      {"entropy_coef", &c.ppo.entropy_coef},
      {"value_coef", &c.ppo.value_coef},
      {"rollout_horizon", &c.ppo.rollout_horizon},
      {"update_epochs", &c.ppo.update_epochs},
      {"minibatch", &c.ppo.minibatch},
      {"ednet_lr", &c.ednet_lr},
      {"ednet_weight_decay", &c.ednet_weight_decay},
      {"policy_weight_decay", &c.policy_weight_decay},
      {"ablation", &c.ablation},
  };
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = first + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) throw ArgumentError("config: bad value for " + key + ": '" + value + "'");
  return out;
}

void assign(const std::string& key, Field field, const std::string& value) {
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) {
          *p = value;
        } else if constexpr (std::is_same_v<T, bool>) {
          if (value == "true" || value == "1") *p = true;
          else if (value == "false" || value == "0") *p = false;
          else throw ArgumentError("config: bad boolean for " + key + ": '" + value + "'");
        } else {
          if constexpr (std::is_unsigned_v<T>) {
            if (!value.empty() && value[0] == '-') throw ArgumentError("config: " + key + " must be non-negative");
          }
          *p = parse_number<T>(key, value);
        }
      },
      field);
}

std::string render(Field field) {
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) return *p;
        else if constexpr (std::is_same_v<T, bool>) return *p ? "true" : "false";
        else if constexpr (std::is_same_v<T, double>) return fmt_double(*p);
        else return std::to_string(*p);
      },
      field);
}

}  // namespace

AblationConfig AblationConfig::from_id(const std::string& raw) {
  const std::string id = upper(trim(raw));
  AblationConfig a;
  if (id == "FULL") {
    a.description = "Full model (PPO + EDNet)";
    return a;
  }
  a.id = id;
  if (id == "A1") {
    a.description = "EDNet-Single (supervised MSE, no PPO)";
    a.use_ppo = false;
    a.fixed_passes = 1;
  } else if (id == "A2") {
    a.description = "EDNet-Multi (fixed 3-pass denoising, no PPO)";
    a.use_ppo = false;
    a.fixed_passes = 3;
  } else if (id == "A3") {
    a.description = "PPO without reward clipping";
    a.reward_clipping = false;
  } else if (id == "A4") {
    a.description = "PPO without GAE (Monte-Carlo advantages)";
    a.use_gae = false;
  } else if (id == "A5") {
    a.description = "PPO with fixed action set (no dynamic adaptation)";
    a.dynamic_actions = false;
    a.action_subset = {true, true, false, true, false};
  } else if (id == "A6") {
    a.description = "PPO-ApplyOnly (apply once / apply multi)";
    a.dynamic_actions = false;
    a.action_subset = {true, true, false, false, false};
  } else if (id == "A7") {
    a.description = "EDNet without skip connections";
    a.skip_connections = false;
  } else if (id == "A8") {
    a.description = "Reward using only PSNR";
    a.reward_mode = metrics::RewardMode::kPsnrOnly;
  } else if (id == "A9") {
    a.description = "Reward using only SSIM";
    a.reward_mode = metrics::RewardMode::kSsimOnly;
  } else {
    throw ArgumentError("unknown ablation id '" + raw + "' (expected full or A1..A9)");
  }
  return a;
}

const std::vector<std::string>& ablation_ids() {
  static const std::vector<std::string> ids = {"full", "A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9"};
  return ids;
}

void TrainConfig::validate() const {
  if (episodes <= 0) throw ArgumentError("episodes must be positive");
  if (max_steps <= 0) throw ArgumentError("max_steps must be positive");
  if (multi_passes <= 0) throw ArgumentError("multi_passes must be positive");
  if (image_size != 32 && image_size != 64 && image_size != 128) {
    throw ArgumentError("image_size must be 32, 64 or 128");
  }
  if (data_count < 5) throw ArgumentError("data_count must be at least 5");
  if (!(dose > 0.0)) throw ArgumentError("dose must be positive");
  if (!(sigma >= 0.0)) throw ArgumentError("sigma must be >= 0");
  if (eval_every < 0 || checkpoint_every < 0) throw ArgumentError("eval_every and checkpoint_every must be >= 0");
  if (!(ednet_lr > 0.0) || !(ednet_weight_decay >= 0.0) || !(policy_weight_decay >= 0.0)) {
    throw ArgumentError("optimizer settings out of range");
  }
  ppo.validate();
  AblationConfig::from_id(ablation);
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig c;
  auto table = fields(c);
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ArgumentError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = std::find_if(table.begin(), table.end(), [&](const auto& kv) { return kv.first == key; });
    if (it == table.end()) throw ArgumentError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ArgumentError("config: duplicate key '" + key + "'");
    assign(key, it->second, value);
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_text(const TrainConfig& config) {
  TrainConfig copy = config;
  std::string out;
  for (const auto& [key, field] : fields(copy)) out += key + " = " + render(field) + "\n";
  return out;
}

}  // namespace rldn
