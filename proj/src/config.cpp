// SPDX-License-Identifier: Apache-2.0
#include "dpose/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "dpose/error.hpp"

namespace dpose {

namespace {

std::string fmt(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);  // shortest form that round-trips
  return std::string(buf, r.ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& s) {
  T v{};
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) throw ConfigError("config: bad value '" + s + "' for " + key);
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("config: bad boolean '" + s + "' for " + key);
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class T>
Field number(std::function<T&(RunConfig&)> ref) {
  Field f;
  f.get = [ref](const RunConfig& c) {
    const T v = ref(const_cast<RunConfig&>(c));
    if constexpr (std::is_floating_point_v<T>) return fmt(v);
    else return std::to_string(v);
  };
  f.set = [ref](RunConfig& c, const std::string& s) { ref(c) = parse_number<T>("value", s); };
  return f;
}

#define DPOSE_NUM(type, expr) number<type>([](RunConfig& c) -> type& { return expr; })

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    t.emplace_back("preset", Field{[](const RunConfig& c) { return c.preset; },
                                   [](RunConfig& c, const std::string& s) { c.preset = s; }});
    t.emplace_back("net.input_size", DPOSE_NUM(int, c.net.input_size));
    for (int i = 0; i < 4; ++i) {
      t.emplace_back("net.c" + std::to_string(i),
                     Field{[i](const RunConfig& c) { return std::to_string(c.net.channels[static_cast<std::size_t>(i)]); },
                           [i](RunConfig& c, const std::string& s) {
                             c.net.channels[static_cast<std::size_t>(i)] = parse_number<int>("net.c", s);
                           }});
    }
    t.emplace_back("net.residual_blocks", DPOSE_NUM(int, c.net.residual_blocks));
    t.emplace_back("net.head_hidden", DPOSE_NUM(int, c.net.head_hidden));
    t.emplace_back("net.use_depth", Field{[](const RunConfig& c) { return std::string(c.net.use_depth ? "true" : "false"); },
                                          [](RunConfig& c, const std::string& s) { c.net.use_depth = parse_bool("net.use_depth", s); }});
    t.emplace_back("net.seed", DPOSE_NUM(std::uint64_t, c.net.seed));
    t.emplace_back("loss.depth_l1", DPOSE_NUM(double, c.loss.depth_l1));
    t.emplace_back("loss.depth_ssim", DPOSE_NUM(double, c.loss.depth_ssim));
    t.emplace_back("loss.segm", DPOSE_NUM(double, c.loss.segm));
    t.emplace_back("loss.pose", DPOSE_NUM(double, c.loss.pose));
    t.emplace_back("loss.shape", DPOSE_NUM(double, c.loss.shape));
    t.emplace_back("loss.j3d", DPOSE_NUM(double, c.loss.j3d));
    t.emplace_back("loss.v3d", DPOSE_NUM(double, c.loss.v3d));
    t.emplace_back("loss.j2d", DPOSE_NUM(double, c.loss.j2d));
    t.emplace_back("adam.lr", DPOSE_NUM(double, c.adam.lr));
    t.emplace_back("adam.beta1", DPOSE_NUM(double, c.adam.beta1));
    t.emplace_back("adam.beta2", DPOSE_NUM(double, c.adam.beta2));
    t.emplace_back("adam.eps", DPOSE_NUM(double, c.adam.eps));
    t.emplace_back("adam.weight_decay", DPOSE_NUM(double, c.adam.weight_decay));
    t.emplace_back("train.clip_norm", DPOSE_NUM(double, c.clip_norm));
    t.emplace_back("train.batch_size", DPOSE_NUM(int, c.batch_size));
    t.emplace_back("train.iterations", DPOSE_NUM(std::int64_t, c.iterations));
    t.emplace_back("train.seed", DPOSE_NUM(std::uint64_t, c.seed));
    t.emplace_back("train.log_every", DPOSE_NUM(std::int64_t, c.log_every));
    t.emplace_back("train.checkpoint_every", DPOSE_NUM(std::int64_t, c.checkpoint_every));
    t.emplace_back("train.deterministic", Field{[](const RunConfig& c) { return std::string(c.deterministic ? "true" : "false"); },
                                                [](RunConfig& c, const std::string& s) {
                                                  c.deterministic = parse_bool("train.deterministic", s);
                                                }});
    t.emplace_back("data.count", DPOSE_NUM(int, c.data.count));
    t.emplace_back("data.seed", DPOSE_NUM(std::uint64_t, c.data.seed));
    t.emplace_back("data.input_size", DPOSE_NUM(int, c.data.input_size));
    t.emplace_back("data.focal", DPOSE_NUM(double, c.data.frame.focal));
    t.emplace_back("data.cx0", DPOSE_NUM(double, c.data.frame.cx0));
    t.emplace_back("data.cy0", DPOSE_NUM(double, c.data.frame.cy0));
    t.emplace_back("data.width", DPOSE_NUM(int, c.data.frame.width));
    t.emplace_back("data.height", DPOSE_NUM(int, c.data.frame.height));
    t.emplace_back("data.verts_per_bone", DPOSE_NUM(int, c.data.body.verts_per_bone));
    t.emplace_back("data.body_seed", DPOSE_NUM(std::uint64_t, c.data.body.seed));
    t.emplace_back("data.max_joint_angle_deg", DPOSE_NUM(double, c.data.ranges.max_joint_angle_deg));
    t.emplace_back("data.root_yaw_deg", DPOSE_NUM(double, c.data.ranges.root_yaw_deg));
    t.emplace_back("data.root_tilt_deg", DPOSE_NUM(double, c.data.ranges.root_tilt_deg));
    t.emplace_back("data.beta_std", DPOSE_NUM(double, c.data.ranges.beta_std));
    t.emplace_back("data.beta_clip", DPOSE_NUM(double, c.data.ranges.beta_clip));
    t.emplace_back("data.distance_min", DPOSE_NUM(double, c.data.ranges.distance_min));
    t.emplace_back("data.distance_max", DPOSE_NUM(double, c.data.ranges.distance_max));
    t.emplace_back("data.lateral", DPOSE_NUM(double, c.data.ranges.lateral));
    t.emplace_back("data.bbox_margin", DPOSE_NUM(double, c.data.ranges.bbox_margin));
    t.emplace_back("data.noise_std", DPOSE_NUM(double, c.data.noise_std));
    t.emplace_back("data.no_depth_fraction", DPOSE_NUM(double, c.data.no_depth_fraction));
    t.emplace_back("data.train_fraction", DPOSE_NUM(double, c.data.train_fraction));
    return t;
  }();
  return table;
}

#undef DPOSE_NUM

}  // namespace

void RunConfig::validate() const {
  net.validate();
  data.validate();
  if (net.input_size != data.input_size) throw ConfigError("config: net.input_size and data.input_size differ");
  if (adam.weight_decay != 0.0) throw ConfigError("config: weight decay must be 0");
  if (!(adam.lr >= 0.0)) throw ConfigError("config: learning rate must be >= 0");
  if (!(clip_norm > 0.0)) throw ConfigError("config: clip_norm must be positive");
  if (batch_size <= 0) throw ConfigError("config: batch_size must be positive");
  if (iterations < 0) throw ConfigError("config: iterations must be >= 0");
  if (log_every <= 0 || checkpoint_every <= 0) throw ConfigError("config: log/checkpoint intervals must be positive");
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [key, f] : fields()) out += key + "=" + f.get(*this) + "\n";
  return out;
}

RunConfig RunConfig::parse(const std::string& text) {
  // Start from the named preset when one is given, then apply every key.
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto b = line.find_first_not_of(" \t\r"), e = line.find_last_not_of(" \t\r");
    if (b == std::string::npos) continue;
    line = line.substr(b, e - b + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config: line " + std::to_string(lineno) + " has no '='");
    auto trim = [](std::string s) {
      const auto x = s.find_first_not_of(" \t"), y = s.find_last_not_of(" \t");
      return x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  RunConfig c = preset_config(kv.count("preset") ? kv["preset"] : "paper");
  for (const auto& [key, value] : kv) {
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const auto& p) { return p.first == key; });
    if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
    try {
      it->second.set(c, value);
    } catch (const ConfigError&) {
      throw ConfigError("config: bad value '" + value + "' for " + key);
    }
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse(std::string(bytes.begin(), bytes.end()));
}

void RunConfig::save(const std::filesystem::path& path) const {
  const std::string t = to_text();
  write_file_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(t.data()), t.size()));
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  if (name == "paper") {
    c.preset = "paper";
    c.net = full_scale_net_config();
    c.data.input_size = 224;
    c.batch_size = 64;
    c.iterations = 200000;
    c.adam.lr = 1e-5;
    return c;
  }
  if (name == "desk") {
    c.preset = "desk";
    c.net = NetConfig{};
    c.data.input_size = c.net.input_size;
    c.batch_size = 8;
    c.iterations = 2000;
    c.adam.lr = 1e-4;
    c.checkpoint_every = 500;
    return c;
  }
  throw ConfigError("config: unknown preset '" + name + "' (expected desk or paper)");
}

}  // namespace dpose
