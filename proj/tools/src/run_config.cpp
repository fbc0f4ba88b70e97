#include "handcast_cli/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "handcast/errors.hpp"

namespace handcast::cli {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys{
      {"gen.seed", "0", "generator seed"},
      {"gen.n", "64", "training sequences"},
      {"gen.n_val", "16", "validation sequences"},
      {"gen.fps", "10", "frame rate"},
      {"gen.T", "20", "observation frames"},
      {"gen.F", "10", "future frames"},
      {"gen.motion_mix", "0.3,0.2,0.3,0.2", "reach,carry,turn-and-reach,idle-sway proportions"},
      {"gen.width", "256", "image width in pixels"},
      {"gen.height", "256", "image height in pixels"},
      {"gen.fx", "128", "focal length x"},
      {"gen.fy", "128", "focal length y"},
      {"gen.cx", "128", "principal point x"},
      {"gen.cy", "128", "principal point y"},
      {"gen.feature_mode", "zeros", "image features: zeros or scene-encoding"},
      {"gen.d_img", "384", "image feature width"},
      {"model.d_z", "512", "latent width"},
      {"model.n_layers", "4", "transformer layers"},
      {"model.n_heads", "8", "attention heads"},
      {"model.d_ff", "2048", "feed-forward width"},
      {"model.N", "1000", "diffusion steps"},
      {"model.schedule", "linear", "noise schedule: linear or scaled-linear"},
      {"train.iterations", "40000", "total iterations"},
      {"train.lr", "1e-4", "Adam learning rate"},
      {"train.batch_size", "32", "sequences per batch"},
      {"train.lambda_vis", "0.1", "visibility loss weight"},
      {"train.lambda_reproj", "0.05", "reprojection loss weight"},
      {"train.seed", "0", "initialisation and sampling seed"},
      {"train.grad_clip", "0", "global gradient norm clip, 0 disables"},
      {"train.checkpoint_every", "0", "periodic checkpoint interval, 0 disables"},
      {"train.log_every", "100", "progress line interval"},
      {"eval.seed", "0", "sampling seed for the single evaluation sample"},
      {"eval.batch_size", "32", "sequences per sampling batch"},
  };
  return keys;
}

std::string env_name(const std::string& key) {
  std::string out = "HANDCAST_";
  for (char c : key) {
    out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return out;
}

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.key] = k.default_value;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  std::istringstream is(text);
  T v{};
  is >> v;
  if (!is || !(is >> std::ws).eof()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return v;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = trim(value);
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    if (line.find('=') == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(n) + ": expected key = value");
    }
    try {
      set_assignment(line);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

void RunConfig::load_env() {
  for (const auto& k : config_keys()) {
    if (const char* v = std::getenv(env_name(k.key).c_str())) set(k.key, v);
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

int RunConfig::get_int(const std::string& key) const { return parse_number<int>(key, get(key)); }
std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string& v = get(key);
  if (!v.empty() && v[0] == '-') throw ConfigError("config key '" + key + "' must be non-negative");
  return parse_number<std::uint64_t>(key, v);
}
double RunConfig::get_double(const std::string& key) const {
  return parse_number<double>(key, get(key));
}

GenConfig RunConfig::gen_config() const {
  GenConfig g;
  g.seed = get_u64("gen.seed");
  g.n_sequences = get_int("gen.n");
  g.fps = get_double("gen.fps");
  g.T = get_int("gen.T");
  g.F = get_int("gen.F");
  std::istringstream mix(get("gen.motion_mix"));
  std::string item;
  std::size_t i = 0;
  while (std::getline(mix, item, ',')) {
    if (i >= g.motion_mix.size()) throw ConfigError("gen.motion_mix needs 4 proportions");
    g.motion_mix[i++] = parse_number<double>("gen.motion_mix", trim(item));
  }
  if (i != g.motion_mix.size()) throw ConfigError("gen.motion_mix needs 4 proportions");
  g.image_size = {get_int("gen.width"), get_int("gen.height")};
  g.intrinsics = {get_double("gen.fx"), get_double("gen.fy"), get_double("gen.cx"),
                  get_double("gen.cy")};
  g.feature_mode = parse_feature_mode(get("gen.feature_mode"));
  g.d_img = get_int("gen.d_img");
  g.validate();
  return g;
}

DenoiserConfig RunConfig::model_config(int T, int F, int J, int d_img) const {
  DenoiserConfig m;
  m.d_z = get_int("model.d_z");
  m.n_layers = get_int("model.n_layers");
  m.n_heads = get_int("model.n_heads");
  m.d_ff = get_int("model.d_ff");
  m.N = get_int("model.N");
  m.schedule = parse_schedule_kind(get("model.schedule"));
  m.T = T;
  m.F = F;
  m.J = J;
  m.d_img = d_img;
  m.validate();
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.iterations = get_int("train.iterations");
  t.learning_rate = get_double("train.lr");
  t.batch_size = get_int("train.batch_size");
  t.lambda_vis = get_double("train.lambda_vis");
  t.lambda_reproj = get_double("train.lambda_reproj");
  t.seed = get_u64("train.seed");
  t.grad_clip = get_double("train.grad_clip");
  t.validate();
  return t;
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  for (const auto& k : config_keys()) os << k.key << " = " << values_.at(k.key) << "\n";
  return os.str();
}

void RunConfig::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << serialize();
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace handcast::cli
