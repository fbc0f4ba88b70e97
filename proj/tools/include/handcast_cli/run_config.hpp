#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "handcast/denoiser.hpp"
#include "handcast/synthgen.hpp"
#include "handcast/training.hpp"

namespace handcast::cli {

struct ConfigKey {
  std::string key;
  std::string default_value;
  std::string help;
};

// Every recognised key with its default, in display order.
const std::vector<ConfigKey>& config_keys();

// Environment variable overriding `key`: HANDCAST_ + upper-cased key with
// '.' replaced by '_' (gen.seed -> HANDCAST_GEN_SEED).
std::string env_name(const std::string& key);

// Flat key-value settings resolved in layers: defaults, then a config file,
// then HANDCAST_* environment variables, then command-line flags.
class RunConfig {
 public:
  RunConfig();

  // "key = value" lines; '#' starts a comment. Throws ConfigError on unknown
  // keys or malformed lines and IoError on a missing file.
  void load_file(const std::filesystem::path& path);
  void load_env();
  // Throws ConfigError on an unknown key.
  void set(const std::string& key, const std::string& value);
  // Parses "key=value".
  void set_assignment(const std::string& assignment);

  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;

  GenConfig gen_config() const;
  // T, F, J and d_img come from the data; the rest from the settings.
  DenoiserConfig model_config(int T, int F, int J, int d_img) const;
  TrainConfig train_config() const;

  // Same format as load_file accepts.
  std::string serialize() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace handcast::cli
