#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "circadian/q_network.hpp"
#include "circadian/trainer.hpp"

namespace circadian {

/// Settings shared by the experiment protocols.
struct ProtocolConfig {
  int runs = 1000;
  std::uint64_t seed = 1;
  int jobs = 1;
  int horizon = 320;
  int clamp_start = 161;
  int delay = 10;
  int scan_begin = 33;
  int scan_end = 132;
  int scan_stride = 1;
  /// Neuron analysed by the single-neuron scans; -1 selects the layer mean.
  int neuron = -1;
  int prc_runs = 200;

  friend bool operator==(const ProtocolConfig&, const ProtocolConfig&) = default;
};

struct RunConfig {
  std::string profile = "paper";
  NetworkConfig network;
  TrainerConfig trainer;
  ProtocolConfig protocol;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Named preset: "paper" (published hyperparameters) or "desk" (reduced
/// width and update budget for a single CPU).
RunConfig profile_config(std::string_view name);

/// Applies one `key = value` setting. Throws ConfigError for unknown keys or
/// malformed values.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

/// Parses a key-value document: one `key = value` per line, `#` comments.
/// A `profile` key, if present, must come first and resets to that preset.
RunConfig parse_config(std::string_view text, RunConfig base);
RunConfig load_config(const std::filesystem::path& path, RunConfig base);

/// Network and trainer settings as ordered key-value pairs (round-trips
/// through apply_setting).
std::vector<std::pair<std::string, std::string>> config_settings(const RunConfig& config);

class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedVersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  int version = kCheckpointVersion;
  RunConfig config;
  int episode = 0;
  NetworkParams online;
  NetworkParams target;
  std::string rng_state;
};

/// Layout: text header (magic line, `version=N`, config key-values, one
/// `array <set>/<name> <rows> <cols> <shape>` line per array, `end_header`),
/// raw little-endian float64 values of every array in header order
/// (column-major), then a footer line `sha256=<hex>` over all preceding bytes.
std::string serialize_checkpoint(const Checkpoint& c);
Checkpoint deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary file and renames it into place.
void write_file(const std::filesystem::path& path, std::string_view bytes);

/// Shortest text that reads back to the same double.
std::string format_double(double x);

/// Creates `dir`, refusing a non-empty existing directory unless `force`.
void prepare_output_dir(const std::filesystem::path& dir, bool force);

/// Ordered key-value manifest, written as `key=value` lines.
using Manifest = std::vector<std::pair<std::string, std::string>>;
void write_manifest(const std::filesystem::path& dir, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace circadian
