#include "circadian/store.hpp"

#include <openssl/evp.h>

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <functional>
#include <sstream>

namespace circadian {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kMagic = "circadian-checkpoint";
constexpr std::string_view kFooterKey = "sha256=";

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("bad value for " + std::string(key) + ": '" + std::string(text) + "'");
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("bad value for " + std::string(key) + ": '" + std::string(text) + "'");
}

std::vector<int> parse_int_list(std::string_view key, std::string_view text) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const auto item = text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    out.push_back(parse_number<int>(key, trim(item)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view key, std::string_view text, const std::array<Enum, N>& options) {
  for (Enum e : options)
    if (to_string(e) == text) return e;
  throw ConfigError("bad value for " + std::string(key) + ": '" + std::string(text) + "'");
}

std::string_view activation_name(nn::Activation a) {
  switch (a) {
    case nn::Activation::relu: return "relu";
    case nn::Activation::tanh: return "tanh";
    case nn::Activation::linear: return "linear";
  }
  return "?";
}

nn::Activation parse_activation(std::string_view key, std::string_view text) {
  for (auto a : {nn::Activation::relu, nn::Activation::tanh, nn::Activation::linear})
    if (activation_name(a) == text) return a;
  throw ConfigError("bad value for " + std::string(key) + ": '" + std::string(text) + "'");
}

std::string_view init_name(nn::Init i) {
  switch (i) {
    case nn::Init::glorot_uniform: return "glorot_uniform";
    case nn::Init::he_normal: return "he_normal";
    case nn::Init::orthogonal: return "orthogonal";
    case nn::Init::zeros: return "zeros";
    case nn::Init::ones: return "ones";
  }
  return "?";
}

nn::Init parse_init(std::string_view key, std::string_view text) {
  for (auto i : {nn::Init::glorot_uniform, nn::Init::he_normal})
    if (init_name(i) == text) return i;
  throw ConfigError("bad value for " + std::string(key) + ": '" + std::string(text) + "' (glorot_uniform|he_normal)");
}

struct Setting {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <typename T>
Setting number(std::string key, T RunConfig::*section, auto member) {
  return {key,
          [section, member](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<std::remove_cvref_t<decltype(c.*section.*member)>>)
              return format_double(c.*section.*member);
            else
              return std::to_string(c.*section.*member);
          },
          [key, section, member](RunConfig& c, std::string_view v) {
            using V = std::remove_cvref_t<decltype(c.*section.*member)>;
            c.*section.*member = parse_number<V>(key, v);
          }};
}

const std::vector<Setting>& settings_table() {
  static const std::vector<Setting> table = [] {
    std::vector<Setting> t;
    using N = NetworkConfig;
    using T = TrainerConfig;
    using P = ProtocolConfig;
    t.push_back(number("network.conv_channels", &RunConfig::network, &N::conv_channels));
    t.push_back(number("network.conv_kernel", &RunConfig::network, &N::conv_kernel));
    t.push_back({"network.fc_widths", [](const RunConfig& c) { return join(c.network.fc_widths); },
                 [](RunConfig& c, std::string_view v) { c.network.fc_widths = parse_int_list("network.fc_widths", v); }});
    t.push_back({"network.cell", [](const RunConfig& c) { return std::string(to_string(c.network.cell)); },
                 [](RunConfig& c, std::string_view v) {
                   c.network.cell = parse_enum("network.cell", v,
                                               std::array{nn::CellKind::lstm, nn::CellKind::gru, nn::CellKind::rnn});
                 }});
    t.push_back(number("network.recurrent_width", &RunConfig::network, &N::recurrent_width));
    t.push_back({"network.head_activation",
                 [](const RunConfig& c) { return std::string(activation_name(c.network.head_activation)); },
                 [](RunConfig& c, std::string_view v) {
                   c.network.head_activation = parse_activation("network.head_activation", v);
                 }});
    t.push_back({"network.recurrent_init",
                 [](const RunConfig& c) { return std::string(init_name(c.network.recurrent_init)); },
                 [](RunConfig& c, std::string_view v) { c.network.recurrent_init = parse_init("network.recurrent_init", v); }});
    t.push_back(number("network.l1", &RunConfig::network, &N::l1));
    t.push_back(number("network.l2", &RunConfig::network, &N::l2));

    t.push_back(number("trainer.episodes", &RunConfig::trainer, &T::episodes));
    t.push_back(number("trainer.steps_per_episode", &RunConfig::trainer, &T::steps_per_episode));
    t.push_back(number("trainer.gamma", &RunConfig::trainer, &T::gamma));
    t.push_back(number("trainer.learning_rate", &RunConfig::trainer, &T::learning_rate));
    t.push_back(number("trainer.target_beta", &RunConfig::trainer, &T::target_beta));
    t.push_back(number("trainer.replay_capacity", &RunConfig::trainer, &T::replay_capacity));
    t.push_back(number("trainer.sample_episodes", &RunConfig::trainer, &T::sample_episodes));
    t.push_back(number("trainer.train_steps_per_env_step", &RunConfig::trainer, &T::train_steps_per_env_step));
    t.push_back(number("trainer.warmup_episodes", &RunConfig::trainer, &T::warmup_episodes));
    t.push_back(number("trainer.epsilon_start", &RunConfig::trainer, &T::epsilon_start));
    t.push_back(number("trainer.epsilon_end", &RunConfig::trainer, &T::epsilon_end));
    t.push_back(number("trainer.epsilon_anneal_fraction", &RunConfig::trainer, &T::epsilon_anneal_fraction));
    t.push_back(number("trainer.eval_every", &RunConfig::trainer, &T::eval_every));
    t.push_back(number("trainer.bptt_length", &RunConfig::trainer, &T::bptt_length));
    t.push_back({"trainer.bootstrap_final_step",
                 [](const RunConfig& c) { return std::string(c.trainer.bootstrap_final_step ? "true" : "false"); },
                 [](RunConfig& c, std::string_view v) {
                   c.trainer.bootstrap_final_step = parse_bool("trainer.bootstrap_final_step", v);
                 }});
    t.push_back({"trainer.checkpoint_dense_begin",
                 [](const RunConfig& c) { return std::to_string(c.trainer.checkpoints.dense_begin); },
                 [](RunConfig& c, std::string_view v) {
                   c.trainer.checkpoints.dense_begin = parse_number<int>("trainer.checkpoint_dense_begin", v);
                 }});
    t.push_back({"trainer.checkpoint_dense_end",
                 [](const RunConfig& c) { return std::to_string(c.trainer.checkpoints.dense_end); },
                 [](RunConfig& c, std::string_view v) {
                   c.trainer.checkpoints.dense_end = parse_number<int>("trainer.checkpoint_dense_end", v);
                 }});
    t.push_back({"trainer.checkpoint_every",
                 [](const RunConfig& c) { return std::to_string(c.trainer.checkpoints.every); },
                 [](RunConfig& c, std::string_view v) {
                   c.trainer.checkpoints.every = parse_number<int>("trainer.checkpoint_every", v);
                 }});
    t.push_back({"trainer.optimizer", [](const RunConfig& c) { return std::string(to_string(c.trainer.optimizer)); },
                 [](RunConfig& c, std::string_view v) {
                   c.trainer.optimizer = parse_enum(
                       "trainer.optimizer", v,
                       std::array{nn::OptimizerKind::adam, nn::OptimizerKind::sgd, nn::OptimizerKind::rmsprop});
                 }});
    t.push_back(number("trainer.seed", &RunConfig::trainer, &T::seed));
    t.push_back(number("trainer.day_len", &RunConfig::trainer, &T::day_len));
    t.push_back(number("trainer.night_len", &RunConfig::trainer, &T::night_len));

    t.push_back(number("protocol.runs", &RunConfig::protocol, &P::runs));
    t.push_back(number("protocol.seed", &RunConfig::protocol, &P::seed));
    t.push_back(number("protocol.jobs", &RunConfig::protocol, &P::jobs));
    t.push_back(number("protocol.horizon", &RunConfig::protocol, &P::horizon));
    t.push_back(number("protocol.clamp_start", &RunConfig::protocol, &P::clamp_start));
    t.push_back(number("protocol.delay", &RunConfig::protocol, &P::delay));
    t.push_back(number("protocol.scan_begin", &RunConfig::protocol, &P::scan_begin));
    t.push_back(number("protocol.scan_end", &RunConfig::protocol, &P::scan_end));
    t.push_back(number("protocol.scan_stride", &RunConfig::protocol, &P::scan_stride));
    t.push_back(number("protocol.neuron", &RunConfig::protocol, &P::neuron));
    t.push_back(number("protocol.prc_runs", &RunConfig::protocol, &P::prc_runs));
    return t;
  }();
  return table;
}

void append_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t read_u64_le(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

std::string shape_text(const std::vector<int>& shape) { return join(shape); }

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

RunConfig profile_config(std::string_view name) {
  RunConfig c;
  if (name == "paper") {
    c.profile = "paper";
    return c;
  }
  if (name == "desk") {
    c.profile = "desk";
    c.network.recurrent_width = 32;
    c.trainer.episodes = 4000;
    c.trainer.train_steps_per_env_step = 1;
    // relu heads cannot represent the negative returns of a mostly random
    // early policy and die before learning starts at this update budget
    c.network.head_activation = nn::Activation::linear;
    c.trainer.sample_episodes = 8;
    return c;
  }
  throw ConfigError("unknown profile '" + std::string(name) + "' (paper|desk)");
}

void apply_setting(RunConfig& config, std::string_view key, std::string_view value) {
  if (key == "profile") {
    config = profile_config(value);
    return;
  }
  for (const auto& s : settings_table())
    if (s.key == key) {
      s.set(config, value);
      return;
    }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

RunConfig parse_config(std::string_view text, RunConfig base) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    apply_setting(base, trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)));
  }
  return base;
}

RunConfig load_config(const fs::path& path, RunConfig base) { return parse_config(read_file(path), std::move(base)); }

std::vector<std::pair<std::string, std::string>> config_settings(const RunConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  out.emplace_back("profile", config.profile);
  for (const auto& s : settings_table()) out.emplace_back(s.key, s.get(config));
  return out;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 computation failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string file_sha256(const fs::path& path) { return sha256_hex(read_file(path)); }

std::string serialize_checkpoint(const Checkpoint& c) {
  std::string out;
  out += kMagic;
  out += '\n';
  out += "version=" + std::to_string(c.version) + '\n';
  for (const auto& [k, v] : config_settings(c.config)) out += k + '=' + v + '\n';
  out += "episode=" + std::to_string(c.episode) + '\n';
  out += "rng_state=" + c.rng_state + '\n';
  const std::pair<const char*, const NetworkParams*> sets[] = {{"online", &c.online}, {"target", &c.target}};
  for (const auto& [set, params] : sets)
    for (const auto& a : params->arrays)
      out += "array " + std::string(set) + '/' + a.name + ' ' + std::to_string(a.value.rows()) + ' ' +
             std::to_string(a.value.cols()) + ' ' + shape_text(a.shape) + '\n';
  out += "end_header\n";
  for (const auto& [set, params] : sets)
    for (const auto& a : params->arrays)
      for (Eigen::Index i = 0; i < a.value.size(); ++i) append_u64_le(out, std::bit_cast<std::uint64_t>(a.value.data()[i]));
  out += std::string(kFooterKey) + sha256_hex(out) + '\n';
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  // Header lines up to end_header. The version is checked before integrity so
  // that files from another format version get the specific error.
  std::size_t pos = 0;
  auto next_line = [&](std::string_view& line) {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) return false;
    line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return true;
  };
  std::string_view line;
  if (!next_line(line) || line != kMagic) throw IntegrityError("not a checkpoint file (bad magic)");
  if (!next_line(line) || !line.starts_with("version="))
    throw IntegrityError("checkpoint header is missing its version");
  int version = 0;
  try {
    version = parse_number<int>("version", line.substr(8));
  } catch (const ConfigError&) {
    throw IntegrityError("checkpoint version is unreadable");
  }
  if (version != kCheckpointVersion)
    throw UnsupportedVersionError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                                  std::to_string(kCheckpointVersion) + ")");

  const auto footer = bytes.rfind(kFooterKey);
  if (footer == std::string_view::npos || footer + kFooterKey.size() + 65 != bytes.size() || bytes.back() != '\n')
    throw IntegrityError("checkpoint is truncated (no hash footer)");
  const std::string_view expected = bytes.substr(footer + kFooterKey.size(), 64);
  if (sha256_hex(bytes.substr(0, footer)) != expected) throw IntegrityError("checkpoint hash mismatch");

  Checkpoint c;
  c.version = version;
  struct ArraySpec {
    std::string set, name;
    Eigen::Index rows = 0, cols = 0;
    std::vector<int> shape;
  };
  std::vector<ArraySpec> specs;
  bool ended = false;
  try {
    while (next_line(line)) {
      if (line == "end_header") {
        ended = true;
        break;
      }
      if (line.starts_with("array ")) {
        std::istringstream in{std::string(line.substr(6))};
        std::string full, shape;
        ArraySpec s;
        in >> full >> s.rows >> s.cols >> shape;
        const auto slash = full.find('/');
        if (!in || slash == std::string::npos) throw IntegrityError("malformed array line");
        s.set = full.substr(0, slash);
        s.name = full.substr(slash + 1);
        s.shape = parse_int_list("shape", shape);
        specs.push_back(std::move(s));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw IntegrityError("malformed header line");
      const auto key = line.substr(0, eq);
      const auto value = line.substr(eq + 1);
      if (key == "episode") {
        c.episode = parse_number<int>(key, value);
      } else if (key == "rng_state") {
        c.rng_state = std::string(value);
      } else if (key == "profile") {
        c.config.profile = std::string(value);
      } else {
        apply_setting(c.config, key, value);
      }
    }
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("bad checkpoint header: ") + e.what());
  }
  if (!ended) throw IntegrityError("checkpoint header is not terminated");

  std::size_t needed = 0;
  for (const auto& s : specs) needed += static_cast<std::size_t>(s.rows * s.cols) * 8;
  if (pos + needed != footer) throw IntegrityError("checkpoint payload size does not match its header");
  for (const auto& s : specs) {
    nn::ParamArray a(s.name, s.shape, s.rows, s.cols);
    for (Eigen::Index i = 0; i < a.value.size(); ++i) {
      a.value.data()[i] = std::bit_cast<double>(read_u64_le(bytes.data() + pos));
      pos += 8;
    }
    if (s.set == "online") {
      c.online.arrays.push_back(std::move(a));
    } else if (s.set == "target") {
      c.target.arrays.push_back(std::move(a));
    } else {
      throw IntegrityError("unknown parameter set '" + s.set + "'");
    }
  }
  // The arrays must match the network the header describes.
  const NetworkParams expected_layout = QNetwork(c.config.network).zero_params();
  for (const NetworkParams* p : {&c.online, &c.target}) {
    if (p->size() != expected_layout.size()) throw IntegrityError("checkpoint arrays do not match its network config");
    for (std::size_t k = 0; k < p->size(); ++k)
      if ((*p)[k].name != expected_layout[k].name || (*p)[k].value.rows() != expected_layout[k].value.rows() ||
          (*p)[k].value.cols() != expected_layout[k].value.cols())
        throw IntegrityError("checkpoint array " + (*p)[k].name + " does not match its network config");
  }
  return c;
}

void save_checkpoint(const Checkpoint& c, const fs::path& path) { write_file(path, serialize_checkpoint(c)); }

Checkpoint load_checkpoint(const fs::path& path) { return deserialize_checkpoint(read_file(path)); }

void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw std::runtime_error(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force)
      throw std::runtime_error("output directory " + dir.string() + " is not empty (use --force to overwrite)");
    return;
  }
  fs::create_directories(dir);
}

void write_manifest(const fs::path& dir, const Manifest& manifest) {
  std::string text;
  for (const auto& [k, v] : manifest) text += k + '=' + v + '\n';
  write_file(dir / "manifest.txt", text);
}

Manifest read_manifest(const fs::path& path) {
  Manifest m;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    m.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return m;
}

}  // namespace circadian
