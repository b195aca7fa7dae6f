// Command-line driver: training, evaluation and the experiment protocols.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "circadian/gradcheck_suite.hpp"
#include "circadian/protocols.hpp"
#include "circadian/store.hpp"
#include "circadian/trainer.hpp"

namespace fs = std::filesystem;
using namespace circadian;

namespace {

constexpr const char* kArtifactVersion = "1";

struct Options {
  std::string config;
  std::string profile;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::string out;
  std::optional<int> runs;
  std::string variant;
  std::string clamp;
  std::optional<int> jobs;
  bool force = false;
  bool oracle = false;
  int progress_every = 100;
  std::vector<std::string> logs;
};

RunConfig resolve_config(const Options& o) {
  RunConfig c = profile_config(o.profile.empty() ? "paper" : o.profile);
  if (!o.config.empty()) c = load_config(o.config, c);
  if (o.seed) {
    c.trainer.seed = *o.seed;
    c.protocol.seed = *o.seed;
  }
  if (o.runs) {
    c.protocol.runs = *o.runs;
    c.protocol.prc_runs = *o.runs;
  }
  if (o.jobs) c.protocol.jobs = *o.jobs;
  return c;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

Manifest base_manifest(std::string_view protocol, const RunConfig& c) {
  Manifest m{{"protocol", std::string(protocol)},
             {"artifact_version", kArtifactVersion},
             {"created", timestamp()},
             {"seed", std::to_string(c.protocol.seed)},
             {"runs", std::to_string(c.protocol.runs)}};
  for (auto& kv : config_settings(c))
    if (kv.first == "profile" || kv.first.starts_with("protocol.")) m.push_back(kv);
  m.emplace_back("run_seed_rule", "run i uses environment seed derive_seed(protocol.seed, 100, i)");
  return m;
}

void add_checkpoint(Manifest& m, const std::string& path) {
  m.emplace_back("checkpoint", path);
  m.emplace_back("checkpoint_sha256", file_sha256(path));
}

int clamp_value(const std::string& clamp) {
  if (clamp == "day") return 1;
  if (clamp == "night") return 0;
  throw std::invalid_argument("--clamp must be day or night");
}

Policy policy_from(const Options& o, Manifest& m) {
  if (o.oracle) {
    m.emplace_back("policy", "oracle");
    return Policy::oracle();
  }
  if (o.checkpoint.empty()) throw std::invalid_argument("--checkpoint is required (or --oracle)");
  add_checkpoint(m, o.checkpoint);
  Checkpoint c = load_checkpoint(o.checkpoint);
  m.emplace_back("checkpoint_episode", std::to_string(c.episode));
  return Policy::network(c.config.network, std::move(c.online));
}

fs::path require_out(const Options& o) {
  if (o.out.empty()) throw std::invalid_argument("--out is required");
  prepare_output_dir(o.out, o.force);
  return o.out;
}

// Directory holding episode_*.ckpt files: either given directly or a
// training output directory with a checkpoints/ subdirectory.
fs::path checkpoint_dir(const Options& o) {
  if (o.checkpoint.empty()) throw std::invalid_argument("--checkpoint must name a checkpoint directory");
  const fs::path p(o.checkpoint);
  if (fs::is_directory(p / "checkpoints")) return p / "checkpoints";
  return p;
}

std::vector<int> scan_episodes(const ProtocolConfig& p) {
  std::vector<int> out;
  for (int e = p.scan_begin; e <= p.scan_end; e += std::max(1, p.scan_stride)) out.push_back(e);
  return out;
}

int cmd_train(const Options& o) {
  RunConfig c = resolve_config(o);
  const fs::path dir = require_out(o);
  const fs::path ckpt_dir = dir / "checkpoints";
  fs::create_directories(ckpt_dir);
  std::string cfg_text;
  for (const auto& [k, v] : config_settings(c)) cfg_text += k + " = " + v + "\n";
  write_file(dir / "config.txt", cfg_text);

  Manifest m = base_manifest("train", c);
  for (const auto& kv : config_settings(c))
    if (!kv.first.starts_with("protocol.") && kv.first != "profile") m.push_back(kv);
  const auto started = std::chrono::steady_clock::now();
  auto on_checkpoint = [&](const TrainingSnapshot& s) {
    Checkpoint ck;
    ck.config = c;
    ck.episode = s.episode;
    ck.online = s.online;
    ck.target = s.target;
    ck.rng_state = s.rng_state;
    save_checkpoint(ck, checkpoint_path(ckpt_dir, s.episode));
  };
  auto on_progress = [&](const EpisodeStats& s, const EvalRecord* e) {
    if (s.episode % o.progress_every != 0 && s.episode != c.trainer.episodes) return;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::cout << "episode " << s.episode << " train_reward " << s.train_reward << " loss " << s.mean_loss
              << " epsilon " << s.epsilon;
    if (e) std::cout << " eval_reward " << e->reward;
    std::cout << " elapsed_s " << static_cast<long long>(secs) << std::endl;
  };
  const TrainingResult result = train(c.network, c.trainer, on_checkpoint, on_progress);
  std::ostringstream eval_csv, ep_csv;
  result.log.write_eval_csv(eval_csv);
  result.log.write_episode_csv(ep_csv);
  write_file(dir / "eval_log.csv", eval_csv.str());
  write_file(dir / "episode_log.csv", ep_csv.str());
  m.emplace_back("final_checkpoint_sha256", file_sha256(checkpoint_path(ckpt_dir, c.trainer.episodes)));
  write_manifest(dir, m);
  return 0;
}

int cmd_eval(const Options& o) {
  RunConfig c = resolve_config(o);
  Manifest m = base_manifest("eval", c);
  const Policy policy = policy_from(o, m);
  const auto schedule = DaylightSchedule::periodic(c.trainer.day_len, c.trainer.night_len);
  const int steps = c.trainer.steps_per_episode;
  const EvalSummary s = evaluate_policy(policy, schedule, c.protocol.runs, steps, c.protocol.seed, c.protocol.jobs);
  const EvalSummary oracle =
      evaluate_policy(Policy::oracle(), schedule, c.protocol.runs, steps, c.protocol.seed, c.protocol.jobs);
  std::cout << "mean_reward " << s.mean << " oracle_mean_reward " << oracle.mean << " ratio "
            << (oracle.mean != 0.0 ? s.mean / oracle.mean : 0.0) << " runs " << c.protocol.runs << "\n";
  if (!o.out.empty()) {
    const fs::path dir = require_out(o);
    std::string csv = "run,reward,oracle_reward\n";
    for (std::size_t i = 0; i < s.rewards.size(); ++i)
      csv += std::to_string(i) + ',' + format_double(s.rewards[i]) + ',' + format_double(oracle.rewards[i]) + '\n';
    write_file(dir / "eval.csv", csv);
    write_manifest(dir, m);
  }
  return 0;
}

int cmd_behavior(const Options& o) {
  RunConfig c = resolve_config(o);
  const fs::path dir = require_out(o);
  Manifest m = base_manifest("behavior", c);
  const Policy policy = policy_from(o, m);
  m.emplace_back("schedule", DaylightSchedule::periodic().describe());
  write_behavior(dir, behavior_experiment(policy, c.protocol));
  write_manifest(dir, m);
  return 0;
}

int cmd_endogeneity(const Options& o) {
  RunConfig c = resolve_config(o);
  const int value = clamp_value(o.clamp.empty() ? "day" : o.clamp);
  const fs::path dir = require_out(o);
  Manifest m = base_manifest("endogeneity", c);
  m.emplace_back("clamp", value ? "day" : "night");
  const Policy policy = policy_from(o, m);
  const auto r = endogeneity_experiment(policy, value, c.protocol);
  m.emplace_back("schedule", r.schedule);
  write_endogeneity(dir, r);
  write_manifest(dir, m);
  std::cout << "peak_period " << r.peak.period << " peak_to_median " << r.peak.ratio() << "\n";
  return 0;
}

int cmd_scan(const Options& o, bool spectrogram) {
  RunConfig c = resolve_config(o);
  const int value = clamp_value(o.clamp.empty() ? "day" : o.clamp);
  const fs::path src = checkpoint_dir(o);
  const fs::path dir = require_out(o);
  Manifest m = base_manifest(spectrogram ? "spectrogram" : "bifurcation", c);
  m.emplace_back("checkpoint_dir", src.string());
  m.emplace_back("clamp", value ? "day" : "night");
  const auto all = list_checkpoints(src);
  const auto episodes = scan_episodes(c.protocol);
  for (const auto& ref : all)
    if (ref.episode >= c.protocol.scan_begin && ref.episode <= c.protocol.scan_end)
      m.emplace_back("checkpoint_sha256." + std::to_string(ref.episode), file_sha256(ref.path));
  m.emplace_back("schedule", DaylightSchedule::clamped(DaylightSchedule::periodic(), c.protocol.clamp_start, value).describe());
  std::vector<int> missing;
  if (spectrogram) {
    const auto r = spectrogram_scan(all, episodes, value, c.protocol);
    write_spectrogram(dir, r);
    missing = r.missing;
  } else {
    const auto r = bifurcation_scan(all, episodes, value, c.protocol);
    write_bifurcation(dir, r);
    missing = r.missing;
  }
  write_manifest(dir, m);
  if (!missing.empty()) std::cerr << "warning: " << missing.size() << " checkpoints missing (see missing.csv)\n";
  return 0;
}

int cmd_jetlag(const Options& o) {
  RunConfig c = resolve_config(o);
  const fs::path dir = require_out(o);
  Manifest m = base_manifest("jetlag", c);
  m.emplace_back("variant", o.variant.empty() ? "all" : o.variant);
  const Policy policy = policy_from(o, m);
  std::vector<std::string> variants;
  if (o.variant.empty() || o.variant == "all") {
    variants.assign(kJetlagVariants.begin(), kJetlagVariants.end());
  } else {
    jetlag_schedule(o.variant);
    variants.push_back(o.variant);
  }
  for (const auto& v : variants) {
    const fs::path sub = variants.size() == 1 ? dir : dir / v;
    fs::create_directories(sub);
    const auto r = jetlag_experiment(policy, v, c.protocol);
    write_jetlag(sub, r);
    m.emplace_back("schedule." + v, r.schedule);
  }
  write_manifest(dir, m);
  return 0;
}

int cmd_prc(const Options& o) {
  RunConfig c = resolve_config(o);
  const fs::path dir = require_out(o);
  Manifest m = base_manifest("prc", c);
  m.emplace_back("clamp", o.clamp.empty() ? "both" : o.clamp);
  const Policy policy = policy_from(o, m);
  std::vector<PrcMode> modes;
  if (o.clamp.empty()) {
    modes = {PrcMode::light_pulse_on_night, PrcMode::dark_pulse_on_day};
  } else {
    modes = {clamp_value(o.clamp) == 0 ? PrcMode::light_pulse_on_night : PrcMode::dark_pulse_on_day};
  }
  for (PrcMode mode : modes) {
    const fs::path sub = modes.size() == 1 ? dir : dir / std::string(to_string(mode));
    fs::create_directories(sub);
    const auto r = prc_experiment(policy, mode, c.protocol);
    write_prc(sub, r);
    std::cout << to_string(mode) << " rhythmic_neurons " << r.rhythmic_neurons << " null_within_one "
              << r.null_within_one << "\n";
  }
  write_manifest(dir, m);
  return 0;
}

int cmd_training_curve(const Options& o) {
  RunConfig c = resolve_config(o);
  if (o.logs.empty()) throw std::invalid_argument("give one or more eval_log.csv files or training directories");
  const fs::path dir = require_out(o);
  Manifest m = base_manifest("training-curve", c);
  std::vector<std::vector<EvalRecord>> logs;
  for (std::size_t i = 0; i < o.logs.size(); ++i) {
    fs::path p(o.logs[i]);
    if (fs::is_directory(p)) p /= "eval_log.csv";
    logs.push_back(read_eval_csv(p));
    m.emplace_back("log." + std::to_string(i), p.string());
    m.emplace_back("log_sha256." + std::to_string(i), file_sha256(p));
  }
  const TrainingCurve curve = training_curve(logs, 11);
  if (curve.truncated) std::cerr << "warning: logs differ in length; truncated to the shortest\n";
  write_training_curve(dir, curve);
  write_manifest(dir, m);
  return 0;
}

int cmd_gradcheck() {
  bool ok = true;
  for (const auto& r : run_gradcheck_suite()) {
    std::cout << r.name << " max_rel_error " << r.max_rel_error << " probes " << r.probes
              << (r.passed() ? " ok" : " FAIL") << "\n";
    ok = ok && r.passed();
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Day/night foraging agent: training and rhythm analysis"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--profile", o.profile, "preset")->check(CLI::IsMember({"paper", "desk"}));
    sub->add_option("--seed", o.seed, "training seed / protocol seed base");
    sub->add_option("--jobs", o.jobs, "worker threads for protocol runs")->check(CLI::PositiveNumber);
    sub->add_flag("--force", o.force, "write into a non-empty output directory");
  };
  auto protocol = [&](CLI::App* sub) {
    common(sub);
    sub->add_option("--checkpoint", o.checkpoint, "checkpoint file");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--runs", o.runs, "number of test runs")->check(CLI::PositiveNumber);
    sub->add_flag("--oracle", o.oracle, "use the scripted oracle policy instead of a checkpoint");
  };

  auto* train_cmd = app.add_subcommand("train", "train an agent, writing checkpoints and logs");
  common(train_cmd);
  train_cmd->add_option("--out", o.out, "output directory")->required();
  train_cmd->add_option("--progress-every", o.progress_every, "episodes between progress lines")
      ->check(CLI::PositiveNumber);

  auto* eval_cmd = app.add_subcommand("eval", "greedy evaluation against the oracle policy");
  protocol(eval_cmd);

  auto* behavior_cmd = app.add_subcommand("behavior", "event histograms over eight days");
  protocol(behavior_cmd);

  auto* endo_cmd = app.add_subcommand("endogeneity", "constant-light experiment");
  protocol(endo_cmd);
  endo_cmd->add_option("--clamp", o.clamp, "day or night")->check(CLI::IsMember({"day", "night"}));

  auto* bif_cmd = app.add_subcommand("bifurcation", "amplitude and delay embedding across checkpoints");
  auto* spec_cmd = app.add_subcommand("spectrogram", "power spectra across checkpoints");
  for (auto* sub : {bif_cmd, spec_cmd}) {
    common(sub);
    sub->add_option("--checkpoint", o.checkpoint, "checkpoint directory or training output directory")->required();
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--clamp", o.clamp, "day or night")->check(CLI::IsMember({"day", "night"}));
  }

  auto* jet_cmd = app.add_subcommand("jetlag", "re-entrainment after schedule perturbations");
  protocol(jet_cmd);
  std::vector<std::string> variant_names(kJetlagVariants.begin(), kJetlagVariants.end());
  variant_names.push_back("all");
  jet_cmd->add_option("--variant", o.variant, "schedule variant or 'all'")->check(CLI::IsMember(variant_names));

  auto* prc_cmd = app.add_subcommand("prc", "phase response curves");
  protocol(prc_cmd);
  prc_cmd->add_option("--clamp", o.clamp, "night (light pulses) or day (dark pulses); both when omitted")
      ->check(CLI::IsMember({"day", "night"}));

  auto* curve_cmd = app.add_subcommand("training-curve", "smoothed reward curve across seeds");
  common(curve_cmd);
  curve_cmd->add_option("logs", o.logs, "eval_log.csv files or training directories")->required();
  curve_cmd->add_option("--out", o.out, "output directory");

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(o);
    if (*eval_cmd) return cmd_eval(o);
    if (*behavior_cmd) return cmd_behavior(o);
    if (*endo_cmd) return cmd_endogeneity(o);
    if (*bif_cmd) return cmd_scan(o, false);
    if (*spec_cmd) return cmd_scan(o, true);
    if (*jet_cmd) return cmd_jetlag(o);
    if (*prc_cmd) return cmd_prc(o);
    if (*curve_cmd) return cmd_training_curve(o);
    if (*grad_cmd) return cmd_gradcheck();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
