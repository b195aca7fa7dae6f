#include "circadian/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "circadian/trainer.hpp"

namespace circadian {

namespace fs = std::filesystem;

Policy Policy::network(const NetworkConfig& config, NetworkParams params) {
  Policy p;
  p.net_ = std::make_shared<const QNetwork>(config);
  p.params_ = std::move(params);
  return p;
}

Policy Policy::oracle() { return Policy{}; }

Rollout::Rollout(const Policy& policy, DaylightSchedule schedule, std::uint64_t seed, int run_id) : policy_(&policy) {
  trace_.run_id = run_id;
  trace_.schedule = schedule.describe();
  trace_.width = policy.width();
  env_.reset(schedule, seed);
  if (policy.net()) state_ = policy.net()->initial_state(1);
}

void Rollout::run_through(Step last) {
  while (env_.state().t <= last) {
    const Observation obs = env_.observe();
    Action a;
    if (const QNetwork* net = policy_->net()) {
      const QOutput q = net->step(policy_->params(), obs, state_);
      a = static_cast<Action>(greedy_action(q.q));
      trace_.activations.insert(trace_.activations.end(), q.recurrent_activation.data(),
                                q.recurrent_activation.data() + q.recurrent_activation.size());
    } else {
      a = oracle_action(env_.state());
    }
    trace_.positions.push_back(env_.state().agent);
    trace_.food.push_back(env_.state().food);
    trace_.daylight.push_back(obs.daylight);
    trace_.actions.push_back(static_cast<int>(a));
    const StepResult step = env_.step(a);
    trace_.rewards.push_back(step.reward);
    trace_.events.push_back(step.events);
  }
}

Rollout Rollout::branch(DaylightSchedule schedule) const {
  Rollout copy = *this;
  copy.trace_.schedule = schedule.describe();
  copy.env_.mutable_state().schedule = std::move(schedule);
  return copy;
}

ActivationTrace run_test_episode(const Policy& policy, const DaylightSchedule& schedule, int horizon, std::uint64_t seed,
                                 int run_id) {
  Rollout r(policy, schedule, seed, run_id);
  r.run_through(horizon);
  return r.take_trace();
}

std::uint64_t run_seed(std::uint64_t base, int run) { return derive_seed(base, 100, static_cast<std::uint64_t>(run)); }

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
  for (int j = 0; j < jobs; ++j)
    pool.emplace_back([&, j] {
      try {
        for (int i = j; i < n; i += jobs) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(j)] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace {

// Runs `per_run(i)` for every run in blocks, then folds results in run order
// so that sums do not depend on the thread count.
template <typename R, typename Fn, typename Fold>
void map_runs(int runs, int jobs, Fn per_run, Fold fold) {
  const int block = std::max(1, jobs) * 32;
  for (int start = 0; start < runs; start += block) {
    const int n = std::min(block, runs - start);
    std::vector<R> out(static_cast<std::size_t>(n));
    parallel_for(n, jobs, [&](int i) { out[static_cast<std::size_t>(i)] = per_run(start + i); });
    for (int i = 0; i < n; ++i) fold(start + i, out[static_cast<std::size_t>(i)]);
  }
}

class Csv {
 public:
  explicit Csv(std::string_view header) { text_ += header; text_ += '\n'; }
  template <typename... Cells>
  void row(const Cells&... cells) {
    bool first = true;
    ((text_ += (first ? "" : ","), text_ += cell(cells), first = false), ...);
    text_ += '\n';
  }
  void save(const fs::path& path) const { write_file(path, text_); }

 private:
  static std::string cell(double x) { return format_double(x); }
  static std::string cell(int x) { return std::to_string(x); }
  static std::string cell(long long x) { return std::to_string(x); }
  static std::string cell(std::string_view s) { return std::string(s); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  std::string text_;
};

std::vector<double> window(std::span<const double> series, int first_step, int last_step) {
  return {series.begin() + (first_step - 1), series.begin() + last_step};
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

void add_into(std::vector<double>& acc, std::span<const double> x) {
  if (acc.empty()) acc.assign(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) acc[i] += x[i];
}

void scale(std::vector<double>& v, double s) {
  for (auto& x : v) x *= s;
}

int longest_day(const DaylightSchedule& s, int n_days) {
  Step longest = 0;
  for (int d = 1; d <= n_days; ++d) longest = std::max(longest, s.day_start(d + 1) - s.day_start(d));
  return static_cast<int>(longest);
}

void write_histogram(const fs::path& path, const EventHistogram& h, std::span<const EventKind> kinds) {
  Csv csv(kinds.size() == 1 ? "day,day_rel_step,probability" : "event_kind,day,day_rel_step,probability");
  for (EventKind k : kinds)
    for (int d = 1; d <= h.n_days; ++d)
      for (int s = 1; s <= h.cycle_len; ++s) {
        if (kinds.size() == 1) {
          csv.row(d, s, h.at(k, d, s));
        } else {
          csv.row(to_string(k), d, s, h.at(k, d, s));
        }
      }
  csv.save(path);
}

void write_series(const fs::path& path, std::span<const int> daylight, std::span<const double> mean) {
  Csv csv("step,daylight,mean_activation");
  for (std::size_t t = 0; t < mean.size(); ++t)
    csv.row(static_cast<int>(t + 1), t < daylight.size() ? daylight[t] : -1, mean[t]);
  csv.save(path);
}

void write_periodogram_rows(Csv& csv, std::string_view series, std::span<const double> power, int length) {
  for (std::size_t k = 0; k < power.size(); ++k)
    csv.row(series, static_cast<int>(k), static_cast<double>(k) / length, power[k]);
}

std::vector<EventKind> exits_only() { return {EventKind::left_food_area}; }

// Events, mean activation and per-neuron activation sums of one run.
struct RunSummary {
  std::vector<BehavioralEvent> events;
  std::vector<double> mean;
  std::vector<double> activations;  // T x W, row-major
  std::vector<int> daylight;
};

RunSummary summarize(const ActivationTrace& tr, const DaylightSchedule& schedule, bool keep_neurons) {
  RunSummary s;
  s.events = detect_events(tr.positions, schedule);
  if (tr.width > 0) s.mean = tr.mean_activation();
  if (keep_neurons) s.activations = tr.activations;
  s.daylight = tr.daylight;
  return s;
}

Policy load_policy(const fs::path& path) {
  Checkpoint c = load_checkpoint(path);
  return Policy::network(c.config.network, std::move(c.online));
}

}  // namespace

BehaviorResult behavior_experiment(const Policy& policy, const ProtocolConfig& cfg) {
  const auto schedule = DaylightSchedule::periodic();
  const int cycle = schedule.cycle_length();
  BehaviorResult r;
  r.runs = cfg.runs;
  std::vector<std::vector<BehavioralEvent>> events;
  for (int i = 0; i < std::min(cfg.runs, kSampleTraces); ++i)
    r.sample_traces.push_back(run_test_episode(policy, schedule, cfg.horizon, run_seed(cfg.seed, i), i));
  map_runs<RunSummary>(
      cfg.runs, cfg.jobs,
      [&](int i) { return summarize(run_test_episode(policy, schedule, cfg.horizon, run_seed(cfg.seed, i), i), schedule, false); },
      [&](int i, RunSummary& s) {
        if (i == 0) r.daylight = s.daylight;
        events.push_back(std::move(s.events));
        add_into(r.mean_activation, s.mean);
      });
  scale(r.mean_activation, 1.0 / cfg.runs);
  r.histogram = event_histograms(events, cycle, cfg.horizon / cycle);
  return r;
}

void write_behavior(const fs::path& dir, const BehaviorResult& r) {
  write_histogram(dir / "histogram.csv", r.histogram, kEventKinds);
  write_series(dir / "mean_activation.csv", r.daylight, r.mean_activation);
  write_trace_csv(dir / "trace.csv", r.sample_traces, DaylightSchedule::periodic());
}

void write_trace_csv(const fs::path& path, std::span<const ActivationTrace> traces, const DaylightSchedule& schedule) {
  Csv csv("run_id,t,day_rel_step,daylight,agent_row,agent_col,food_row,food_col,action,reward,event_flags");
  for (const auto& tr : traces)
    for (int t = 0; t < tr.length(); ++t) {
      const auto i = static_cast<std::size_t>(t);
      csv.row(tr.run_id, t + 1, schedule.locate(t + 1).day_rel_step, tr.daylight[i], tr.positions[i].row,
              tr.positions[i].col, tr.food[i].row, tr.food[i].col, to_string(static_cast<Action>(tr.actions[i])),
              tr.rewards[i], static_cast<int>(tr.events[i]));
    }
  csv.save(path);
}

EndogeneityResult endogeneity_experiment(const Policy& policy, int clamp_value, const ProtocolConfig& cfg) {
  const auto base = DaylightSchedule::periodic();
  const auto schedule = DaylightSchedule::clamped(base, cfg.clamp_start, clamp_value);
  const int cycle = base.cycle_length();
  EndogeneityResult r;
  r.clamp_value = clamp_value;
  r.clamp_start = cfg.clamp_start;
  r.schedule = schedule.describe();
  const int W = policy.width();
  std::vector<std::vector<BehavioralEvent>> events;
  std::vector<double> neuron_sum;
  map_runs<RunSummary>(
      cfg.runs, cfg.jobs,
      [&](int i) { return summarize(run_test_episode(policy, schedule, cfg.horizon, run_seed(cfg.seed, i), i), schedule, true); },
      [&](int i, RunSummary& s) {
        if (i == 0) r.daylight = s.daylight;
        events.push_back(std::move(s.events));
        add_into(r.mean_activation, s.mean);
        add_into(neuron_sum, s.activations);
      });
  scale(r.mean_activation, 1.0 / cfg.runs);
  r.exits = event_histograms(events, cycle, cfg.horizon / cycle);
  r.window_length = cfg.horizon - cfg.clamp_start + 1;
  if (W > 0) {
    r.neuron_mean.assign(static_cast<std::size_t>(W), std::vector<double>(static_cast<std::size_t>(cfg.horizon)));
    for (int t = 0; t < cfg.horizon; ++t)
      for (int k = 0; k < W; ++k)
        r.neuron_mean[static_cast<std::size_t>(k)][static_cast<std::size_t>(t)] =
            neuron_sum[static_cast<std::size_t>(t * W + k)] / cfg.runs;
    r.mean_periodogram = periodogram(window(r.mean_activation, cfg.clamp_start, cfg.horizon));
    for (const auto& series : r.neuron_mean)
      r.neuron_periodograms.push_back(periodogram(window(series, cfg.clamp_start, cfg.horizon)));
    r.peak = dominant_peak(r.mean_periodogram, r.window_length);
  }
  return r;
}

void write_endogeneity(const fs::path& dir, const EndogeneityResult& r) {
  write_series(dir / "mean_activation.csv", r.daylight, r.mean_activation);
  write_histogram(dir / "exit_histogram.csv", r.exits, exits_only());
  Csv pg("series,bin,frequency,power");
  write_periodogram_rows(pg, "mean", r.mean_periodogram, r.window_length);
  for (std::size_t k = 0; k < r.neuron_periodograms.size(); ++k)
    write_periodogram_rows(pg, std::to_string(k), r.neuron_periodograms[k], r.window_length);
  pg.save(dir / "periodogram.csv");
  Csv summary("key,value");
  summary.row("clamp_value", r.clamp_value);
  summary.row("window_first_step", r.clamp_start);
  summary.row("window_length", r.window_length);
  summary.row("peak_bin", r.peak.bin);
  summary.row("peak_period", r.peak.period);
  summary.row("peak_power", r.peak.power);
  summary.row("median_power", r.peak.median_power);
  summary.row("peak_to_median", r.peak.ratio());
  summary.save(dir / "summary.csv");
}

fs::path checkpoint_path(const fs::path& dir, int episode) {
  char name[32];
  std::snprintf(name, sizeof(name), "episode_%06d.ckpt", episode);
  return dir / name;
}

std::vector<CheckpointRef> list_checkpoints(const fs::path& dir) {
  std::vector<CheckpointRef> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    int episode = 0;
    char tail = 0;
    if (name.size() == 19 && std::sscanf(name.c_str(), "episode_%6d.ckp%c", &episode, &tail) == 2 && tail == 't')
      out.push_back({episode, entry.path()});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.episode < b.episode; });
  return out;
}

namespace {

const CheckpointRef* find_checkpoint(const std::vector<CheckpointRef>& all, int episode) {
  for (const auto& c : all)
    if (c.episode == episode) return &c;
  return nullptr;
}

// The analysed series of one clamp run: one neuron, or the layer mean.
std::vector<double> clamp_series(const Policy& policy, int clamp_value, int neuron, const ProtocolConfig& cfg) {
  const auto schedule = DaylightSchedule::clamped(DaylightSchedule::periodic(), cfg.clamp_start, clamp_value);
  const auto tr = run_test_episode(policy, schedule, cfg.horizon, run_seed(cfg.seed, 0), 0);
  const auto full = neuron >= 0 ? tr.neuron_series(neuron) : tr.mean_activation();
  return window(full, cfg.clamp_start, cfg.horizon);
}

}  // namespace

BifurcationResult bifurcation_scan(const std::vector<CheckpointRef>& checkpoints, std::span<const int> episodes,
                                   int clamp_value, const ProtocolConfig& cfg) {
  BifurcationResult r;
  r.neuron = cfg.neuron;
  r.clamp_value = clamp_value;
  r.delay = cfg.delay;
  std::vector<int> present;
  for (int e : episodes) {
    if (find_checkpoint(checkpoints, e)) {
      present.push_back(e);
    } else {
      r.missing.push_back(e);
    }
  }
  std::vector<std::vector<double>> series(present.size());
  parallel_for(static_cast<int>(present.size()), cfg.jobs, [&](int i) {
    const Policy policy = load_policy(find_checkpoint(checkpoints, present[static_cast<std::size_t>(i)])->path);
    if (cfg.neuron >= policy.width()) throw std::invalid_argument("neuron index exceeds the recurrent width");
    series[static_cast<std::size_t>(i)] = clamp_series(policy, clamp_value, cfg.neuron, cfg);
  });
  for (std::size_t i = 0; i < present.size(); ++i) {
    r.episodes.push_back(present[i]);
    r.amplitudes.push_back(amplitude(series[i]));
    r.pairs.push_back(delay_embedding(series[i], cfg.delay));
  }
  return r;
}

void write_bifurcation(const fs::path& dir, const BifurcationResult& r) {
  Csv amp("episode,amplitude");
  for (std::size_t i = 0; i < r.episodes.size(); ++i) amp.row(r.episodes[i], r.amplitudes[i]);
  amp.save(dir / "amplitude.csv");
  Csv pairs("episode,index,x,x_delayed");
  for (std::size_t i = 0; i < r.episodes.size(); ++i)
    for (std::size_t j = 0; j < r.pairs[i].size(); ++j)
      pairs.row(r.episodes[i], static_cast<int>(j), r.pairs[i][j][0], r.pairs[i][j][1]);
  pairs.save(dir / "delay_pairs.csv");
  Csv missing("episode");
  for (int e : r.missing) missing.row(e);
  missing.save(dir / "missing.csv");
}

SpectrogramResult spectrogram_scan(const std::vector<CheckpointRef>& checkpoints, std::span<const int> episodes,
                                   int clamp_value, const ProtocolConfig& cfg) {
  SpectrogramResult r;
  r.neuron = cfg.neuron;
  r.clamp_value = clamp_value;
  r.window_length = cfg.horizon - cfg.clamp_start + 1;
  std::vector<int> present;
  for (int e : episodes) {
    if (find_checkpoint(checkpoints, e)) {
      present.push_back(e);
    } else {
      r.missing.push_back(e);
    }
  }
  std::vector<std::vector<double>> single(present.size()), mean(present.size());
  const auto schedule = DaylightSchedule::clamped(DaylightSchedule::periodic(), cfg.clamp_start, clamp_value);
  parallel_for(static_cast<int>(present.size()), cfg.jobs, [&](int i) {
    const Policy policy = load_policy(find_checkpoint(checkpoints, present[static_cast<std::size_t>(i)])->path);
    if (cfg.neuron >= policy.width()) throw std::invalid_argument("neuron index exceeds the recurrent width");
    const auto tr = run_test_episode(policy, schedule, cfg.horizon, run_seed(cfg.seed, 0), 0);
    const auto chosen = cfg.neuron >= 0 ? tr.neuron_series(cfg.neuron) : tr.mean_activation();
    single[static_cast<std::size_t>(i)] = periodogram(window(chosen, cfg.clamp_start, cfg.horizon));
    std::vector<std::vector<double>> per_neuron;
    for (int k = 0; k < policy.width(); ++k)
      per_neuron.push_back(periodogram(window(tr.neuron_series(k), cfg.clamp_start, cfg.horizon)));
    mean[static_cast<std::size_t>(i)] = mean_power(per_neuron);
  });
  r.neuron_rows = stack_spectrogram(present, std::move(single));
  r.mean_rows = stack_spectrogram(present, std::move(mean));
  return r;
}

void write_spectrogram(const fs::path& dir, const SpectrogramResult& r) {
  auto save = [&](const Spectrogram& s, const fs::path& path) {
    Csv csv("episode,bin,frequency,power");
    for (std::size_t i = 0; i < s.rows.size(); ++i)
      for (std::size_t k = 0; k < s.rows[i].size(); ++k)
        csv.row(s.episodes[i], static_cast<int>(k), static_cast<double>(k) / r.window_length, s.rows[i][k]);
    csv.save(path);
  };
  save(r.neuron_rows, dir / "spectrogram_neuron.csv");
  save(r.mean_rows, dir / "spectrogram_mean.csv");
  Csv missing("episode");
  for (int e : r.missing) missing.row(e);
  missing.save(dir / "missing.csv");
}

DaylightSchedule jetlag_schedule(std::string_view variant) {
  const auto base = DaylightSchedule::periodic();
  if (variant == "baseline") return base;
  if (variant == "extend_day2_daytime_10") return DaylightSchedule::phase_shifted(base, 2, ShiftKind::extend_daytime, 10);
  if (variant == "extend_day2_night_10") return DaylightSchedule::phase_shifted(base, 2, ShiftKind::extend_night, 10);
  if (variant == "reverse") return DaylightSchedule::phase_shifted(base, 2, ShiftKind::reverse, 0);
  if (variant == "period_23_23") return DaylightSchedule::switched(base, 2, 23, 23);
  if (variant == "ratio_17_23") return DaylightSchedule::switched(base, 2, 17, 23);
  if (variant == "ratio_23_17") return DaylightSchedule::switched(base, 2, 23, 17);
  throw std::invalid_argument("unknown jet-lag variant '" + std::string(variant) + "'");
}

namespace {

struct ExitRuns {
  std::vector<std::vector<BehavioralEvent>> events;
  std::vector<double> mean;
  std::vector<int> daylight;
};

ExitRuns collect_runs(const Policy& policy, const DaylightSchedule& schedule, int horizon, const ProtocolConfig& cfg) {
  ExitRuns out;
  map_runs<RunSummary>(
      cfg.runs, cfg.jobs,
      [&](int i) { return summarize(run_test_episode(policy, schedule, horizon, run_seed(cfg.seed, i), i), schedule, false); },
      [&](int i, RunSummary& s) {
        if (i == 0) out.daylight = s.daylight;
        out.events.push_back(std::move(s.events));
        add_into(out.mean, s.mean);
      });
  scale(out.mean, 1.0 / cfg.runs);
  return out;
}

// Median over runs of each run's last food-area exit in that day.
std::vector<double> median_last_exit(const std::vector<std::vector<BehavioralEvent>>& runs, int n_days) {
  std::vector<std::vector<double>> per_day(static_cast<std::size_t>(n_days));
  for (const auto& events : runs) {
    std::vector<int> last(static_cast<std::size_t>(n_days), 0);
    for (const auto& e : events)
      if (e.kind == EventKind::left_food_area && e.day >= 1 && e.day <= n_days)
        last[static_cast<std::size_t>(e.day - 1)] = e.day_rel_step;
    for (int d = 0; d < n_days; ++d)
      if (last[static_cast<std::size_t>(d)] > 0) per_day[static_cast<std::size_t>(d)].push_back(last[static_cast<std::size_t>(d)]);
  }
  std::vector<double> out;
  for (auto& v : per_day) out.push_back(median(std::move(v)));
  return out;
}

}  // namespace

JetlagResult jetlag_experiment(const Policy& policy, std::string_view variant, const ProtocolConfig& cfg) {
  JetlagResult r;
  r.variant = std::string(variant);
  const auto schedule = jetlag_schedule(variant);
  r.schedule = schedule.describe();
  r.n_days = 8;
  r.horizon = static_cast<int>(schedule.day_start(r.n_days + 1) - 1);
  r.cycle_len = longest_day(schedule, r.n_days);
  const ExitRuns runs = collect_runs(policy, schedule, r.horizon, cfg);
  r.daylight = runs.daylight;
  r.mean_activation = runs.mean;
  r.exits = event_histograms(runs.events, r.cycle_len, r.n_days);
  r.median_exit = median_last_exit(runs.events, r.n_days);
  if (variant == "baseline") {
    r.baseline_median_exit = r.median_exit;
  } else {
    const auto base = jetlag_schedule("baseline");
    const ExitRuns b = collect_runs(policy, base, static_cast<int>(base.day_start(r.n_days + 1) - 1), cfg);
    r.baseline_median_exit = median_last_exit(b.events, r.n_days);
  }
  if (!r.mean_activation.empty()) {
    const int first = static_cast<int>(schedule.day_start(3));
    r.periodogram = periodogram(window(r.mean_activation, first, r.horizon));
    r.periodogram_length = r.horizon - first + 1;
  }
  return r;
}

void write_jetlag(const fs::path& dir, const JetlagResult& r) {
  write_series(dir / "mean_activation.csv", r.daylight, r.mean_activation);
  write_histogram(dir / "exit_histogram.csv", r.exits, exits_only());
  Csv re("day,median_exit,baseline_median_exit,deviation");
  for (int d = 0; d < r.n_days; ++d) {
    const double m = r.median_exit[static_cast<std::size_t>(d)];
    const double b = r.baseline_median_exit[static_cast<std::size_t>(d)];
    re.row(d + 1, m, b, std::abs(m - b));
  }
  re.save(dir / "reentrainment.csv");
  Csv pg("bin,frequency,power");
  for (std::size_t k = 0; k < r.periodogram.size(); ++k)
    pg.row(static_cast<int>(k), static_cast<double>(k) / r.periodogram_length, r.periodogram[k]);
  pg.save(dir / "periodogram.csv");
}

std::string_view to_string(PrcMode m) {
  switch (m) {
    case PrcMode::light_pulse_on_night: return "light_pulse_on_night";
    case PrcMode::dark_pulse_on_day: return "dark_pulse_on_day";
  }
  return "?";
}

namespace {

constexpr int kPulseFirst = 161;
constexpr int kPulseCount = 40;
constexpr int kPhaseFirst = 201;
constexpr int kPhaseLast = 240;

struct PrcRun {
  std::vector<double> shifts;             // [pulse][neuron], NaN = undefined
  std::vector<std::vector<double>> control;  // [neuron] day-6 window
};

std::vector<double> neuron_window(const ActivationTrace& tr, int k) {
  return window(tr.neuron_series(k), kPhaseFirst, kPhaseLast);
}

}  // namespace

PrcResult prc_experiment(const Policy& policy, PrcMode mode, const ProtocolConfig& cfg) {
  if (policy.is_oracle()) throw std::invalid_argument("the PRC protocol needs a network checkpoint");
  const int W = policy.width();
  const int clamp = mode == PrcMode::light_pulse_on_night ? 0 : 1;
  const auto base = DaylightSchedule::clamped(DaylightSchedule::periodic(), kPulseFirst, clamp);
  PrcResult r;
  r.mode = mode;
  r.width = W;
  r.runs = cfg.prc_runs;
  for (int p = 0; p < kPulseCount; ++p) r.pulse_steps.push_back(kPulseFirst + p);

  std::vector<double> sum(static_cast<std::size_t>(kPulseCount * W), 0.0);
  std::vector<int> count(static_cast<std::size_t>(kPulseCount * W), 0);
  std::vector<std::vector<std::vector<double>>> controls;
  map_runs<PrcRun>(
      cfg.prc_runs, cfg.jobs,
      [&](int i) {
        PrcRun out;
        Rollout control(policy, base, run_seed(cfg.seed, i), i);
        control.run_through(kPulseFirst - 2);  // the pulse runs take over at step 160
        const Rollout fork = control;
        control.run_through(kPhaseLast);
        for (int k = 0; k < W; ++k) out.control.push_back(neuron_window(control.trace(), k));
        out.shifts.assign(static_cast<std::size_t>(kPulseCount * W), std::nan(""));
        for (int p = 0; p < kPulseCount; ++p) {
          Rollout pulsed = fork.branch(DaylightSchedule::pulse_inverted(base, kPulseFirst + p));
          pulsed.run_through(kPhaseLast);
          for (int k = 0; k < W; ++k) {
            const auto s = estimate_phase_shift(neuron_window(pulsed.trace(), k), out.control[static_cast<std::size_t>(k)]);
            if (s) out.shifts[static_cast<std::size_t>(p * W + k)] = *s;
          }
        }
        return out;
      },
      [&](int, PrcRun& run) {
        for (std::size_t j = 0; j < sum.size(); ++j)
          if (!std::isnan(run.shifts[j])) {
            sum[j] += run.shifts[j];
            ++count[j];
          }
        controls.push_back(std::move(run.control));
      });

  r.shift.assign(kPulseCount, std::vector<double>(static_cast<std::size_t>(W + 1), std::nan("")));
  r.excluded.assign(kPulseCount, std::vector<int>(static_cast<std::size_t>(W + 1), 0));
  for (int p = 0; p < kPulseCount; ++p) {
    double mean_sum = 0.0;
    int defined = 0;
    for (int k = 0; k < W; ++k) {
      const auto j = static_cast<std::size_t>(p * W + k);
      r.excluded[static_cast<std::size_t>(p)][static_cast<std::size_t>(k)] = cfg.prc_runs - count[j];
      if (count[j] > 0) {
        const double v = sum[j] / count[j];
        r.shift[static_cast<std::size_t>(p)][static_cast<std::size_t>(k)] = v;
        mean_sum += v;
        ++defined;
      }
    }
    r.excluded[static_cast<std::size_t>(p)][static_cast<std::size_t>(W)] = W - defined;
    if (defined > 0) r.shift[static_cast<std::size_t>(p)][static_cast<std::size_t>(W)] = mean_sum / defined;
  }

  // Null distribution: neighbouring seeds' controls against each other.
  r.null_shift.assign(static_cast<std::size_t>(W), std::nan(""));
  for (int k = 0; k < W; ++k) {
    double s = 0.0;
    int n = 0;
    for (std::size_t i = 0; i + 1 < controls.size(); ++i) {
      const auto v = estimate_phase_shift(controls[i + 1][static_cast<std::size_t>(k)], controls[i][static_cast<std::size_t>(k)]);
      if (v) {
        s += *v;
        ++n;
      }
    }
    if (n > 0) {
      r.null_shift[static_cast<std::size_t>(k)] = s / n;
      ++r.rhythmic_neurons;
      if (std::abs(s / n) <= 1.0) ++r.null_within_one;
    }
  }
  return r;
}

void write_prc(const fs::path& dir, const PrcResult& r) {
  Csv csv("pulse_step,pulse_day_rel_step,series,shift,excluded");
  for (std::size_t p = 0; p < r.pulse_steps.size(); ++p)
    for (int k = 0; k <= r.width; ++k)
      csv.row(r.pulse_steps[p], static_cast<int>(p + 1), k == r.width ? std::string("mean") : std::to_string(k),
              r.shift[p][static_cast<std::size_t>(k)], r.excluded[p][static_cast<std::size_t>(k)]);
  csv.save(dir / "prc.csv");
  Csv null_csv("neuron,shift");
  for (int k = 0; k < r.width; ++k) null_csv.row(k, r.null_shift[static_cast<std::size_t>(k)]);
  null_csv.save(dir / "null.csv");
  Csv summary("key,value");
  summary.row("mode", to_string(r.mode));
  summary.row("runs", r.runs);
  summary.row("width", r.width);
  summary.row("rhythmic_neurons", r.rhythmic_neurons);
  summary.row("null_within_one", r.null_within_one);
  summary.save(dir / "summary.csv");
}

TrainingCurve training_curve(const std::vector<std::vector<EvalRecord>>& logs, int window) {
  if (logs.empty()) throw std::invalid_argument("no training logs");
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  TrainingCurve c;
  std::size_t n = logs.front().size();
  for (const auto& l : logs) {
    if (l.size() != n) c.truncated = true;
    n = std::min(n, l.size());
  }
  const int half = window / 2;
  std::vector<std::vector<double>> smoothed;
  for (const auto& l : logs) {
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t lo = i >= static_cast<std::size_t>(half) ? i - static_cast<std::size_t>(half) : 0;
      const std::size_t hi = std::min(n - 1, i + static_cast<std::size_t>(half));
      double acc = 0.0;
      for (std::size_t j = lo; j <= hi; ++j) acc += l[j].reward;
      s[i] = acc / static_cast<double>(hi - lo + 1);
    }
    smoothed.push_back(std::move(s));
  }
  for (std::size_t i = 0; i < n; ++i) {
    c.episodes.push_back(logs.front()[i].episode);
    double m = 0.0;
    for (const auto& s : smoothed) m += s[i];
    m /= static_cast<double>(smoothed.size());
    double v = 0.0;
    for (const auto& s : smoothed) v += (s[i] - m) * (s[i] - m);
    c.mean.push_back(m);
    c.stddev.push_back(std::sqrt(v / static_cast<double>(smoothed.size())));
  }
  return c;
}

std::vector<EvalRecord> read_eval_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  if (line != "episode,eval_reward,mean_loss,epsilon") throw std::runtime_error(path.string() + ": not an evaluation log");
  std::vector<EvalRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EvalRecord e;
    char c1, c2, c3;
    std::istringstream row(line);
    if (!(row >> e.episode >> c1 >> e.reward >> c2 >> e.mean_loss >> c3 >> e.epsilon))
      throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    out.push_back(e);
  }
  return out;
}

void write_training_curve(const fs::path& dir, const TrainingCurve& c) {
  Csv csv("episode,mean,std");
  for (std::size_t i = 0; i < c.episodes.size(); ++i) csv.row(c.episodes[i], c.mean[i], c.stddev[i]);
  csv.save(dir / "curve.csv");
}

EvalSummary evaluate_policy(const Policy& policy, const DaylightSchedule& schedule, int runs, int steps,
                            std::uint64_t seed, int jobs) {
  EvalSummary s;
  s.rewards.assign(static_cast<std::size_t>(runs), 0.0);
  parallel_for(runs, jobs, [&](int i) {
    const auto tr = run_test_episode(policy, schedule, steps, run_seed(seed, i), i);
    double total = 0.0;
    for (double r : tr.rewards) total += r;
    s.rewards[static_cast<std::size_t>(i)] = total;
  });
  for (double r : s.rewards) s.mean += r;
  s.mean /= std::max(1, runs);
  return s;
}

}  // namespace circadian
