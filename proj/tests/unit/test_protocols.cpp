#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "circadian/protocols.hpp"
#include "fixtures.hpp"

using namespace circadian;
namespace fs = std::filesystem;

namespace {

Policy tiny_policy(int width = 4, std::uint64_t seed = 1) {
  const auto cfg = fixture::tiny_network(width);
  return Policy::network(cfg, QNetwork(cfg).init_params(seed));
}

ProtocolConfig small_protocol(int runs = 6) {
  ProtocolConfig p;
  p.runs = runs;
  p.prc_runs = runs;
  p.seed = 3;
  return p;
}

bool same_trace(const ActivationTrace& a, const ActivationTrace& b) {
  if (a.length() != b.length()) return false;
  for (int t = 0; t < a.length(); ++t) {
    const auto i = static_cast<std::size_t>(t);
    if (!(a.positions[i] == b.positions[i]) || !(a.food[i] == b.food[i]) || a.actions[i] != b.actions[i] ||
        a.rewards[i] != b.rewards[i] || a.daylight[i] != b.daylight[i] || a.events[i] != b.events[i])
      return false;
  }
  return a.activations == b.activations;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("circadian_proto_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("test runs: shapes and determinism") {
  const Policy policy = tiny_policy();
  const auto s = DaylightSchedule::periodic();
  const auto a = run_test_episode(policy, s, 320, 11);
  CHECK(a.length() == 320);
  CHECK(a.width == 4);
  CHECK(a.activations.size() == 320 * 4);
  CHECK(a.daylight[0] == 1);
  CHECK(a.daylight[20] == 0);
  CHECK(same_trace(a, run_test_episode(policy, s, 320, 11)));
  bool differs = false;
  for (std::uint64_t seed = 12; seed < 20; ++seed) differs = differs || !same_trace(a, run_test_episode(policy, s, 320, seed));
  CHECK(differs);
}

TEST_CASE("branching a rollout equals a full run on the new schedule") {
  const Policy policy = tiny_policy();
  const auto base = DaylightSchedule::periodic();
  for (int pulse : {161, 175, 200}) {
    const auto pulsed = DaylightSchedule::pulse_inverted(DaylightSchedule::clamped(base, 161, 0), pulse);
    Rollout r(policy, DaylightSchedule::clamped(base, 161, 0), 7);
    r.run_through(159);
    CHECK(r.next_step() == 160);
    Rollout b = r.branch(pulsed);
    b.run_through(240);
    r.run_through(240);
    const auto full = run_test_episode(policy, pulsed, 240, 7);
    CHECK(same_trace(b.trace(), full));
    CHECK(b.trace().schedule == pulsed.describe());
    // the unbranched rollout is untouched by the branch
    CHECK(same_trace(r.trace(), run_test_episode(policy, DaylightSchedule::clamped(base, 161, 0), 240, 7)));
  }
}

TEST_CASE("oracle policy rollout") {
  const auto tr = run_test_episode(Policy::oracle(), DaylightSchedule::periodic(), 160, 5);
  CHECK(tr.width == 0);
  CHECK(tr.activations.empty());
  double total = 0.0;
  for (double r : tr.rewards) {
    CHECK(r >= 0.0);
    total += r;
  }
  CHECK(total > 0.0);
}

TEST_CASE("run seeds are distinct and stable") {
  CHECK(run_seed(1, 0) == run_seed(1, 0));
  CHECK(run_seed(1, 0) != run_seed(1, 1));
  CHECK(run_seed(1, 0) != run_seed(2, 0));
}

TEST_CASE("parallel_for covers every index once and rethrows") {
  std::vector<int> hits(100, 0);
  parallel_for(100, 4, [&](int i) { ++hits[static_cast<std::size_t>(i)]; });
  for (int h : hits) CHECK(h == 1);
  CHECK_THROWS(parallel_for(10, 3, [](int i) {
    if (i == 7) throw std::runtime_error("boom");
  }));
}

TEST_CASE("endogeneity protocol") {
  const Policy policy = tiny_policy();
  auto cfg = small_protocol(5);
  const auto r = endogeneity_experiment(policy, 1, cfg);
  CHECK(r.mean_activation.size() == 320);
  CHECK(r.window_length == 160);
  CHECK(r.mean_periodogram.size() == 81);
  CHECK(r.neuron_periodograms.size() == 4);
  for (int t = 161; t <= 320; ++t) CHECK(r.daylight[static_cast<std::size_t>(t - 1)] == 1);
  CHECK(r.schedule == "clamped(start=161,value=1,base=periodic(day=20,night=20))");

  // thread count does not change any number
  cfg.jobs = 3;
  const auto p = endogeneity_experiment(policy, 1, cfg);
  CHECK(p.mean_activation == r.mean_activation);
  CHECK(p.mean_periodogram == r.mean_periodogram);

  const auto dir = scratch_dir("endo");
  write_endogeneity(dir, r);
  for (const char* f : {"mean_activation.csv", "exit_histogram.csv", "periodogram.csv", "summary.csv"})
    CHECK(fs::exists(dir / f));
  fs::remove_all(dir);
}

TEST_CASE("behavior protocol with the oracle") {
  auto cfg = small_protocol(20);
  const auto r = behavior_experiment(Policy::oracle(), cfg);
  CHECK(r.histogram.n_days == 8);
  CHECK(r.sample_traces.size() == 10);
  // the oracle leaves home on the first step of every run
  CHECK(r.histogram.at(EventKind::left_home, 1, 2) == 1.0);
  for (auto k : kEventKinds)
    for (int d = 1; d <= 8; ++d) {
      double total = 0.0;
      for (int s = 1; s <= 40; ++s) {
        REQUIRE(r.histogram.at(k, d, s) >= 0.0);
        total += r.histogram.at(k, d, s);
      }
      // events per run per day, not a probability distribution (several exits a day are possible)
      REQUIRE(std::isfinite(total));
    }
  // never outside at night
  for (int d = 1; d <= 8; ++d)
    for (int s = 22; s <= 40; ++s) REQUIRE(r.histogram.at(EventKind::left_home, d, s) == 0.0);
}

TEST_CASE("jet-lag schedules and protocol") {
  CHECK(jetlag_schedule("baseline") == DaylightSchedule::periodic());
  CHECK(jetlag_schedule("extend_day2_daytime_10").day_start(3) == 91);
  CHECK(jetlag_schedule("ratio_17_23").signal_at(58) == 0);
  CHECK_THROWS(jetlag_schedule("tuesday"));
  auto cfg = small_protocol(8);
  const auto r = jetlag_experiment(Policy::oracle(), "extend_day2_night_10", cfg);
  CHECK(r.horizon == 330);
  CHECK(r.cycle_len == 50);
  CHECK(r.median_exit.size() == 8);
  CHECK(r.baseline_median_exit.size() == 8);
  // the oracle follows the clock exactly: last exit happens at the same day-relative step
  for (int d = 3; d <= 8; ++d)
    CHECK(r.median_exit[static_cast<std::size_t>(d - 1)] == r.baseline_median_exit[static_cast<std::size_t>(d - 1)]);
  const auto b = jetlag_experiment(Policy::oracle(), "baseline", cfg);
  CHECK(b.median_exit == b.baseline_median_exit);
}

TEST_CASE("prc protocol shapes") {
  const Policy policy = tiny_policy(3);
  auto cfg = small_protocol(3);
  const auto r = prc_experiment(policy, PrcMode::light_pulse_on_night, cfg);
  CHECK(r.pulse_steps.size() == 40);
  CHECK(r.pulse_steps.front() == 161);
  CHECK(r.pulse_steps.back() == 200);
  REQUIRE(r.shift.size() == 40);
  for (const auto& row : r.shift) CHECK(row.size() == 4);
  CHECK(r.null_shift.size() == 3);
  CHECK_THROWS(prc_experiment(Policy::oracle(), PrcMode::dark_pulse_on_day, cfg));
  const auto dir = scratch_dir("prc");
  write_prc(dir, r);
  const std::string text = read_file(dir / "prc.csv");
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 40 * 4);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint listing and scans") {
  const auto dir = scratch_dir("scan");
  const auto net_cfg = fixture::tiny_network();
  const QNetwork net(net_cfg);
  for (int e : {0, 5, 7}) {
    Checkpoint c;
    c.config.network = net_cfg;
    c.episode = e;
    c.online = net.init_params(static_cast<std::uint64_t>(e + 1));
    c.target = c.online;
    save_checkpoint(c, checkpoint_path(dir, e));
  }
  std::ofstream(dir / "notes.txt") << "ignored";
  const auto list = list_checkpoints(dir);
  REQUIRE(list.size() == 3);
  CHECK(list[1].episode == 5);
  CHECK(checkpoint_path(dir, 5).filename() == "episode_000005.ckpt");

  ProtocolConfig cfg;
  const std::vector<int> episodes{0, 5, 6, 7};
  const auto b = bifurcation_scan(list, episodes, 1, cfg);
  CHECK(b.episodes == std::vector<int>{0, 5, 7});
  CHECK(b.missing == std::vector<int>{6});
  CHECK(b.pairs[0].size() == 150);
  const auto s = spectrogram_scan(list, episodes, 1, cfg);
  CHECK(s.mean_rows.rows.size() == 3);
  CHECK(s.neuron_rows.rows[0].size() == 81);
  cfg.neuron = 9;
  CHECK_THROWS(bifurcation_scan(list, episodes, 1, cfg));
  fs::remove_all(dir);
}

TEST_CASE("training curve") {
  std::vector<EvalRecord> a, b;
  for (int i = 0; i < 5; ++i) {
    a.push_back({10 * (i + 1), static_cast<double>(i), 0.0, 0.0});
    b.push_back({10 * (i + 1), static_cast<double>(2 * i), 0.0, 0.0});
  }
  const auto c = training_curve({a, b}, 3);
  CHECK(c.episodes == std::vector<int>{10, 20, 30, 40, 50});
  CHECK_FALSE(c.truncated);
  // clipped windows: a -> 0.5, 1, 2, 3, 3.5 and b -> 1, 2, 4, 6, 7
  CHECK(c.mean[0] == doctest::Approx(0.75));
  CHECK(c.mean[2] == doctest::Approx(3.0));
  CHECK(c.mean[4] == doctest::Approx(5.25));
  CHECK(c.stddev[0] == doctest::Approx(0.25));
  CHECK(c.stddev[4] == doctest::Approx(1.75));
  b.pop_back();
  const auto t = training_curve({a, b}, 3);
  CHECK(t.truncated);
  CHECK(t.episodes.size() == 4);

  const auto dir = scratch_dir("curve");
  TrainingLog log;
  log.evaluations = a;
  std::ostringstream os;
  log.write_eval_csv(os);
  write_file(dir / "eval_log.csv", os.str());
  const auto back = read_eval_csv(dir / "eval_log.csv");
  REQUIRE(back.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(back[i].reward == a[i].reward);
  fs::remove_all(dir);
}

TEST_CASE("evaluate_policy matches summed rollouts") {
  const auto s = evaluate_policy(Policy::oracle(), DaylightSchedule::periodic(), 4, 160, 9, 2);
  REQUIRE(s.rewards.size() == 4);
  for (int i = 0; i < 4; ++i) {
    const auto tr = run_test_episode(Policy::oracle(), DaylightSchedule::periodic(), 160, run_seed(9, i));
    double total = 0.0;
    for (double r : tr.rewards) total += r;
    CHECK(s.rewards[static_cast<std::size_t>(i)] == total);
  }
  CHECK(s.mean == doctest::Approx((s.rewards[0] + s.rewards[1] + s.rewards[2] + s.rewards[3]) / 4));
}
