#include <doctest.h>

#include "circadian/daylight.hpp"
#include "oracles.hpp"

using namespace circadian;

TEST_CASE("periodic signal") {
  const auto s = DaylightSchedule::periodic(20, 20);
  CHECK(s.signal_at(1) == 1);
  CHECK(s.signal_at(20) == 1);
  CHECK(s.signal_at(21) == 0);
  CHECK(s.signal_at(40) == 0);
  CHECK(s.signal_at(41) == 1);
  CHECK(DaylightSchedule::periodic(23, 23).cycle_length() == 46);
  for (auto [d, n] : {std::pair{20, 20}, {23, 23}, {17, 23}, {1, 1}, {3, 7}})
    for (long t = 1; t <= 500; ++t) {
      const auto p = DaylightSchedule::periodic(d, n);
      REQUIRE(p.signal_at(t) == oracle::periodic_signal(t, d, n));
      REQUIRE(p.signal_at(t) == p.signal_at(t + d + n));
    }
  CHECK_THROWS_AS(DaylightSchedule::periodic(0, 20), ScheduleError);
  CHECK_THROWS_AS(DaylightSchedule::periodic(20, -1), ScheduleError);
}

TEST_CASE("day positions of the periodic clock") {
  const auto s = DaylightSchedule::periodic();
  for (Step t = 1; t <= 400; ++t) {
    const auto p = s.locate(t);
    REQUIRE(p.day == static_cast<int>((t - 1) / 40) + 1);
    REQUIRE(p.day_rel_step == static_cast<int>((t - 1) % 40) + 1);
  }
  CHECK(s.day_start(5) == 161);
}

TEST_CASE("clamp") {
  const auto base = DaylightSchedule::periodic();
  const auto day = DaylightSchedule::clamped(base, 161, 1);
  CHECK(day.signal_at(200) == 1);
  for (Step t = 1; t < 161; ++t) REQUIRE(day.signal_at(t) == base.signal_at(t));
  for (Step t = 161; t <= 400; ++t) REQUIRE(day.signal_at(t) == 1);
  const auto night = DaylightSchedule::clamped(base, 161, 0);
  CHECK(night.signal_at(160) == 0);
  const auto dark = DaylightSchedule::clamped(base, 1, 0);
  for (Step t = 1; t <= 100; ++t) REQUIRE(dark.signal_at(t) == 0);
  CHECK_THROWS_AS(DaylightSchedule::clamped(base, 161, 2), ScheduleError);
  CHECK_THROWS_AS(DaylightSchedule::clamped(base, 0, 1), ScheduleError);
  // clamps keep the nominal day boundaries
  CHECK(day.locate(201).day == 6);
}

TEST_CASE("pulse inversion") {
  const auto night = DaylightSchedule::clamped(DaylightSchedule::periodic(), 161, 0);
  const auto p = DaylightSchedule::pulse_inverted(night, 175);
  CHECK(p.signal_at(175) == 1);
  CHECK(p.signal_at(176) == 0);
  int diff = 0;
  for (Step t = 1; t <= 320; ++t) diff += std::abs(p.signal_at(t) - night.signal_at(t));
  CHECK(diff == 1);
}

TEST_CASE("extend daytime on day 2") {
  const auto base = DaylightSchedule::periodic();
  const auto s = DaylightSchedule::phase_shifted(base, 2, ShiftKind::extend_daytime, 10);
  // second daytime covers steps 41..70
  for (Step t = 41; t <= 70; ++t) REQUIRE(s.signal_at(t) == 1);
  CHECK(s.signal_at(71) == 0);
  CHECK(s.day_start(3) == 91);
  for (Step t = 1; t < 61; ++t) REQUIRE(s.signal_at(t) == base.signal_at(t));
  for (Step t = 91; t <= 400; ++t) REQUIRE(s.signal_at(t) == base.signal_at(t - 10));
  CHECK(s.locate(95).day == 3);
  CHECK(s.locate(95).day_rel_step == 5);
}

TEST_CASE("extend night") {
  const auto base = DaylightSchedule::periodic();
  const auto s = DaylightSchedule::phase_shifted(base, 2, ShiftKind::extend_night, 10);
  for (Step t = 61; t <= 90; ++t) REQUIRE(s.signal_at(t) == 0);
  CHECK(s.signal_at(91) == 1);
  CHECK(s.day_start(3) == 91);
  const auto zero = DaylightSchedule::phase_shifted(base, 2, ShiftKind::extend_night, 0);
  for (Step t = 1; t <= 400; ++t) REQUIRE(zero.signal_at(t) == base.signal_at(t));
  CHECK_THROWS_AS(DaylightSchedule::phase_shifted(base, 0, ShiftKind::extend_night, 10), ScheduleError);
}

TEST_CASE("reverse") {
  const auto base = DaylightSchedule::periodic();
  const auto all = DaylightSchedule::phase_shifted(base, 1, ShiftKind::reverse, 0);
  for (Step t = 1; t <= 400; ++t) REQUIRE(all.signal_at(t) == 1 - base.signal_at(t));
  const auto later = DaylightSchedule::phase_shifted(base, 2, ShiftKind::reverse, 0);
  for (Step t = 1; t <= 40; ++t) REQUIRE(later.signal_at(t) == base.signal_at(t));
  for (Step t = 41; t <= 400; ++t) REQUIRE(later.signal_at(t) == 1 - base.signal_at(t));
}

TEST_CASE("switched clock") {
  const auto base = DaylightSchedule::periodic();
  const auto s = DaylightSchedule::switched(base, 2, 17, 23);
  for (Step t = 1; t <= 40; ++t) REQUIRE(s.signal_at(t) == base.signal_at(t));
  for (Step t = 41; t <= 400; ++t) REQUIRE(s.signal_at(t) == oracle::periodic_signal(t - 40, 17, 23));
  CHECK(s.day_start(3) == 81);
}

TEST_CASE("describe and parse round-trip") {
  const auto base = DaylightSchedule::periodic();
  const DaylightSchedule cases[] = {
      base,
      DaylightSchedule::clamped(base, 161, 1),
      DaylightSchedule::pulse_inverted(DaylightSchedule::clamped(base, 161, 0), 175),
      DaylightSchedule::phase_shifted(base, 2, ShiftKind::extend_daytime, 10),
      DaylightSchedule::phase_shifted(base, 2, ShiftKind::reverse, 0),
      DaylightSchedule::switched(base, 2, 23, 17),
  };
  for (const auto& s : cases) {
    const auto back = DaylightSchedule::parse(s.describe());
    CHECK(back.describe() == s.describe());
    for (Step t = 1; t <= 400; ++t) REQUIRE(back.signal_at(t) == s.signal_at(t));
  }
  CHECK(DaylightSchedule::clamped(base, 161, 1).describe() == "clamped(start=161,value=1,base=periodic(day=20,night=20))");
  CHECK_THROWS(DaylightSchedule::parse("periodic(day=20"));
}

TEST_CASE("next night onset") {
  const auto s = DaylightSchedule::periodic();
  CHECK(s.next_night_onset(1) == 21);
  CHECK(s.next_night_onset(21) == 22);
  CHECK(DaylightSchedule::clamped(s, 1, 1).next_night_onset(5, 100) == 0);
}
