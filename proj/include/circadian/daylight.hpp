#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

namespace circadian {

/// Global environment time. Steps are 1-indexed: the first observation of an
/// episode happens at step 1.
using Step = std::int64_t;

enum class ScheduleKind { periodic, clamped, phase_shifted, pulse_inverted, composite };
enum class ShiftKind { extend_daytime, extend_night, reverse };

std::string_view to_string(ScheduleKind kind);
std::string_view to_string(ShiftKind kind);

class ScheduleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Day ordinal and 1-based position inside that day. Day 0 is used for steps
/// that precede the first day onset of a schedule (only possible after a
/// reversal at day 1).
struct DayPosition {
  int day = 0;
  int day_rel_step = 0;
};

/// Binary daylight signal as a pure function of global time.
///
/// Every schedule is rooted in a periodic (day_len, night_len) clock and may be
/// wrapped by modifiers (clamp, phase shift, single-step pulse, period switch).
/// Schedules are immutable and cheap to copy; modifiers share their base.
///
/// Besides the signal itself a schedule defines where each "day" starts. A day
/// begins with its daytime phase, so day-relative step 1 is the first step of
/// daylight. Clamps and pulses keep the base's nominal day boundaries, phase
/// shifts move the boundaries of the days they delay.
class DaylightSchedule {
 public:
  /// Periodic signal: 1 for day-relative steps 1..day_len, 0 afterwards.
  static DaylightSchedule periodic(int day_len = 20, int night_len = 20);

  /// Equal to `base` before `clamp_start`, constant `value` from then on.
  static DaylightSchedule clamped(const DaylightSchedule& base, Step clamp_start, int value);

  /// One-time perturbation of day `day_index`.
  ///
  /// extend_daytime / extend_night insert `extra` steps into that day's
  /// daytime / night; every later cycle keeps the base periodicity, delayed by
  /// `extra`. reverse inverts the signal from the start of `day_index` onward
  /// (`extra` is ignored).
  static DaylightSchedule phase_shifted(const DaylightSchedule& base, int day_index,
                                        ShiftKind kind, int extra);

  /// `base` with the value at exactly `pulse_step` inverted.
  static DaylightSchedule pulse_inverted(const DaylightSchedule& base, Step pulse_step);

  /// `base` up to the start of `day_index`, then a fresh periodic clock
  /// (day_len, night_len) whose first cycle begins at that step.
  static DaylightSchedule switched(const DaylightSchedule& base, int day_index, int day_len,
                                   int night_len);

  /// Daylight value (0 or 1) at global step `t` (t >= 1).
  int signal_at(Step t) const;

  /// First global step of day `day` (day >= 1).
  Step day_start(int day) const;

  /// Day ordinal and day-relative step of global step `t`.
  DayPosition locate(Step t) const;

  /// First step t' > t with signal 0, searching at most `horizon` steps ahead.
  /// Returns 0 when none is found.
  Step next_night_onset(Step t, Step horizon = 4096) const;

  ScheduleKind kind() const;
  /// Day/night lengths of the root periodic clock.
  int day_len() const;
  int night_len() const;
  int cycle_length() const { return day_len() + night_len(); }

  /// Structured text form, e.g.
  /// `clamped(start=161,value=1,base=periodic(day=20,night=20))`.
  std::string describe() const;
  static DaylightSchedule parse(std::string_view text);

  friend bool operator==(const DaylightSchedule& a, const DaylightSchedule& b) {
    return a.describe() == b.describe();
  }

  struct Node;

 private:
  explicit DaylightSchedule(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

}  // namespace circadian
