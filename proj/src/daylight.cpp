#include "circadian/daylight.hpp"

#include <cctype>
#include <charconv>
#include <map>
#include <sstream>

namespace circadian {

struct DaylightSchedule::Node {
  ScheduleKind kind = ScheduleKind::periodic;
  std::shared_ptr<const Node> base;

  // periodic / composite clock
  int day_len = 20;
  int night_len = 20;

  // clamped
  Step clamp_start = 0;
  int clamp_value = 0;

  // phase_shifted / composite
  int day_index = 0;
  ShiftKind shift = ShiftKind::extend_daytime;
  int extra = 0;
  Step insert_at = 0;   // first delayed step (extend_*), or first inverted / switched step
  int inserted_value = 0;

  // pulse_inverted
  Step pulse_step = 0;
};

namespace {

using Node = DaylightSchedule::Node;

int signal(const Node& n, Step t);
Step start_of_day(const Node& n, int day);

int periodic_signal(int day_len, int night_len, Step t) {
  const Step cycle = day_len + night_len;
  const Step rel = ((t - 1) % cycle + cycle) % cycle + 1;
  return rel <= day_len ? 1 : 0;
}

// Number of leading daylight steps of `day` in schedule `n`.
int daytime_length(const Node& n, int day) {
  const Step begin = start_of_day(n, day);
  const Step end = start_of_day(n, day + 1);
  Step t = begin;
  while (t < end && signal(n, t) == 1) ++t;
  return static_cast<int>(t - begin);
}

int signal(const Node& n, Step t) {
  switch (n.kind) {
    case ScheduleKind::periodic:
      return periodic_signal(n.day_len, n.night_len, t);
    case ScheduleKind::clamped:
      return t < n.clamp_start ? signal(*n.base, t) : n.clamp_value;
    case ScheduleKind::pulse_inverted: {
      const int v = signal(*n.base, t);
      return t == n.pulse_step ? 1 - v : v;
    }
    case ScheduleKind::phase_shifted:
      if (t < n.insert_at) return signal(*n.base, t);
      if (n.shift == ShiftKind::reverse) return 1 - signal(*n.base, t);
      if (t < n.insert_at + n.extra) return n.inserted_value;
      return signal(*n.base, t - n.extra);
    case ScheduleKind::composite:
      if (t < n.insert_at) return signal(*n.base, t);
      return periodic_signal(n.day_len, n.night_len, t - n.insert_at + 1);
  }
  return 0;
}

Step start_of_day(const Node& n, int day) {
  switch (n.kind) {
    case ScheduleKind::periodic:
      return static_cast<Step>(day - 1) * (n.day_len + n.night_len) + 1;
    case ScheduleKind::clamped:
    case ScheduleKind::pulse_inverted:
      return start_of_day(*n.base, day);
    case ScheduleKind::phase_shifted:
      if (day <= n.day_index && n.shift != ShiftKind::reverse) return start_of_day(*n.base, day);
      if (n.shift == ShiftKind::reverse) {
        if (day < n.day_index) return start_of_day(*n.base, day);
        // After inversion a day begins where the base night began.
        return start_of_day(*n.base, day) + daytime_length(*n.base, day);
      }
      return start_of_day(*n.base, day) + n.extra;
    case ScheduleKind::composite:
      if (day < n.day_index) return start_of_day(*n.base, day);
      return n.insert_at + static_cast<Step>(day - n.day_index) * (n.day_len + n.night_len);
  }
  return 1;
}

const Node& root(const Node& n) {
  const Node* p = &n;
  while (p->base) p = p->base.get();
  return *p;
}

void describe_into(const Node& n, std::ostringstream& os) {
  switch (n.kind) {
    case ScheduleKind::periodic:
      os << "periodic(day=" << n.day_len << ",night=" << n.night_len << ")";
      return;
    case ScheduleKind::clamped:
      os << "clamped(start=" << n.clamp_start << ",value=" << n.clamp_value << ",base=";
      break;
    case ScheduleKind::phase_shifted:
      os << "phase_shifted(day=" << n.day_index << ",shift=" << to_string(n.shift)
         << ",extra=" << n.extra << ",base=";
      break;
    case ScheduleKind::pulse_inverted:
      os << "pulse_inverted(step=" << n.pulse_step << ",base=";
      break;
    case ScheduleKind::composite:
      os << "composite(day=" << n.day_index << ",day_len=" << n.day_len
         << ",night_len=" << n.night_len << ",base=";
      break;
  }
  describe_into(*n.base, os);
  os << ")";
}

// Recursive-descent reader for the describe() grammar:
//   schedule := ident '(' field (',' field)* ')'
//   field    := ident '=' (integer | ident | schedule)
class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  DaylightSchedule read_all() {
    DaylightSchedule s = read_schedule();
    skip_space();
    if (pos_ != text_.size()) fail("trailing characters");
    return s;
  }

 private:
  struct Field {
    std::string word;
    std::int64_t number = 0;
    bool is_number = false;
    std::shared_ptr<DaylightSchedule> schedule;
  };

  DaylightSchedule read_schedule() {
    const std::string kind = read_ident();
    expect('(');
    std::map<std::string, Field> fields;
    for (;;) {
      const std::string key = read_ident();
      expect('=');
      Field f;
      skip_space();
      if (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '-')) {
        f.number = read_int();
        f.is_number = true;
      } else {
        const std::size_t mark = pos_;
        f.word = read_ident();
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == '(') {
          pos_ = mark;
          f.schedule = std::make_shared<DaylightSchedule>(read_schedule());
        }
      }
      if (!fields.emplace(key, std::move(f)).second) fail("duplicate field '" + key + "'");
      skip_space();
      if (pos_ < text_.size() && text_[pos_] == ',') {
        ++pos_;
        continue;
      }
      expect(')');
      break;
    }

    auto num = [&](const char* key) -> std::int64_t {
      auto it = fields.find(key);
      if (it == fields.end() || !it->second.is_number) fail(std::string("missing integer field '") + key + "'");
      return it->second.number;
    };
    auto base = [&]() -> DaylightSchedule {
      auto it = fields.find("base");
      if (it == fields.end() || !it->second.schedule) fail("missing base schedule");
      return *it->second.schedule;
    };

    if (kind == "periodic") return DaylightSchedule::periodic(int(num("day")), int(num("night")));
    if (kind == "clamped") return DaylightSchedule::clamped(base(), num("start"), int(num("value")));
    if (kind == "pulse_inverted") return DaylightSchedule::pulse_inverted(base(), num("step"));
    if (kind == "composite")
      return DaylightSchedule::switched(base(), int(num("day")), int(num("day_len")), int(num("night_len")));
    if (kind == "phase_shifted") {
      auto it = fields.find("shift");
      if (it == fields.end() || it->second.word.empty()) fail("missing shift kind");
      ShiftKind sk;
      if (it->second.word == "extend_daytime") sk = ShiftKind::extend_daytime;
      else if (it->second.word == "extend_night") sk = ShiftKind::extend_night;
      else if (it->second.word == "reverse") sk = ShiftKind::reverse;
      else fail("unknown shift kind '" + it->second.word + "'");
      return DaylightSchedule::phase_shifted(base(), int(num("day")), sk, int(num("extra")));
    }
    fail("unknown schedule kind '" + kind + "'");
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  void expect(char c) {
    skip_space();
    if (pos_ >= text_.size() || text_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  std::string read_ident() {
    skip_space();
    const std::size_t b = pos_;
    while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) ++pos_;
    if (b == pos_) fail("expected identifier");
    return std::string(text_.substr(b, pos_ - b));
  }
  std::int64_t read_int() {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), v);
    if (ec != std::errc{}) fail("expected integer");
    pos_ = static_cast<std::size_t>(p - text_.data());
    return v;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw ScheduleError("schedule text, offset " + std::to_string(pos_) + ": " + what);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::periodic: return "periodic";
    case ScheduleKind::clamped: return "clamped";
    case ScheduleKind::phase_shifted: return "phase_shifted";
    case ScheduleKind::pulse_inverted: return "pulse_inverted";
    case ScheduleKind::composite: return "composite";
  }
  return "?";
}

std::string_view to_string(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::extend_daytime: return "extend_daytime";
    case ShiftKind::extend_night: return "extend_night";
    case ShiftKind::reverse: return "reverse";
  }
  return "?";
}

DaylightSchedule DaylightSchedule::periodic(int day_len, int night_len) {
  if (day_len < 1 || night_len < 1)
    throw ScheduleError("periodic schedule needs day_len >= 1 and night_len >= 1");
  auto n = std::make_shared<Node>();
  n->kind = ScheduleKind::periodic;
  n->day_len = day_len;
  n->night_len = night_len;
  return DaylightSchedule(std::move(n));
}

DaylightSchedule DaylightSchedule::clamped(const DaylightSchedule& base, Step clamp_start, int value) {
  if (clamp_start < 1) throw ScheduleError("clamp_start must be >= 1");
  if (value != 0 && value != 1) throw ScheduleError("clamp value must be 0 or 1");
  auto n = std::make_shared<Node>();
  n->kind = ScheduleKind::clamped;
  n->base = base.node_;
  n->clamp_start = clamp_start;
  n->clamp_value = value;
  return DaylightSchedule(std::move(n));
}

DaylightSchedule DaylightSchedule::phase_shifted(const DaylightSchedule& base, int day_index,
                                                 ShiftKind kind, int extra) {
  if (day_index < 1) throw ScheduleError("phase shift day_index must be >= 1");
  if (kind != ShiftKind::reverse && extra < 0) throw ScheduleError("phase shift extra must be >= 0");
  auto n = std::make_shared<Node>();
  n->kind = ScheduleKind::phase_shifted;
  n->base = base.node_;
  n->day_index = day_index;
  n->shift = kind;
  n->extra = kind == ShiftKind::reverse ? 0 : extra;
  const Node& b = *base.node_;
  switch (kind) {
    case ShiftKind::extend_daytime:
      n->insert_at = start_of_day(b, day_index) + daytime_length(b, day_index);
      n->inserted_value = 1;
      break;
    case ShiftKind::extend_night:
      n->insert_at = start_of_day(b, day_index + 1);
      n->inserted_value = 0;
      break;
    case ShiftKind::reverse:
      n->insert_at = start_of_day(b, day_index);
      break;
  }
  return DaylightSchedule(std::move(n));
}

DaylightSchedule DaylightSchedule::pulse_inverted(const DaylightSchedule& base, Step pulse_step) {
  if (pulse_step < 1) throw ScheduleError("pulse_step must be >= 1");
  auto n = std::make_shared<Node>();
  n->kind = ScheduleKind::pulse_inverted;
  n->base = base.node_;
  n->pulse_step = pulse_step;
  return DaylightSchedule(std::move(n));
}

DaylightSchedule DaylightSchedule::switched(const DaylightSchedule& base, int day_index, int day_len,
                                            int night_len) {
  if (day_index < 1) throw ScheduleError("switch day_index must be >= 1");
  if (day_len < 1 || night_len < 1)
    throw ScheduleError("switched clock needs day_len >= 1 and night_len >= 1");
  auto n = std::make_shared<Node>();
  n->kind = ScheduleKind::composite;
  n->base = base.node_;
  n->day_index = day_index;
  n->day_len = day_len;
  n->night_len = night_len;
  n->insert_at = start_of_day(*base.node_, day_index);
  return DaylightSchedule(std::move(n));
}

int DaylightSchedule::signal_at(Step t) const { return signal(*node_, t); }

Step DaylightSchedule::day_start(int day) const { return start_of_day(*node_, day); }

DayPosition DaylightSchedule::locate(Step t) const {
  if (t < day_start(1)) return {0, static_cast<int>(t)};
  int lo = 1;
  int hi = 2;
  while (day_start(hi) <= t) {
    lo = hi;
    hi *= 2;
  }
  // invariant: day_start(lo) <= t < day_start(hi)
  while (hi - lo > 1) {
    const int mid = lo + (hi - lo) / 2;
    if (day_start(mid) <= t) lo = mid;
    else hi = mid;
  }
  return {lo, static_cast<int>(t - day_start(lo) + 1)};
}

Step DaylightSchedule::next_night_onset(Step t, Step horizon) const {
  for (Step s = t + 1; s <= t + horizon; ++s)
    if (signal_at(s) == 0) return s;
  return 0;
}

ScheduleKind DaylightSchedule::kind() const { return node_->kind; }
int DaylightSchedule::day_len() const { return root(*node_).day_len; }
int DaylightSchedule::night_len() const { return root(*node_).night_len; }

std::string DaylightSchedule::describe() const {
  std::ostringstream os;
  describe_into(*node_, os);
  return os.str();
}

DaylightSchedule DaylightSchedule::parse(std::string_view text) { return Reader(text).read_all(); }

}  // namespace circadian
