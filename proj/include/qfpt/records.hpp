#pragma once

#include <cstdint>
#include <string>

namespace qfpt {

/// Upper exit: overlap reached 1 - eps (trapped in Q1). Lower exit: reached eps (Q2).
enum class ExitSide : int { None = 0, Upper = 1, Lower = 2 };

struct HittingRecord {
  std::uint64_t trajectory_id = 0;
  ExitSide side = ExitSide::None;
  double hit_time = 0.0;  // t_max when censored
  bool censored = false;

  friend bool operator==(const HittingRecord&, const HittingRecord&) = default;
};

inline const char* to_string(ExitSide side) {
  switch (side) {
    case ExitSide::Upper: return "upper";
    case ExitSide::Lower: return "lower";
    case ExitSide::None: break;
  }
  return "none";
}

}  // namespace qfpt
