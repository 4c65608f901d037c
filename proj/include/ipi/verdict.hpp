#pragma once

#include <optional>
#include <string>

#include "ipi/timeline.hpp"

namespace ipi {

enum class TimingVerdict { correct, early, late };

std::string to_string(TimingVerdict v);

/// Half-width of the correctness window around t*.
inline constexpr int kCorrectRadius = 1;
/// Half-width of the evaluation interval around t*.
inline constexpr int kEvalRadius = 4;

/// First trigger in [t*-1, t*+1] is correct, before it early, after it or
/// absent late.
TimingVerdict classify_timing(std::optional<Tick> first_trigger, Tick t_star);

}  // namespace ipi
