#pragma once

#include <cstdint>
#include <vector>

#include "circadian/nn/gradcheck.hpp"

namespace circadian {

/// Finite-difference checks of every layer kind (conv, dense with each
/// activation, LSTM/GRU/RNN over 10 steps, dueling heads) and of the full
/// training loss on a 2-episode x 5-step toy problem. One report per
/// parameter or input array checked.
std::vector<nn::GradCheckReport> run_gradcheck_suite(std::uint64_t seed = 7);

}  // namespace circadian
