#pragma once

#include <random>

namespace csclog {

/// Engine used for every seeded draw (initialization, shuffling, dropout, corpora).
using Rng = std::mt19937_64;

}  // namespace csclog
