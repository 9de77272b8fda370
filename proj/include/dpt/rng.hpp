#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dpt {

// Independent generator for a named purpose ("data", "init", "shuffle")
// derived from one user seed.
std::mt19937_64 named_stream(std::uint64_t seed, std::string_view name);

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace dpt
