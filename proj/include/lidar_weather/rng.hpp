#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace lidar_weather
{

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept { return mix64(a ^ mix64(b)); }

// Counter-based stream: draws depend only on (seed, key, draw index), so any
// pixel/ray/item can be evaluated independently and in any order.
class CounterRng
{
  public:
    constexpr CounterRng(std::uint64_t seed, std::uint64_t key) noexcept : base_(hash_combine(seed, key)) {}

    constexpr std::uint64_t next_u64() noexcept { return mix64(base_ + 0x632be59bd9b4e019ULL * ++counter_); }

    // [0, 1)
    constexpr double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    // (0, 1]
    constexpr double uniform_open_zero() noexcept { return 1.0 - uniform(); }

    double normal() noexcept
    {
        const double u1 = uniform_open_zero();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

  private:
    std::uint64_t base_;
    std::uint64_t counter_ = 0;
};

} // namespace lidar_weather
