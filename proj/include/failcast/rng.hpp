#pragma once

#include <cstdint>
#include <random>

namespace failcast::rng {

// Pipeline stages get disjoint substream namespaces under one run seed.
enum class Stage : std::uint64_t {
  Falsify = 1,
  FlowInit = 2,
  Sample = 3,
  SamplePilot = 4,
  Cluster = 5,
  DemoInit = 6,
  Refine = 7,
  Evaluate = 8,
  GprFit = 9,
  Test = 99,
};

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t substream_seed(std::uint64_t run_seed, std::uint64_t stage,
                                    std::uint64_t index) {
  std::uint64_t s = run_seed;
  std::uint64_t a = splitmix64(s);
  s = a ^ (stage * 0xD6E8FEB86659FD93ULL);
  std::uint64_t b = splitmix64(s);
  s = b ^ (index * 0xA5A3B1C9E4F70253ULL);
  return splitmix64(s);
}

inline std::mt19937_64 stream(std::uint64_t run_seed, Stage stage, std::uint64_t index) {
  return std::mt19937_64(substream_seed(run_seed, static_cast<std::uint64_t>(stage), index));
}

inline std::mt19937_64 stream(std::uint64_t run_seed, std::uint64_t stage, std::uint64_t index) {
  return std::mt19937_64(substream_seed(run_seed, stage, index));
}

}  // namespace failcast::rng
