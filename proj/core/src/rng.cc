// Copyright 2026 The FSD-NAS Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fsd/rng.h"

#include <cmath>
#include <numbers>

namespace fsd {

uint64_t SplitMix64::NextU64() {
  uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double SplitMix64::Uniform() { return double(NextU64() >> 11) * 0x1.0p-53; }

uint64_t SplitMix64::UniformInt(uint64_t n) {
  if (n <= 1) return 0;
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t r;
  do {
    r = NextU64();
  } while (r >= limit);
  return r % n;
}

int64_t SplitMix64::UniformInt(int64_t lo, int64_t hi_inclusive) {
  return lo + static_cast<int64_t>(
                  UniformInt(static_cast<uint64_t>(hi_inclusive - lo + 1)));
}

double SplitMix64::Normal() {
  double u1 = Uniform();
  while (u1 <= 0.0) u1 = Uniform();
  const double u2 = Uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

uint64_t DeriveSeed(uint64_t base, std::initializer_list<uint64_t> streams) {
  SplitMix64 mix(base);
  uint64_t h = mix.NextU64();
  for (uint64_t s : streams) {
    SplitMix64 step(h ^ (s * 0xD1B54A32D192ED03ull + 0x8CB92BA72F3D8DD7ull));
    h = step.NextU64();
  }
  return h;
}

}  // namespace fsd
