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

#ifndef FSD_RNG_H_
#define FSD_RNG_H_

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace fsd {

// SplitMix64: a 64-bit-state generator whose integer stream is identical on
// every platform. Floating-point draws derive from the integer stream only.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t NextU64();
  // Uniform in [0, 1) with 53 bits of resolution.
  double Uniform();
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  // Uniform integer in [0, n), rejection-sampled so it is unbiased.
  uint64_t UniformInt(uint64_t n);
  int64_t UniformInt(int64_t lo, int64_t hi_inclusive);
  // Standard normal via Box-Muller (one value per call).
  double Normal();

  template <typename T>
  void Shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(UniformInt(uint64_t(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

// Mixes a base seed with stream identifiers into an independent seed.
uint64_t DeriveSeed(uint64_t base, std::initializer_list<uint64_t> streams);

}  // namespace fsd

#endif  // FSD_RNG_H_
