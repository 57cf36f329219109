#pragma once

#include <cstdint>
#include <string>

#include "invrisk/tensor.hpp"

namespace invrisk {

// gaussian: unit-normalized standard normal vectors. grid: square images with
// random frequency content, values min-max scaled to [0, 1].
enum class SyntheticKind { kGaussian, kGrid };

SyntheticKind synthetic_kind_from_string(const std::string& name);
std::string to_string(SyntheticKind kind);

// Range of the per-instance spectral decay exponent for grid images. Cosine
// coefficients fall off as (1 + f)^-slope, so large slopes give smooth
// low-frequency images and slopes near zero give noisy textured ones.
struct GridSpectrum {
  double slope_min = 0.3;
  double slope_max = 2.5;
};

// n instances of dimension m as an (n, m) tensor. Per-instance randomness
// derives from seed xor the instance index, so any slice of the batch is
// reproducible on its own.
Tensor generate_synthetic(SyntheticKind kind, std::size_t n, std::size_t m,
                          std::uint64_t seed,
                          const GridSpectrum& spectrum = {});

}  // namespace invrisk
