#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "shade/tensor.hpp"

namespace shade {

inline constexpr int kPatchSize = 28;
inline constexpr int kLabelSize = 5;
inline constexpr int kLabelCells = kLabelSize * kLabelSize;
/// Offset from a patch centre to its top-left pixel; the patch spans
/// [c - 14, c + 13] and the label window [c - 2, c + 2].
inline constexpr int kPatchHalf = kPatchSize / 2;
/// Minimum distance from any border for a patch centre.
inline constexpr int kBorderMargin = 14;

/// A 28x28x3 input crop with the 5x5 shadow-edge labels of its centre.
struct LabeledPatch {
  Tensor x{kPatchSize, kPatchSize, 3};
  std::array<std::uint8_t, kLabelCells> y{};
  int image_id = 0;
  int cx = 0;
  int cy = 0;

  bool positive() const {
    for (auto v : y)
      if (v) return true;
    return false;
  }
};

}  // namespace shade
