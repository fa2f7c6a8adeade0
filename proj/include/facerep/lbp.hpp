#pragma once

#include <vector>

#include "facerep/image.hpp"

namespace facerep {

// Uniform local binary patterns over square cells: each pixel's 8-neighbor
// ring (radius 1, neighbor >= center) forms a code; codes with more than two
// circular 0/1 transitions are dropped, leaving 58 histogram bins per cell.
// Returns raw per-cell counts concatenated in row-major cell order, so a
// 64x64 input gives 16 * 58 = 928 values and 128x128 gives 3712.
std::vector<float> lbp_descriptor(const Image& gray, int cell_side = 16);

}  // namespace facerep
