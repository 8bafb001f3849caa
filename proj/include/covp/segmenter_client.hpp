#pragma once

#include <vector>

#include "covp/geometry.hpp"
#include "covp/services.hpp"

namespace covp {

// Highest confidence wins; ties fall to the larger foreground area, then to
// the earliest candidate. Total and deterministic.
SoftMask select_mask(const std::vector<MaskCandidate>& candidates);

// Pixels >= threshold become foreground.
BinaryMask binarize(const SoftMask& mask, double threshold = 0.5);

}  // namespace covp
