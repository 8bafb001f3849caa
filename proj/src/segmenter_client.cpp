#include "covp/segmenter_client.hpp"

#include <numeric>

#include "covp/errors.hpp"

namespace covp {

namespace {

double soft_area(const SoftMask& mask) {
  return std::accumulate(mask.values.begin(), mask.values.end(), 0.0,
                         [](double acc, float v) { return acc + v; });
}

}  // namespace

SoftMask select_mask(const std::vector<MaskCandidate>& candidates) {
  if (candidates.empty()) throw PreconditionError("select_mask needs candidates");
  std::size_t best = 0;
  double best_area = soft_area(candidates[0].mask);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (candidates[i].confidence > candidates[best].confidence) {
      best = i;
      best_area = soft_area(candidates[i].mask);
    } else if (candidates[i].confidence == candidates[best].confidence) {
      const double area = soft_area(candidates[i].mask);
      if (area > best_area) {
        best = i;
        best_area = area;
      }
    }
  }
  return candidates[best].mask;
}

BinaryMask binarize(const SoftMask& mask, double threshold) {
  mask.validate();
  if (threshold < 0.0 || threshold > 1.0) throw PreconditionError("threshold outside [0,1]");
  BinaryMask out{mask.height, mask.width, {}};
  out.values.resize(mask.values.size());
  for (std::size_t i = 0; i < mask.values.size(); ++i) {
    out.values[i] = static_cast<double>(mask.values[i]) >= threshold ? 1 : 0;
  }
  return out;
}

}  // namespace covp
