#pragma once

#include <array>

#include "facerep/image.hpp"
#include "facerep/rng.hpp"

namespace facerep {

// The ten augmentation views of one face image: the image is rescaled
// (aspect preserved) so its shorter side is round(scale_factor * target),
// then the 4 corner crops and the center crop of size target are taken,
// followed by the horizontal mirror of each. Views 5..9 mirror views 0..4.
struct ViewSet {
    std::array<Image, 10> views;
};

inline constexpr double kDefaultViewScaleFactor = 8.0 / 7.0;  // 64 -> 73, 128 -> 146

ViewSet ten_views(const Image& img, int target, double scale_factor = kDefaultViewScaleFactor);

// Uniform choice among the ten views, independent per call.
Image random_view(const Image& img, int target, Rng& rng,
                  double scale_factor = kDefaultViewScaleFactor);

// View 4 alone (the deterministic center crop), without building the rest.
Image center_view(const Image& img, int target, double scale_factor = kDefaultViewScaleFactor);

}  // namespace facerep
