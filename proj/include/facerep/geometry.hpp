#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace facerep {

// Axis-aligned box, top-left origin, pixel units.
struct BBox {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    double area() const { return w * h; }
    double right() const { return x + w; }
    double bottom() const { return y + h; }

    bool valid() const {
        return w > 0.0 && h > 0.0 && std::isfinite(x) && std::isfinite(y) &&
               std::isfinite(w) && std::isfinite(h);
    }
};

inline void validate_box(const BBox& b) {
    if (!b.valid()) throw std::invalid_argument("BBox: width/height must be positive and finite");
}

// Intersection-over-union of two boxes. Symmetric, in [0,1].
inline double iou(const BBox& a, const BBox& b) {
    validate_box(a);
    validate_box(b);
    const double ix = std::max(0.0, std::min(a.right(), b.right()) - std::max(a.x, b.x));
    const double iy = std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    return inter / uni;
}

}  // namespace facerep
