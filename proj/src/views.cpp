#include "facerep/views.hpp"

#include <cmath>
#include <stdexcept>

namespace facerep {

namespace {

Image rescale_for_views(const Image& img, int target, double scale_factor) {
    validate_image(img);
    if (target < 1) throw std::invalid_argument("ten_views: target must be positive");
    const int short_side = std::min(img.height, img.width);
    const int new_short = static_cast<int>(std::llround(target * scale_factor));
    if (new_short < target)
        throw std::invalid_argument("ten_views: scale_factor leaves image smaller than target");
    const double f = static_cast<double>(new_short) / short_side;
    int new_h, new_w;
    if (img.height <= img.width) {
        new_h = new_short;
        new_w = static_cast<int>(std::llround(img.width * f));
    } else {
        new_w = new_short;
        new_h = static_cast<int>(std::llround(img.height * f));
    }
    return resize_bilinear(img, new_h, new_w);
}

}  // namespace

ViewSet ten_views(const Image& img, int target, double scale_factor) {
    const Image base = rescale_for_views(img, target, scale_factor);
    if (base.height < target || base.width < target)
        throw std::invalid_argument("ten_views: target larger than rescaled image");
    const int dy = base.height - target;
    const int dx = base.width - target;
    ViewSet out;
    out.views[0] = crop(base, 0, 0, target, target);        // top-left
    out.views[1] = crop(base, 0, dx, target, target);       // top-right
    out.views[2] = crop(base, dy, 0, target, target);       // bottom-left
    out.views[3] = crop(base, dy, dx, target, target);      // bottom-right
    out.views[4] = crop(base, dy / 2, dx / 2, target, target);  // center
    for (int i = 0; i < 5; ++i) out.views[5 + i] = mirror_horizontal(out.views[i]);
    return out;
}

Image center_view(const Image& img, int target, double scale_factor) {
    const Image base = rescale_for_views(img, target, scale_factor);
    if (base.height < target || base.width < target)
        throw std::invalid_argument("center_view: target larger than rescaled image");
    return crop(base, (base.height - target) / 2, (base.width - target) / 2, target, target);
}

Image random_view(const Image& img, int target, Rng& rng, double scale_factor) {
    std::uniform_int_distribution<int> pick(0, 9);
    const int k = pick(rng);
    // Crops are cheap; building only the chosen view keeps training fast.
    const Image base = rescale_for_views(img, target, scale_factor);
    if (base.height < target || base.width < target)
        throw std::invalid_argument("random_view: target larger than rescaled image");
    const int dy = base.height - target;
    const int dx = base.width - target;
    const int idx = k % 5;
    int top = 0, left = 0;
    if (idx == 1) left = dx;
    else if (idx == 2) top = dy;
    else if (idx == 3) { top = dy; left = dx; }
    else if (idx == 4) { top = dy / 2; left = dx / 2; }
    Image v = crop(base, top, left, target, target);
    return k >= 5 ? mirror_horizontal(v) : v;
}

}  // namespace facerep
