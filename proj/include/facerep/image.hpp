#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace facerep {

// Planar image, values normalized to [0,1], channel-major layout (CHW).
// channels is 3 (RGB) or 1 (gray).
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;  // size = channels * height * width

    Image() = default;
    Image(int h, int w, int c, float fill = 0.0f)
        : height(h), width(w), channels(c),
          data(static_cast<size_t>(c) * h * w, fill) {}

    float& at(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    size_t size() const { return data.size(); }
};

void validate_image(const Image& img);

// Bilinear resample to (out_h, out_w), half-pixel-center convention.
Image resize_bilinear(const Image& img, int out_h, int out_w);

// Horizontal mirror; exact pixel swap, so mirror(mirror(x)) == x bit-for-bit.
Image mirror_horizontal(const Image& img);

Image crop(const Image& img, int top, int left, int out_h, int out_w);

// Standard luma weights (0.299, 0.587, 0.114); identity on gray input.
Image to_gray(const Image& img);

// Lossless 8-bit raster io. Color images are stored as binary PPM (P6),
// gray as PGM (P5). Values are quantized with round(v * 255).
void save_image(const std::string& path, const Image& img);
Image load_image(const std::string& path);

// Resolves face_refs against an image root, caching loads. Tests can seed the
// cache directly with put().
class ImageStore {
  public:
    ImageStore() = default;
    explicit ImageStore(std::string root) : root_(std::move(root)) {}

    const Image& get(const std::string& face_ref);
    void put(const std::string& face_ref, Image img);

  private:
    std::string root_;
    std::map<std::string, Image> cache_;
};

}  // namespace facerep
