#include "facerep/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace facerep {

void validate_image(const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("Image: channels must be 1 or 3");
    if (img.height < 8 || img.width < 8)
        throw std::invalid_argument("Image: dimensions must be >= 8");
    if (img.data.size() != static_cast<size_t>(img.channels) * img.height * img.width)
        throw std::invalid_argument("Image: storage size mismatch");
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize: output size must be positive");
    if (out_h == img.height && out_w == img.width) return img;
    Image out(out_h, out_w, img.channels);
    const double sy = static_cast<double>(img.height) / out_h;
    const double sx = static_cast<double>(img.width) / out_w;
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < out_h; ++y) {
            const double fy = (y + 0.5) * sy - 0.5;
            const int y0 = static_cast<int>(std::floor(fy));
            const double wy = fy - y0;
            const int ya = std::clamp(y0, 0, img.height - 1);
            const int yb = std::clamp(y0 + 1, 0, img.height - 1);
            for (int x = 0; x < out_w; ++x) {
                const double fx = (x + 0.5) * sx - 0.5;
                const int x0 = static_cast<int>(std::floor(fx));
                const double wx = fx - x0;
                const int xa = std::clamp(x0, 0, img.width - 1);
                const int xb = std::clamp(x0 + 1, 0, img.width - 1);
                const double top = img.at(c, ya, xa) * (1.0 - wx) + img.at(c, ya, xb) * wx;
                const double bot = img.at(c, yb, xa) * (1.0 - wx) + img.at(c, yb, xb) * wx;
                out.at(c, y, x) = static_cast<float>(top * (1.0 - wy) + bot * wy);
            }
        }
    }
    return out;
}

Image mirror_horizontal(const Image& img) {
    Image out(img.height, img.width, img.channels);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
    return out;
}

Image crop(const Image& img, int top, int left, int out_h, int out_w) {
    if (top < 0 || left < 0 || top + out_h > img.height || left + out_w > img.width)
        throw std::invalid_argument("crop: window outside image");
    Image out(out_h, out_w, img.channels);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < out_h; ++y)
            for (int x = 0; x < out_w; ++x)
                out.at(c, y, x) = img.at(c, top + y, left + x);
    return out;
}

Image to_gray(const Image& img) {
    if (img.channels == 1) return img;
    Image out(img.height, img.width, 1);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            out.at(0, y, x) = 0.299f * img.at(0, y, x) + 0.587f * img.at(1, y, x) +
                              0.114f * img.at(2, y, x);
    return out;
}

void save_image(const std::string& path, const Image& img) {
    validate_image(img);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write image: " + path);
    f << (img.channels == 3 ? "P6" : "P5") << "\n"
      << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
                row[static_cast<size_t>(x) * img.channels + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

namespace {

int read_pnm_token(std::istream& f, const std::string& path) {
    // skips whitespace and '#' comments
    int c = f.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#')
            while (c != EOF && c != '\n') c = f.get();
        c = f.get();
    }
    int value = -1;
    std::string tok;
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = f.get();
    }
    try {
        value = std::stoi(tok);
    } catch (...) {
        throw std::runtime_error(path + ": malformed raster header");
    }
    return value;
}

}  // namespace

Image load_image(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open image: " + path);
    char magic[2];
    f.read(magic, 2);
    int channels = 0;
    if (magic[0] == 'P' && magic[1] == '6') channels = 3;
    else if (magic[0] == 'P' && magic[1] == '5') channels = 1;
    else throw std::runtime_error(path + ": unsupported raster format (want P5/P6)");
    const int w = read_pnm_token(f, path);
    const int h = read_pnm_token(f, path);
    const int maxval = read_pnm_token(f, path);
    if (w < 1 || h < 1 || maxval != 255)
        throw std::runtime_error(path + ": unsupported raster header");
    Image img(h, w, channels);
    std::vector<unsigned char> row(static_cast<size_t>(w) * channels);
    for (int y = 0; y < h; ++y) {
        f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!f) throw std::runtime_error(path + ": truncated raster data");
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(c, y, x) = static_cast<float>(row[static_cast<size_t>(x) * channels + c]) / 255.0f;
    }
    return img;
}

const Image& ImageStore::get(const std::string& face_ref) {
    const auto it = cache_.find(face_ref);
    if (it != cache_.end()) return it->second;
    std::string path = face_ref;
    if (!root_.empty()) path = root_ + "/" + face_ref;
    try {
        return cache_.emplace(face_ref, load_image(path)).first->second;
    } catch (const std::exception& e) {
        throw std::runtime_error("face_ref " + face_ref + ": " + e.what());
    }
}

void ImageStore::put(const std::string& face_ref, Image img) {
    cache_[face_ref] = std::move(img);
}

}  // namespace facerep
