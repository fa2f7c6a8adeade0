#include "facerep/lbp.hpp"

#include <array>
#include <stdexcept>

namespace facerep {

namespace {

int circular_transitions(int code) {
    int t = 0;
    for (int i = 0; i < 8; ++i) {
        const int a = (code >> i) & 1;
        const int b = (code >> ((i + 1) % 8)) & 1;
        t += a ^ b;
    }
    return t;
}

// code -> bin in [0,58) for uniform patterns, -1 for the rest
std::array<int, 256> build_uniform_table() {
    std::array<int, 256> table{};
    int next = 0;
    for (int code = 0; code < 256; ++code) {
        table[code] = circular_transitions(code) <= 2 ? next++ : -1;
    }
    return table;
}

const std::array<int, 256>& uniform_table() {
    static const std::array<int, 256> table = build_uniform_table();
    return table;
}

// ring order: bit k set when neighbor k >= center
constexpr int kOffY[8] = {-1, -1, -1, 0, 1, 1, 1, 0};
constexpr int kOffX[8] = {-1, 0, 1, 1, 1, 0, -1, -1};

}  // namespace

std::vector<float> lbp_descriptor(const Image& gray, int cell_side) {
    if (gray.channels != 1) throw std::invalid_argument("lbp_descriptor: image must be grayscale");
    if (gray.height != gray.width) throw std::invalid_argument("lbp_descriptor: image must be square");
    if (cell_side < 3) throw std::invalid_argument("lbp_descriptor: cell_side must be >= 3");
    if (gray.height % cell_side != 0) {
        throw std::invalid_argument("lbp_descriptor: side " + std::to_string(gray.height) +
                                    " is not divisible by cell_side " + std::to_string(cell_side));
    }
    const int side = gray.height;
    const int cells = side / cell_side;
    const auto& table = uniform_table();
    std::vector<float> hist(static_cast<size_t>(cells) * cells * 58, 0.0f);

    for (int y = 1; y < side - 1; ++y) {
        for (int x = 1; x < side - 1; ++x) {
            const float center = gray.at(0, y, x);
            int code = 0;
            for (int k = 0; k < 8; ++k) {
                if (gray.at(0, y + kOffY[k], x + kOffX[k]) >= center) code |= 1 << k;
            }
            const int bin = table[static_cast<size_t>(code)];
            if (bin < 0) continue;
            const size_t cell = static_cast<size_t>(y / cell_side) * cells + x / cell_side;
            hist[cell * 58 + static_cast<size_t>(bin)] += 1.0f;
        }
    }
    return hist;
}

}  // namespace facerep
