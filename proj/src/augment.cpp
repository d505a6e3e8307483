#include "skinres/augment.hpp"

#include <fmt/format.h>

#include "skinres/error.hpp"

namespace skinres {

std::string DihedralElement::name() const {
    return fmt::format("{}rot{}", hflip ? "flip+" : "", degrees());
}

const std::array<DihedralElement, 8>& dihedral_elements() {
    static const std::array<DihedralElement, 8> elements = [] {
        std::array<DihedralElement, 8> out{};
        for (int f = 0; f < 2; ++f) {
            for (int k = 0; k < 4; ++k) out[static_cast<std::size_t>(f * 4 + k)] = {k, f == 1};
        }
        return out;
    }();
    return elements;
}

int canonical_index(const DihedralElement& g) {
    return (g.hflip ? 4 : 0) + ((g.quarter_turns % 4) + 4) % 4;
}

// Acting as R^k F^s, and F R^k = R^-k F.
DihedralElement compose(const DihedralElement& g, const DihedralElement& h) {
    const int k = g.hflip ? g.quarter_turns - h.quarter_turns : g.quarter_turns + h.quarter_turns;
    return {((k % 4) + 4) % 4, g.hflip != h.hflip};
}

DihedralElement inverse(const DihedralElement& g) {
    if (g.hflip) return g;  // reflections are involutions
    return {(4 - g.quarter_turns) % 4, false};
}

Image apply(const DihedralElement& g, const Image& image) {
    if (!image.is_square()) {
        fail(ErrorKind::shape, fmt::format("dihedral transform needs a square image, got {}x{}",
                                           image.width(), image.height()));
    }
    const int n = image.width();
    const int last = n - 1;
    const int k = ((g.quarter_turns % 4) + 4) % 4;
    Image out(image.channels(), n, n);
    for (int c = 0; c < image.channels(); ++c) {
        for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) {
                // Source coordinate in the flipped image for output (y, x) after CCW rotation.
                int sy = y;
                int sx = x;
                switch (k) {
                    case 1: sy = x; sx = last - y; break;
                    case 2: sy = last - y; sx = last - x; break;
                    case 3: sy = last - x; sx = y; break;
                    default: break;
                }
                if (g.hflip) sx = last - sx;
                out.at(c, y, x) = image.at(c, sy, sx);
            }
        }
    }
    return out;
}

std::vector<Image> orbit(const Image& image) {
    std::vector<Image> out;
    out.reserve(8);
    for (const auto& g : dihedral_elements()) out.push_back(apply(g, image));
    return out;
}

}  // namespace skinres
