#pragma once

#include <array>
#include <string>
#include <vector>

#include "skinres/image.hpp"

namespace skinres {

/// One element of the dihedral group of the square. Acting on an image, the horizontal
/// flip (if any) is applied first, then `quarter_turns` counter-clockwise 90 degree rotations.
struct DihedralElement {
    int quarter_turns = 0;  ///< 0..3 -> 0, 90, 180, 270 degrees
    bool hflip = false;

    int degrees() const noexcept { return quarter_turns * 90; }
    std::string name() const;

    friend bool operator==(const DihedralElement&, const DihedralElement&) = default;
};

/// Canonical enumeration: hflip false then true, rotation ascending within each.
const std::array<DihedralElement, 8>& dihedral_elements();

/// Index of `g` in dihedral_elements().
int canonical_index(const DihedralElement& g);

/// The element k with apply(k, x) == apply(g, apply(h, x)).
DihedralElement compose(const DihedralElement& g, const DihedralElement& h);
DihedralElement inverse(const DihedralElement& g);

/// Lossless pixel permutation of a square image. Throws Error(shape) for non-square input.
Image apply(const DihedralElement& g, const Image& image);

/// All 8 transformed copies in canonical order.
std::vector<Image> orbit(const Image& image);

}  // namespace skinres
