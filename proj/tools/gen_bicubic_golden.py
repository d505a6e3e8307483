"""Regenerates tests/golden/bicubic_golden.inc from Pillow's float ('F' mode) bicubic resampler.

Pillow's BICUBIC filter is the a = -0.5 cubic, and on upscaling it applies no anti-alias
widening, so it is a reference for resize_bicubic on enlargements.
"""
import pathlib

import numpy as np
from PIL import Image


def pattern(h, w):
    y, x = np.mgrid[0:h, 0:w]
    return np.stack([
        ((x + y) % 2) * 255.0,                   # pixel checkerboard
        (((x // 2) + (y // 2)) % 2) * 200.0,     # 2x2 checkerboard
        x * 17.0 + y * 9.0 - 40.0,               # ramp with negative values
    ]).astype(np.float32)


def resize(planes, target):
    out = [np.asarray(Image.fromarray(p, mode="F").resize((target, target), Image.BICUBIC)) for p in planes]
    return np.stack(out)


def literal(v):
    s = f"{v:.9g}"
    return s + ("f" if any(c in s for c in ".e") else ".0f")


def emit(name, arr):
    flat = ", ".join(literal(v) for v in arr.reshape(-1))
    return f"inline constexpr float {name}[] = {{{flat}}};\n"


cases = [("checker8x8_to16", 8, 8, 16), ("checker8x6_to16", 6, 8, 16), ("checker5x7_to12", 7, 5, 12)]
text = "// Generated by tools/gen_bicubic_golden.py. Do not edit.\n#pragma once\n\n"
for name, h, w, target in cases:
    src = pattern(h, w)
    text += f"// input {w}x{h} (width x height), output {target}x{target}\n"
    text += emit(f"k_{name}_in", src) + emit(f"k_{name}_out", resize(src, target)) + "\n"
pathlib.Path(__file__).resolve().parents[1].joinpath("tests/golden/bicubic_golden.inc").write_text(text)
