#!/usr/bin/env python3
"""Decode golden_*.jpg fixtures with Pillow (libjpeg-turbo) into PGM/PPM dumps."""
import pathlib
import sys

from PIL import Image

root = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/fixtures")
for jpg in sorted(root.glob("golden_*.jpg")):
    im = Image.open(jpg)
    im.load()
    ext = ".pgm" if im.mode == "L" else ".ppm"
    out = jpg.with_suffix(ext)
    im.save(out)
    print(f"{jpg.name} -> {out.name} ({im.mode} {im.size[0]}x{im.size[1]})")
