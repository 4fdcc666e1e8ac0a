"""Writes the small decoder fixtures under tests/data/formats with Pillow.

Each image has a known pixel pattern so the C++ decoders can be checked
against values computed here rather than against themselves.
"""
from pathlib import Path

from PIL import Image

out = Path(__file__).resolve().parent.parent / "data" / "formats"
out.mkdir(parents=True, exist_ok=True)

# 5x3 RGB gradient: pixel (x, y) = (40x, 60y, 200 - 30x)
rgb = Image.new("RGB", (5, 3))
for y in range(3):
    for x in range(5):
        rgb.putpixel((x, y), (40 * x, 60 * y, 200 - 30 * x))
rgb.save(out / "gradient.png")
rgb.save(out / "gradient24.bmp")
rgb.convert("RGBA").save(out / "gradient32.bmp")
rgb.quantize(colors=16).save(out / "gradient8.bmp")

rgba = rgb.convert("RGBA")
rgba.putalpha(77)
rgba.save(out / "gradient_alpha.png")

Image.new("L", (6, 4), 128).save(out / "gray128.png")
Image.new("RGB", (16, 16), (128, 128, 128)).save(out / "gray128.jpg", quality=95)
Image.new("L", (16, 8), 200).save(out / "gray200.jpg", quality=95)
(out / "notes.txt").write_text("not an image\n")
(out / "truncated.png").write_bytes((out / "gradient.png").read_bytes()[:40])
