"""Rasterize parsed PDF pages to PIL images.

This is a preview-quality renderer: white canvas, embedded raster images
composited where the content stream placed them, and text drawn with a
bundled vector font at approximately the right position and size. It exists
so the pipeline can crop figure assets and feed page snapshots to a layout
detector without an external rendering engine.
"""

from __future__ import annotations

import io

from PIL import Image, ImageDraw, ImageFont

from autopr.pdf.reader import EmbeddedImage, PdfPage

__all__ = ["page_pixel_size", "rasterize_page"]


def page_pixel_size(width_pt: float, height_pt: float, dpi: int) -> tuple[int, int]:
    """Pixel dimensions of a page: round(inches * dpi) per axis."""
    return (round(width_pt / 72.0 * dpi), round(height_pt / 72.0 * dpi))


def _decode_embedded(image: EmbeddedImage) -> Image.Image | None:
    try:
        if "/DCTDecode" in image.filters or "/JPXDecode" in image.filters:
            return Image.open(io.BytesIO(image.data)).convert("RGB")
        if image.bits != 8 or image.width <= 0 or image.height <= 0:
            return None
        if image.color_space.endswith("DeviceRGB"):
            expected = image.width * image.height * 3
            if len(image.data) < expected:
                return None
            return Image.frombytes("RGB", (image.width, image.height), image.data[:expected])
        if image.color_space.endswith("DeviceGray"):
            expected = image.width * image.height
            if len(image.data) < expected:
                return None
            return Image.frombytes("L", (image.width, image.height), image.data[:expected]).convert(
                "RGB"
            )
    except Exception:
        return None
    return None


def rasterize_page(page: PdfPage, dpi: int) -> Image.Image:
    """Render one parsed page to an RGB image at the requested density."""
    scale = dpi / 72.0
    width_px, height_px = page_pixel_size(page.width_pt, page.height_pt, dpi)
    canvas = Image.new("RGB", (max(width_px, 1), max(height_px, 1)), "white")
    draw = ImageDraw.Draw(canvas)

    for placed in page.images:
        x0 = round(placed.x0 * scale)
        x1 = round(placed.x1 * scale)
        # Flip to top-left origin.
        y0 = round((page.height_pt - placed.y1) * scale)
        y1 = round((page.height_pt - placed.y0) * scale)
        if x1 <= x0 or y1 <= y0:
            continue
        decoded = _decode_embedded(placed.image) if placed.image else None
        if decoded is not None:
            canvas.paste(decoded.resize((x1 - x0, y1 - y0)), (x0, y0))
        else:
            draw.rectangle([x0, y0, x1 - 1, y1 - 1], fill=(226, 226, 226), outline=(120, 120, 120))

    for run in page.runs:
        size_px = max(int(round(run.font_size * scale)), 1)
        try:
            font = ImageFont.load_default(size=size_px)
        except TypeError:  # very old Pillow: fixed-size bitmap font
            font = ImageFont.load_default()
        top = (page.height_pt - run.y) * scale - size_px * 0.8
        draw.text((run.x * scale, top), run.text, fill="black", font=font)

    return canvas
