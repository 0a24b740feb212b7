"""Self-contained PDF parsing and preview rasterization."""

from autopr.pdf.raster import page_pixel_size, rasterize_page
from autopr.pdf.reader import (
    EmbeddedImage,
    PdfDocument,
    PdfPage,
    PlacedImage,
    TextRun,
    parse_pdf,
)

__all__ = [
    "EmbeddedImage",
    "PdfDocument",
    "PdfPage",
    "PlacedImage",
    "TextRun",
    "page_pixel_size",
    "parse_pdf",
    "rasterize_page",
]
