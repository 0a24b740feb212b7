"""How figure-caption pairing decides, on a synthetic page.

Lays out three visuals and three captions, including one deliberately
distant caption and one tie, then prints which captions attach to which
visuals and why the stragglers stay unmatched.

Run from the repository root:

    python demos/layout_pairing.py
"""

from autopr.visual import VERTICAL_GAP_RATIO, LayoutBox, pair_components

PAGE_HEIGHT = 2750  # US letter at 250 dpi; threshold = 8% of this


def main() -> None:
    threshold = VERTICAL_GAP_RATIO * PAGE_HEIGHT
    print(f"page height {PAGE_HEIGHT}px -> pairing threshold {threshold:.0f}px\n")

    boxes = [
        # A figure with its caption right below (gap 40px).
        LayoutBox("figure", 200, 300, 1200, 1000),
        LayoutBox("caption", 220, 1040, 1180, 1110, text="Figure 1: the architecture"),
        # A table whose caption sits above it, per convention (gap 30px).
        LayoutBox("table", 200, 1500, 1200, 1900),
        LayoutBox("caption", 220, 1400, 1180, 1470, text="Table 1: main results"),
        # A stray caption 250px below the table and 280px above the bottom
        # figure: outside the threshold in both directions, so unmatched.
        LayoutBox("caption", 220, 2150, 1180, 2220, text="Figure 9: from another page"),
        # A captionless figure at the bottom.
        LayoutBox("figure", 200, 2500, 1200, 2720),
    ]

    units = pair_components({0: boxes}, {0: PAGE_HEIGHT})
    for unit in units:
        attached = f"'{unit.caption}'" if unit.caption else "(no caption within reach)"
        print(f"{unit.id:<14} {unit.cls:<6} rect={unit.visual_rect} -> {attached}")

    used = {u.caption_rect for u in units if u.caption_rect}
    unmatched = [b.text for b in boxes
                 if b.cls == "caption" and (b.x0, b.y0, b.x1, b.y1) not in used]
    print(f"\nunmatched captions: {unmatched}")


if __name__ == "__main__":
    main()
