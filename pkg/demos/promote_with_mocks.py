"""Walk a paper PDF through the whole pipeline with a scripted mock model.

Builds a two-section fixture paper (one figure with a caption), runs the
full promote flow (extract -> summarize -> detect/crop/pair -> draft ->
analyze -> enrich -> combine -> adapt -> package), and prints the resulting
bundle. No network, no keys: every model call is answered by the scripted
transport in tests/data/mock_promote.json.

Run from the repository root:

    python demos/promote_with_mocks.py
"""

import io
import tempfile
from pathlib import Path

from PIL import Image
from reportlab.lib.utils import ImageReader
from reportlab.pdfgen import canvas as rl_canvas

from autopr.gateway import GatewayConfig, LLMGateway, load_mock_script
from autopr.pipeline import PromoteOptions, promote

REPO_ROOT = Path(__file__).resolve().parents[1]


def build_fixture_paper() -> bytes:
    buf = io.BytesIO()
    c = rl_canvas.Canvas(buf, pagesize=(612, 792))
    c.setFont("Helvetica", 16)
    c.drawString(72, 740, "On the Acceleration of Gadgets")
    c.setFont("Helvetica", 10)
    c.drawString(72, 716, "Ada Lovelace (Analytical Engines Inc.)")
    c.setFont("Helvetica", 12)
    c.drawString(72, 680, "1 Introduction")
    c.setFont("Helvetica", 10)
    c.drawString(72, 655, "Gadgets are everywhere but slow.")
    c.drawString(72, 643, "We accelerate them with a cooling trick.")
    c.drawImage(ImageReader(Image.new("RGB", (60, 40), (200, 30, 30))),
                72, 420, width=220, height=160)
    c.drawString(72, 400, "Figure 1: throughput before and after the trick")
    c.setFont("Helvetica", 12)
    c.drawString(72, 360, "2 Results")
    c.setFont("Helvetica", 10)
    c.drawString(72, 335, "We observe a 2.1x speedup on the gadget suite.")
    c.save()
    return buf.getvalue()


def main() -> None:
    transport = load_mock_script(REPO_ROOT / "tests" / "data" / "mock_promote.json")
    gateway = LLMGateway(GatewayConfig.mock_all_roles(), transport)
    pdf = build_fixture_paper()

    with tempfile.TemporaryDirectory() as workdir:
        out_dir = Path(workdir) / "bundle"
        outcome = promote(
            pdf,
            PromoteOptions(platform="twitter", out_dir=out_dir, seed=11),
            gateway,
        )

        print("bundle files:")
        for path in sorted(out_dir.rglob("*")):
            if path.is_file():
                print(f"  {path.relative_to(out_dir)}  ({path.stat().st_size} bytes)")
        print(f"\nvisual units paired: {[u.id for u in outcome.units]}")
        print(f"validation violations: {outcome.validation.violations or 'none'}")
        print(f"model calls made: {len(transport.calls)}")
        print("\n--- post.md ---")
        print((out_dir / "post.md").read_text())


if __name__ == "__main__":
    main()
