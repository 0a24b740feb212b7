"""Model-mode plumbing, exercised with a synthetic TorchScript module.

No pretrained weights exist in this environment; this verifies the adapter
contract (tensor in, (N, 6) out), taxonomy mapping, and clamping. Real
detection quality is covered by the weights-gated smoke test.
"""

import pytest
from PIL import Image

torch = pytest.importorskip("torch")

from layout_service.detector import TorchScriptDetector  # noqa: E402


class FixedBoxModel(torch.nn.Module):
    """Emits two detections: a figure and a row that maps to 'other'."""

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        return torch.tensor(
            [
                [10.0, 20.0, 200.0, 180.0, 0.9, 0.0],   # class 0 -> "figure"
                [0.0, 0.0, 50.0, 40.0, 0.7, 1.0],       # class 1 -> "title" -> other
                [-30.0, -5.0, 9000.0, 9000.0, 1.4, 2.0],  # class 2 -> clamped table
                [5.0, 5.0, 6.0, 6.0, 0.5, 9.0],         # unknown index -> dropped
            ]
        )


@pytest.fixture
def scripted_model(tmp_path):
    path = tmp_path / "fixed.pt"
    torch.jit.script(FixedBoxModel()).save(str(path))
    return path


def test_adapter_maps_and_clamps(scripted_model):
    detector = TorchScriptDetector(
        scripted_model, class_names=["figure", "title", "table"]
    )
    image = Image.new("RGB", (600, 400), "white")
    boxes = detector.detect(image, dpi=250)
    got = [(b.cls, b.x0, b.y0, b.x1, b.y1) for b in boxes]
    assert got == [
        ("figure", 10, 20, 200, 180),
        ("other", 0, 0, 50, 40),
        ("table", 0, 0, 600, 400),  # wild coordinates clamped to the image
    ]
    assert [b.score for b in boxes] == pytest.approx([0.9, 0.7, 1.0], abs=1e-6)


def test_adapter_honors_custom_class_map(scripted_model, tmp_path):
    detector = TorchScriptDetector(
        scripted_model,
        class_names=["figure", "title", "table"],
        class_map={"title": "caption"},
    )
    boxes = detector.detect(Image.new("RGB", (600, 400), "white"), dpi=250)
    assert boxes[1].cls == "caption"
