"""Detection backends and the output contract.

Whatever a backend emits, the service publishes only boxes that satisfy the
wire contract: one of four classes, integer pixel rects inside the image,
scores clamped to [0, 1]. The stub backend replays a fixture file
bit-deterministically; the model backend wraps a TorchScript detector and
maps its taxonomy onto the four contract classes via a configurable table.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from PIL import Image

logger = logging.getLogger(__name__)

CONTRACT_CLASSES = ("figure", "table", "caption", "other")

# Detectors ship richer taxonomies; map the common labels onto the contract.
# Override with a JSON file via LAYOUT_CLASS_MAP.
DEFAULT_CLASS_MAP = {
    "figure": "figure",
    "image": "figure",
    "picture": "figure",
    "chart": "figure",
    "table": "table",
    "figure-caption": "caption",
    "figure_caption": "caption",
    "table-caption": "caption",
    "table_caption": "caption",
    "caption": "caption",
    "title": "other",
    "text": "other",
    "plain-text": "other",
    "plain_text": "other",
    "formula": "other",
    "formula-caption": "caption",
    "footnote": "other",
}


@dataclass(frozen=True)
class Box:
    cls: str
    x0: int
    y0: int
    x1: int
    y1: int
    score: float

    def to_dict(self) -> dict:
        return {
            "cls": self.cls,
            "x0": self.x0,
            "y0": self.y0,
            "x1": self.x1,
            "y1": self.y1,
            "score": self.score,
        }


def sanitize_box(entry: dict, width: int, height: int) -> Box | None:
    """Clamp one raw detection to the contract; None when hopeless."""
    cls = entry.get("cls")
    if cls not in CONTRACT_CLASSES:
        return None
    try:
        x0 = max(0, min(int(round(float(entry["x0"]))), width))
        x1 = max(0, min(int(round(float(entry["x1"]))), width))
        y0 = max(0, min(int(round(float(entry["y0"]))), height))
        y1 = max(0, min(int(round(float(entry["y1"]))), height))
        score = min(max(float(entry.get("score", 1.0)), 0.0), 1.0)
    except (KeyError, TypeError, ValueError):
        return None
    if x1 <= x0 or y1 <= y0:
        return None
    return Box(cls=cls, x0=x0, y0=y0, x1=x1, y1=y1, score=score)


class StubDetector:
    """Replays a fixed box list from a fixture file; bit-deterministic."""

    mode = "stub"

    def __init__(self, fixture_path: str | Path):
        payload = json.loads(Path(fixture_path).read_text())
        if not isinstance(payload, dict) or not isinstance(payload.get("boxes"), list):
            raise ValueError("stub fixture must be an object with a 'boxes' list")
        self._raw_boxes = payload["boxes"]

    def detect(self, image: Image.Image, dpi: int) -> list[Box]:
        boxes = []
        for entry in self._raw_boxes:
            box = sanitize_box(entry, image.width, image.height)
            if box is not None:
                boxes.append(box)
        return boxes


class TorchScriptDetector:
    """Wraps a TorchScript detector.

    Adapter contract: the scripted module takes a float32 CHW tensor scaled
    to [0, 1] and returns an (N, 6) tensor of
    ``[x0, y0, x1, y1, score, class_index]`` in input-pixel coordinates.
    ``class_names[class_index]`` is looked up in the class map.
    """

    mode = "model"

    def __init__(self, model_path: str | Path, class_names: list[str],
                 class_map: dict[str, str] | None = None):
        import torch  # optional dependency, only needed in model mode

        self._torch = torch
        self._model = torch.jit.load(str(model_path), map_location="cpu")
        self._model.eval()
        self.class_names = list(class_names)
        self.class_map = dict(DEFAULT_CLASS_MAP)
        if class_map:
            self.class_map.update(class_map)

    def detect(self, image: Image.Image, dpi: int) -> list[Box]:
        torch = self._torch
        array = torch.frombuffer(
            bytearray(image.convert("RGB").tobytes()), dtype=torch.uint8
        ).reshape(image.height, image.width, 3)
        tensor = array.permute(2, 0, 1).float().div(255.0).unsqueeze(0)
        with torch.no_grad():
            output = self._model(tensor)
        if isinstance(output, (list, tuple)):
            output = output[0]
        boxes: list[Box] = []
        for row in output.reshape(-1, 6).tolist():
            x0, y0, x1, y1, score, class_index = row
            index = int(class_index)
            if not 0 <= index < len(self.class_names):
                continue
            label = self.class_names[index].lower()
            cls = self.class_map.get(label)
            if cls is None:
                logger.debug("dropping unmapped class %r", label)
                continue
            box = sanitize_box(
                {"cls": cls, "x0": x0, "y0": y0, "x1": x1, "y1": y1, "score": score},
                image.width,
                image.height,
            )
            if box is not None:
                boxes.append(box)
        return boxes
