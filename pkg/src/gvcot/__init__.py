"""Visual-thought image editing: data curation, rewards, evaluation and a flow-matching sandbox."""

from .core import (INSTRUCTION_CATEGORIES, BBox, BinaryMask, Diagnostic, EditSample, JudgeVerdict, RasterImage, Rng,
                   box_iou, normalize_box, round_half_away)

__version__ = "0.1.0"

__all__ = [
    "INSTRUCTION_CATEGORIES", "BBox", "BinaryMask", "Diagnostic", "EditSample", "JudgeVerdict", "RasterImage", "Rng",
    "box_iou", "normalize_box", "round_half_away", "__version__",
]
