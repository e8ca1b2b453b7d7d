"""caldesk: desk-scale numerics for calibration forms and fractal singular sets."""

from caldesk.exterior import (
    BlockMetric,
    DegenerateFrameError,
    DimensionMismatchError,
    FormK,
    Frame,
    Multivector,
    dual_form,
    evaluate,
    intersection_dimension,
    simple_from_frame,
    wedge,
)

__all__ = [
    "BlockMetric",
    "DegenerateFrameError",
    "DimensionMismatchError",
    "FormK",
    "Frame",
    "Multivector",
    "dual_form",
    "evaluate",
    "intersection_dimension",
    "simple_from_frame",
    "wedge",
]

__version__ = "0.1.0"
