"""IoU-family bounding-box regression losses and the descent benchmark.

Thin wrapper over the compiled ``boxloss._core`` extension. The main entry
points:

- ``evaluate(loss, anchor, target, ...)``: value and gradient of one loss on
  one box pair.
- ``run(config, loss, ...)``: the gradient-descent regression benchmark.
- ``gain``, ``outlier_degree``, ``monotonic_coeff``, ``momentum_from_schedule``,
  ``gain_curve``: focusing-mechanism arithmetic.
- ``grad_check(loss, ...)``: backward vs central finite differences.
"""

from ._core import (
    BBox,
    EmaTracker,
    SimConfig,
    __version__,
    enclosure,
    evaluate,
    gain,
    gain_curve,
    generate_cases,
    grad_check,
    iou_loss,
    momentum_from_schedule,
    monotonic_coeff,
    outlier_degree,
    run,
)

__all__ = [
    "BBox",
    "EmaTracker",
    "SimConfig",
    "__version__",
    "enclosure",
    "evaluate",
    "gain",
    "gain_curve",
    "generate_cases",
    "grad_check",
    "iou_loss",
    "momentum_from_schedule",
    "monotonic_coeff",
    "outlier_degree",
    "run",
]
