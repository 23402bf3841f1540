"""Command line runs, comparisons, Monte Carlo validation and artifacts."""

from .runner import RunReport, compare, run
from .validation import ValidationReport, boundary_pose, validate_pose

__all__ = ["RunReport", "ValidationReport", "boundary_pose", "compare", "run", "validate_pose"]
