"""Trailer assignment and item allocation planning for warehouse-to-store replenishment."""

from .model import AllocationPlan, Instance, PlanMetrics, TrailerAssignment, Violation

__all__ = ["AllocationPlan", "Instance", "PlanMetrics", "TrailerAssignment", "Violation"]
__version__ = "0.1.0"
