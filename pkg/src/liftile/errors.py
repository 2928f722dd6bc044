"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class LiftileError(Exception):
    """Base class; ``entity`` names the offending object when known."""

    def __init__(self, message: str = "", entity=None, residual: float | None = None):
        super().__init__(message)
        self.entity = entity
        self.residual = residual


class DegenerateInput(LiftileError):
    pass


class Unbounded(LiftileError):
    pass


class Empty(LiftileError):
    pass


class NotFaceToFace(LiftileError):
    pass


class IncompleteStar(LiftileError):
    pass


class UnsupportedCodim(LiftileError):
    pass


class FaceNotFound(LiftileError):
    pass


class AnomalousRidge(LiftileError):
    pass


class Infeasible(LiftileError):
    pass


class NotAdjacent(LiftileError):
    pass


class InconsistentLift(LiftileError):
    """A cell was reached along two chains with different lifts.

    ``chain`` holds the closed cycle of cell indices that exposed the mismatch.
    """

    def __init__(self, message: str = "", cell=None, chain=None, residual=None):
        super().__init__(message, entity=cell, residual=residual)
        self.cell = cell
        self.chain = list(chain) if chain is not None else []


class OutsidePatch(LiftileError):
    pass


class InvalidWaypoint(LiftileError):
    pass


class NotCanonicalInput(LiftileError):
    pass


class NotInvariantScaling(LiftileError):
    pass


class RankDeficient(LiftileError):
    pass


class ResidualTooLarge(LiftileError):
    pass


class NotPositiveDefinite(LiftileError):
    pass


class UnsupportedDim(LiftileError):
    pass


class NotVoronoi(LiftileError):
    pass


class InvalidJob(LiftileError):
    pass
