"""Failure modes surfaced by the samplers and chain runners."""


class DivergenceError(RuntimeError):
    """A simulated state left the admissible region (|x| > threshold)."""


class MeetingTimeoutError(RuntimeError):
    """A coupled chain failed to meet within the iteration cap."""


class CouplingCapError(RuntimeError):
    """A rejection loop inside a coupling sampler exceeded its cap."""
