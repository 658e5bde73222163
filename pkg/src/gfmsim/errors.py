"""Exception types shared across the simulator."""


class GfmSimError(Exception):
    """Base class for all simulator errors."""


class NumericBlowupError(GfmSimError):
    """A state or input went non-finite; names the first offending quantity."""

    def __init__(self, quantity, t=None):
        self.quantity = quantity
        self.t = t
        where = f" at t={t:.6g} s" if t is not None else ""
        super().__init__(f"non-finite value in '{quantity}'{where}")


class SingularNetworkError(GfmSimError):
    """Phasor network has no unique solution (e.g. all branches open)."""


class OscillatorCollapseError(GfmSimError):
    """Oscillator amplitude fell below 5% of nominal."""

    def __init__(self, phase, amplitude, t=None):
        self.phase = phase
        self.amplitude = amplitude
        self.t = t
        where = f" at t={t:.6g} s" if t is not None else ""
        super().__init__(
            f"oscillator collapse on phase {phase}{where}: amplitude {amplitude:.3g} V"
        )


class UndefinedAngleError(GfmSimError):
    """Frame angle requested for a zero-length oscillator vector."""


class InfeasibleOperatingPointError(GfmSimError):
    """Requested (Q, V) loading has no consistent network solution."""


class ModelAssemblyError(GfmSimError):
    """Dimension mismatch while wiring the small-signal model."""


class ScenarioError(GfmSimError):
    """Scenario document failed to parse or validate.

    ``problems`` collects every issue found, not just the first.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
