"""Noise-variance schedules o(eta, k, j) for the noisy weight updates.

A schedule maps (step size, epoch index, iteration index) to the variance
knob of the injected Gaussian noise. Schedules must stay strictly positive
over the trained epochs: zero variance breaks both the update rule and the
privacy accounting, so evaluation raises on non-positive values.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = [
    "Constant",
    "LinearDecay",
    "LinearIncrease",
    "Piecewise",
    "ScheduleError",
    "eval_schedule",
    "parse_schedule",
    "format_schedule",
]


class ScheduleError(ValueError):
    """A schedule produced a non-positive variance or could not be parsed."""


@dataclass(frozen=True)
class Constant:
    value: float

    def raw(self, eta: float, k: int, j: int) -> float:
        return self.value


@dataclass(frozen=True)
class LinearDecay:
    """max(floor, start - slope * k); the floor keeps late epochs positive."""

    start: float
    slope: float
    floor: float = 1e-6

    def raw(self, eta: float, k: int, j: int) -> float:
        return max(self.floor, self.start - self.slope * k)


@dataclass(frozen=True)
class LinearIncrease:
    start: float
    slope: float

    def raw(self, eta: float, k: int, j: int) -> float:
        return self.start + self.slope * k


@dataclass(frozen=True)
class Piecewise:
    """Epoch-indexed pieces: ((start_epoch, schedule), ...), sorted ascending.

    The piece whose start_epoch is the largest one <= k evaluates at the
    global epoch index k, so adjoining linear pieces stay continuous.
    """

    pieces: tuple

    def __post_init__(self):
        if not self.pieces:
            raise ScheduleError("piecewise schedule needs at least one piece")
        starts = [p[0] for p in self.pieces]
        if starts != sorted(starts) or starts[0] != 0:
            raise ScheduleError("piecewise pieces must start at epoch 0 and ascend")

    def raw(self, eta: float, k: int, j: int) -> float:
        active = self.pieces[0][1]
        for start, sched in self.pieces:
            if k >= start:
                active = sched
            else:
                break
        return active.raw(eta, k, j)


def eval_schedule(schedule, eta: float, k: int, j: int) -> float:
    """Evaluate a schedule, rejecting non-positive variances."""
    if k < 0 or j < 0:
        raise ValueError("epoch and iteration indices must be >= 0")
    value = schedule.raw(eta, k, j)
    if not value > 0:
        raise ScheduleError(
            f"schedule produced non-positive variance {value} at epoch {k}, iteration {j}"
        )
    return float(value)


def parse_schedule(text: str):
    """Parse the config-file syntax for schedules.

    Grammar (positional arguments, floats):
        constant:V
        decay:START,SLOPE[,FLOOR]
        increase:START,SLOPE
        piecewise:K0|SPEC;K1|SPEC;...     (Ki = start epoch of each piece)
    """
    text = text.strip()
    name, _, rest = text.partition(":")
    name = name.strip().lower()
    try:
        if name == "constant":
            return Constant(float(rest))
        if name == "decay":
            args = [float(x) for x in rest.split(",")]
            if len(args) == 2:
                return LinearDecay(args[0], args[1])
            if len(args) == 3:
                return LinearDecay(args[0], args[1], args[2])
            raise ScheduleError("decay takes start,slope[,floor]")
        if name == "increase":
            start, slope = (float(x) for x in rest.split(","))
            return LinearIncrease(start, slope)
        if name == "piecewise":
            pieces = []
            for chunk in rest.split(";"):
                epoch_text, _, spec = chunk.partition("|")
                pieces.append((int(epoch_text), parse_schedule(spec)))
            return Piecewise(tuple(pieces))
    except ScheduleError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScheduleError(f"cannot parse schedule {text!r}: {exc}") from exc
    raise ScheduleError(f"unknown schedule kind {name!r} in {text!r}")


def format_schedule(schedule) -> str:
    """Inverse of parse_schedule, used when echoing configs into manifests."""
    if isinstance(schedule, Constant):
        return f"constant:{schedule.value!r}"
    if isinstance(schedule, LinearDecay):
        return f"decay:{schedule.start!r},{schedule.slope!r},{schedule.floor!r}"
    if isinstance(schedule, LinearIncrease):
        return f"increase:{schedule.start!r},{schedule.slope!r}"
    if isinstance(schedule, Piecewise):
        inner = ";".join(f"{start}|{format_schedule(s)}" for start, s in schedule.pieces)
        return f"piecewise:{inner}"
    raise ScheduleError(f"unknown schedule object {schedule!r}")
