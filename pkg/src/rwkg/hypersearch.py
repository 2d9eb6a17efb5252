"""Random search with a median stopping rule (maximisation)."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class TrialPruned(Exception):
    pass


class SearchFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class RealRange:
    low: float
    high: float
    log: bool = False

    def __post_init__(self):
        if self.low > self.high or (self.log and self.low <= 0):
            raise ValueError(f"bad range {self}")

    def draw(self, rng: np.random.Generator) -> float:
        if self.log:
            return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))
        return float(rng.uniform(self.low, self.high))


@dataclass(frozen=True)
class IntRange:
    low: int
    high: int

    def __post_init__(self):
        if self.low > self.high:
            raise ValueError(f"bad range {self}")

    def draw(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.low, self.high + 1))


@dataclass(frozen=True)
class Categorical:
    choices: tuple

    def __post_init__(self):
        if not self.choices:
            raise ValueError("empty categorical")

    def draw(self, rng: np.random.Generator):
        return self.choices[int(rng.integers(len(self.choices)))]


SearchSpace = Mapping[str, "RealRange | IntRange | Categorical"]


def sample(space: SearchSpace, rng: np.random.Generator) -> dict[str, Any]:
    """Independent draws, in sorted key order so results do not depend on
    how the space was declared."""
    return {name: space[name].draw(rng) for name in sorted(space)}


@dataclass
class TrialRecord:
    trial: int
    params: dict[str, Any]
    intermediate: dict[int, float] = field(default_factory=dict)
    value: float | None = None
    status: str = "running"  # running | complete | pruned | failed


def should_prune(history: Sequence[TrialRecord], trial: TrialRecord, step: int,
                 warmup_trials: int = 5, grace_steps: int = 2) -> bool:
    """Median rule against completed trials' values at the same step."""
    if step < grace_steps:
        return False
    others = [t.intermediate[step] for t in history
              if t is not trial and t.status == "complete" and step in t.intermediate]
    if len(others) < warmup_trials:
        return False
    return trial.intermediate[step] < float(np.median(others))


class Trial:
    """Handle passed to the objective so it can report intermediate values."""

    def __init__(self, record: TrialRecord, history: list[TrialRecord],
                 warmup_trials: int, grace_steps: int):
        self.record = record
        self._history = history
        self._warmup = warmup_trials
        self._grace = grace_steps

    @property
    def params(self) -> dict[str, Any]:
        return self.record.params

    def report(self, step: int, value: float) -> None:
        """Record ``value`` and raise :class:`TrialPruned` if the run should stop."""
        self.record.intermediate[step] = float(value)
        if should_prune(self._history, self.record, step, self._warmup, self._grace):
            raise TrialPruned(f"trial {self.record.trial} pruned at step {step}")


def search(objective: Callable[[Trial], float], space: SearchSpace, budget: int, seed: int = 0,
           warmup_trials: int = 5, grace_steps: int = 2,
           fixed: Mapping[str, Any] | None = None, log_path=None,
           log_header: Mapping[str, Any] | None = None,
           enqueue: Sequence[Mapping[str, Any]] = ()) -> tuple[dict[str, Any], list[TrialRecord]]:
    """Serial random search; ``objective`` returns the final value to maximise.

    The first trials take their values from ``enqueue`` (keys it omits are
    still sampled), and they count against ``budget``. With ``log_path`` each
    finished trial is appended to a CSV trial log.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    history: list[TrialRecord] = []
    if log_path is not None:
        write_trial_log([], log_path, log_header)
    for i in range(budget):
        params = {**sample(space, rng), **(enqueue[i] if i < len(enqueue) else {}), **(fixed or {})}
        rec = TrialRecord(i, params)
        history.append(rec)
        try:
            rec.value = float(objective(Trial(rec, history, warmup_trials, grace_steps)))
            rec.status = "complete" if math.isfinite(rec.value) else "failed"
        except TrialPruned:
            rec.status = "pruned"
        except (ArithmeticError, ValueError, RuntimeError) as exc:
            logger.warning("trial %d failed: %s", i, exc)
            rec.status = "failed"
        logger.info("trial %d %s value=%s", i, rec.status, rec.value)
        if log_path is not None:
            with open(log_path, "a", encoding="utf-8", newline="\n") as fh:
                fh.write(_log_row(rec))
    done = [t for t in history if t.status == "complete"]
    if not done:
        raise SearchFailed("no trial completed")
    best = max(done, key=lambda t: (t.value, -t.trial))
    return dict(best.params), history


def format_params(params: Mapping[str, Any]) -> str:
    return ";".join(f"{k}={_fmt(v)}" for k, v in sorted(params.items()))


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_trial_log(history: Sequence[TrialRecord], path, header: Mapping[str, Any] | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k, v in sorted((header or {}).items()):
            fh.write(f"# {k}={v}\n")
        fh.write("trial,status,params,value\n")
        for t in history:
            fh.write(_log_row(t))


def _log_row(t: TrialRecord) -> str:
    value = "" if t.value is None else repr(t.value)
    return f"{t.trial},{t.status},\"{format_params(t.params)}\",{value}\n"


def write_best_params(params: Mapping[str, Any], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k, v in sorted(params.items()):
            fh.write(f"{k}={_fmt(v)}\n")
