"""Size scaling of the interaction matrix elements under random self-evolution phases.

For the all-up configuration the diagonal element is
``sum_l v_up cos^2(w_l t) + v_down sin^2(w_l t)`` and the single-flip row carries
``i sin(w_l t) cos(w_l t) (v_down - v_up)`` per site. Only closed forms are
used, so M in the thousands costs nothing.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .._parallel import pmap

CouplingLaw = Callable[[np.random.Generator, int, int], tuple[np.ndarray, np.ndarray]]


def _uniform_law(rng, samples, M):
    return rng.uniform(0.0, 1.0, (samples, M)), rng.uniform(0.0, 1.0, (samples, M))


def equal_law(g: float = 1.0) -> CouplingLaw:
    def law(rng, samples, M):
        v = np.full((samples, M), g)
        return v, v.copy()
    return law


COUPLING_LAWS: dict[str, CouplingLaw] = {"uniform": _uniform_law, "equal": equal_law()}


@dataclass
class ScalingReport:
    M_values: list[int]
    diag_mean: list[float]
    diag_std: list[float]
    offdiag_rms: list[float]
    fitted_slopes: dict
    t: float
    samples: int
    seed: int

    @property
    def diag_slope(self) -> float:
        return self.fitted_slopes["diag_mean"]["slope"]

    @property
    def offdiag_slope(self) -> float:
        return self.fitted_slopes["offdiag_rms"]["slope"]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def matrix_elements(v_up: np.ndarray, v_down: np.ndarray, omega: np.ndarray, t: float):
    """Diagonal element and off-diagonal row norm, reduced over the last axis."""
    q = np.cos(omega * t) ** 2
    diag = np.sum(v_up * q + v_down * (1 - q), axis=-1)
    off = (v_down - v_up) * np.sin(omega * t) * np.cos(omega * t)
    return diag, np.sqrt(np.sum(off ** 2, axis=-1))


def _loglog_fit(M: np.ndarray, y: np.ndarray) -> dict:
    if np.any(y <= 0):
        return {"slope": math.nan, "intercept": math.nan, "stderr": math.nan,
                "half_width_95": math.nan}
    fit = stats.linregress(np.log(M), np.log(y))
    tq = stats.t.ppf(0.975, len(M) - 2) if len(M) > 2 else math.inf
    return {"slope": float(fit.slope), "intercept": float(fit.intercept),
            "stderr": float(fit.stderr), "half_width_95": float(tq * fit.stderr)}


def fluctuation_scaling(M_list: Sequence[int], t: float = 1.0,
                        coupling_law: str | CouplingLaw = "uniform", samples: int = 500,
                        seed: int = 0, threads: int = 1,
                        omega_max: float | None = None) -> ScalingReport:
    """Per-M statistics of the diagonal element and off-diagonal row norm.

    Frequencies are i.i.d. uniform on ``[0, omega_max]`` with default
    ``pi / t`` so the phases ``w t`` cover ``[0, pi]``. Each M draws from its
    own substream of ``seed``, so results do not depend on ``threads``.
    """
    M_arr = [int(m) for m in M_list]
    if any(m < 8 for m in M_arr) or any(b <= a for a, b in zip(M_arr, M_arr[1:])):
        raise ValueError("M values must be >= 8 and strictly increasing")
    if samples < 100:
        raise ValueError("need at least 100 samples per M")
    law = COUPLING_LAWS[coupling_law] if isinstance(coupling_law, str) else coupling_law
    if omega_max is None:
        omega_max = math.pi / t if t > 0 else math.pi

    def one(M):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(M,)))
        omega = rng.uniform(0.0, omega_max, (samples, M))
        if np.any(np.ptp(omega, axis=1) == 0):
            raise ValueError(f"degenerate frequency draw for M={M}; choose another seed")
        v_up, v_down = law(rng, samples, M)
        diag, off = matrix_elements(v_up, v_down, omega, t)
        return (float(np.mean(diag)), float(np.std(diag, ddof=1)),
                float(np.sqrt(np.mean(off ** 2))))

    rows = pmap(one, M_arr, threads)
    dm, ds, orms = (list(col) for col in zip(*rows))
    Ms = np.array(M_arr, dtype=float)
    slopes = {
        "diag_mean": _loglog_fit(Ms, np.array(dm)),
        "diag_std": _loglog_fit(Ms, np.array(ds)),
        "offdiag_rms": _loglog_fit(Ms, np.array(orms)),
    }
    return ScalingReport(M_arr, dm, ds, orms, slopes, float(t), samples, int(seed))
