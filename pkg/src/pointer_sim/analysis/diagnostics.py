from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .._parallel import pmap
from ..exact import EvolutionConfig, StateVector, evolve_exact
from ..model import ModelParams, build_operators
from .density import decoherence_factor, purity


@dataclass
class DiagnosticsSeries:
    times: list[float] = field(default_factory=list)
    h0_expect: list[float] = field(default_factory=list)
    hI_expect: list[float] = field(default_factory=list)
    h_total_expect: list[float] = field(default_factory=list)
    decoherence_factor: list[complex] = field(default_factory=list)
    purity: list[float] = field(default_factory=list)
    norm: list[float] = field(default_factory=list)

    def h0_drift(self) -> float:
        h = np.asarray(self.h0_expect)
        return float(np.max(np.abs(h - h[0])))

    def energy_drift(self) -> float:
        h = np.asarray(self.h_total_expect)
        return float(np.max(np.abs(h - h[0])))

    def first_time_below(self, level: float) -> float | None:
        for t, r in zip(self.times, self.decoherence_factor):
            if abs(r) < level:
                return t
        return None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "h0", "hI", "h_total", "r_re", "r_im", "r_abs", "purity", "norm"])
        for row in zip(self.times, self.h0_expect, self.hI_expect, self.h_total_expect,
                       self.decoherence_factor, self.purity, self.norm):
            t, h0, hI, ht, r, pur, n = row
            w.writerow([repr(t), repr(h0), repr(hI), repr(ht), repr(r.real), repr(r.imag),
                        repr(abs(r)), repr(pur), repr(n)])
        return buf.getvalue()


def run_diagnostics(initial: StateVector, params: ModelParams, times,
                    cfg: EvolutionConfig | None = None, threads: int = 1) -> DiagnosticsSeries:
    """Evolve ``initial`` exactly to every time (always from t = 0) and record diagnostics."""
    times = [float(t) for t in times]
    if not times or times[0] != 0.0 or any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("times must start at 0 and increase strictly")
    ops = build_operators(params)
    h = ops["h_total"]
    if cfg is None or cfg.method == "eigendecomposition":
        h.spectrum  # factorize once before fanning out
    def one(t):
        psi = evolve_exact(initial, h, t, cfg)
        a = psi.amplitudes
        return (ops["h0"].expectation(a), ops["hI"].expectation(a), h.expectation(a),
                decoherence_factor(psi), purity(psi), psi.norm)

    series = DiagnosticsSeries(times=times)
    for h0, hI, ht, r, pur, n in pmap(one, times, threads):
        series.h0_expect.append(h0)
        series.hI_expect.append(hI)
        series.h_total_expect.append(ht)
        series.decoherence_factor.append(r)
        series.purity.append(pur)
        series.norm.append(n)
    return series


def time_grid(t_max: float, n: int) -> list[float]:
    if n < 2 or not t_max > 0 or not math.isfinite(t_max):
        raise ValueError("need n >= 2 and a positive finite t_max")
    return np.linspace(0.0, t_max, n).tolist()
