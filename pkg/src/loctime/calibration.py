"""Fitted constants for the potential/heat-kernel bound relations.

The bounds only assert that *some* constant exists.  Each constant here is the
largest observed ratio at one calibration point, times a safety factor, and is
then frozen in a key-value text file and asserted at other parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path as FsPath

import numpy as np
from scipy import integrate

from .kernels import diff_h, diff_hh, heat_kernel_time_integral, sup_heat_bounds, u_alpha

__all__ = [
    "BOUNDS",
    "CALIBRATION_POINT",
    "SAFETY",
    "bound_ratios",
    "default_calibration_path",
    "fit_constants",
    "load_calibration",
    "write_calibration",
]

SAFETY = 1.5
CALIBRATION_POINT = {"alpha": 0.5, "h": 0.1, "T": 1.0, "delta": 0.25}


@dataclass(frozen=True)
class Bound:
    key: str
    description: str


BOUNDS = (
    Bound("potential.first_difference", "|D^h u^a(x)| <= C h u^a(x), |x| >= h"),
    Bound("potential.second_difference", "|D^h D^-h u^a(x)| <= C h^2 u^a(x), |x| >= h"),
    Bound("heat_integral.first_difference", "|int_0^T D^h p_t(x) dt| <= C_T h exp(-|x|)"),
    Bound("heat_integral.second_difference", "|int_0^T D^h D^-h p_t(x) dt| <= C_T h^2 exp(-x^2/32T)/|x|, |x| >= 2h"),
    Bound("heat_integral.second_difference_l1", "int |int_0^T D^h D^-h p_t(x) dt| dx <= C_T h^2 |log h|"),
    Bound("heat_sup.value", "sup_{delta<=t<=T} p_t(x) <= C exp(-x^2/2T)"),
    Bound("heat_sup.first_difference", "sup_{delta<=t<=T} |D^h p_t(x)| <= C h exp(-x^2/2T), |x| <= 3"),
    Bound("heat_sup.second_difference", "sup_{delta<=t<=T} |D^h D^-h p_t(x)| <= C h^2 exp(-x^2/2T), |x| <= 3"),
)
KEYS = tuple(b.key for b in BOUNDS)

# The Gaussian-envelope bounds on suprema over t carry an x^2 factor for large
# |x|; they are only fitted and asserted on this bounded window.
SUP_WINDOW = 3.0


def _x_samples(lo: float, hi: float, n: int = 121) -> np.ndarray:
    return np.linspace(lo, hi, n)


def bound_ratios(key: str, alpha: float, h: float, T: float, delta: float) -> np.ndarray:
    """Observed ratio of each side of the bound on a sample of ``x``."""
    if key == "potential.first_difference":
        x = np.concatenate([-_x_samples(h, 5.0), _x_samples(h, 5.0)])
        u = lambda y: u_alpha(y, alpha)
        return np.abs(diff_h(u, x, h)) / (h * u(x))
    if key == "potential.second_difference":
        x = np.concatenate([-_x_samples(h, 5.0), _x_samples(h, 5.0)])
        u = lambda y: u_alpha(y, alpha)
        return np.abs(diff_hh(u, x, h)) / (h * h * u(x))
    if key == "heat_integral.first_difference":
        x = _x_samples(-5.0, 5.0, 61)
        v = np.array([heat_kernel_time_integral(xi, T, "diff_h", h) for xi in x])
        return np.abs(v) / (h * np.exp(-np.abs(x)))
    if key == "heat_integral.second_difference":
        x = np.concatenate([-_x_samples(2 * h, 5.0, 41), _x_samples(2 * h, 5.0, 41)])
        w = np.array([heat_kernel_time_integral(xi, T, "diff_hh", h) for xi in x])
        return np.abs(w) * np.abs(x) / (h * h * np.exp(-x * x / (32.0 * T)))
    if key == "heat_integral.second_difference_l1":
        f = lambda xi: abs(heat_kernel_time_integral(xi, T, "diff_hh", h))
        pts = [h / 2, h, 2 * h]
        v = 2.0 * (
            integrate.quad(f, 0.0, 2 * h, points=pts[:2], limit=200)[0]
            + integrate.quad(f, 2 * h, 12.0 * math.sqrt(T), limit=200)[0]
        )
        return np.array([v / (h * h * abs(math.log(h)))])
    x = _x_samples(-SUP_WINDOW, SUP_WINDOW)
    su, sv, sw = sup_heat_bounds(delta, T, h, x)
    env = np.exp(-x * x / (2.0 * T))
    if key == "heat_sup.value":
        return su / env
    if key == "heat_sup.first_difference":
        return sv / (h * env)
    if key == "heat_sup.second_difference":
        return sw / (h * h * env)
    raise KeyError(key)


def fit_constants(safety: float = SAFETY, point: dict | None = None) -> dict[str, float]:
    p = dict(CALIBRATION_POINT, **(point or {}))
    return {
        key: safety * float(np.max(bound_ratios(key, p["alpha"], p["h"], p["T"], p["delta"]))) for key in KEYS
    }


def default_calibration_path() -> FsPath:
    return FsPath(str(resources.files("loctime") / "data" / "calibration.txt"))


def write_calibration(path, constants: dict[str, float], safety: float = SAFETY) -> FsPath:
    path = FsPath(path)
    p = CALIBRATION_POINT
    lines = [
        "# Frozen constants for the bound relations below.",
        f"# Fitted at alpha={p['alpha']}, h={p['h']}, T={p['T']}, delta={p['delta']};",
        f"# each value is the largest observed ratio times a safety factor of {safety}.",
        "",
        f"safety_factor = {safety!r}",
    ]
    for key, val in p.items():
        lines.append(f"calibration.{key} = {val!r}")
    for b in BOUNDS:
        lines += ["", f"# {b.description}", f"{b.key} = {constants[b.key]!r}"]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path


def load_calibration(path=None) -> dict[str, float]:
    path = FsPath(path) if path is not None else default_calibration_path()
    out: dict[str, float] = {}
    for n, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = float(v)
    missing = [k for k in KEYS if k not in out]
    if missing:
        raise ValueError(f"{path}: missing constants {missing}")
    return out
