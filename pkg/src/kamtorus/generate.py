"""Seeded random trigonometric perturbations for tests and the CLI."""

from __future__ import annotations

import numpy as np

from . import field as fld
from .errors import ParameterError
from .field import FourierVectorField


def random_field(n: int, s: float, eps: float, modes: int, seed: int,
                 k_max: int = 3) -> FourierVectorField:
    """Random real trig field with `modes` distinct nonzero modes in
    |k|_inf <= k_max plus a nonzero constant part, scaled so that
    norm(field, s) equals eps.

    Coefficients decay like exp(-2*pi*s*|k|_1) so every mode contributes
    comparably to the majorant norm at width s.
    """
    if modes < 1:
        raise ParameterError(f"modes must be >= 1, got {modes}")
    if eps <= 0:
        raise ParameterError(f"eps must be > 0, got {eps}")
    rng = np.random.default_rng(seed)
    coeffs = {}
    chosen = set()
    while len(chosen) < modes:
        k = tuple(int(v) for v in rng.integers(-k_max, k_max + 1, size=n))
        if all(v == 0 for v in k) or k in chosen:
            continue
        chosen.add(k)
        chosen.add(tuple(-v for v in k))
        decay = np.exp(-fld.TWO_PI * s * sum(abs(v) for v in k))
        c = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * decay
        coeffs[k] = c
    coeffs[(0,) * n] = rng.standard_normal(n).astype(np.complex128)
    out = fld.make_field(n, s, coeffs)
    # multiplicative corrections pin the norm to eps up to the last ulp
    best, best_err = None, np.inf
    for _ in range(8):
        current = fld.norm(out, s)
        err = abs(current - eps)
        if err < best_err:
            best, best_err = out, err
        if current == eps:
            break
        out = fld.scale(out, eps / current)
    return best
