"""Lifting filters for the Dirichlet piecewise-linear wavelet basis.

The table is generated with exact rational arithmetic and stored as text in
``data/filters_v1.txt``.  Regenerate it with::

    python -m rothe_wavelet.filters > src/rothe_wavelet/data/filters_v1.txt

Table schema (one record per non-comment line, whitespace separated)::

    version <int>
    <name> <value> [<value> ...]

Values are exact rationals written as ``p/q`` or integers.  Records:

``predict``
    weights of the two coarse neighbours used to predict an odd fine node.
``update_interior``
    weights of the wavelet ``k`` on the coarse hats ``k`` and ``k+1``.
``update_left`` / ``update_right``
    boundary wavelet weights on the two nearest coarse hats (nearest first).
``fine_interior`` / ``fine_left``
    the unnormalized wavelets expanded in fine hats (5 taps each).
``mass_hat``, ``mass_interior``, ``mass_boundary``
    squared L2 norms divided by the fine mesh width ``h``.
``stiff_interior``, ``stiff_boundary``
    squared H1-seminorms multiplied by ``h``.
``dual_moments``
    vanishing moments of the dual wavelets (informational; never asserted).
"""
from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from importlib import resources
import sys

TABLE_VERSION = 1

PREDICT = (Fraction(1, 2), Fraction(1, 2))
UPDATE_INTERIOR = (Fraction(1, 4), Fraction(1, 4))


def _boundary_update():
    # two moment conditions on psi = phi_fine(1) - a*phi_c(1) - b*phi_c(2)
    # integral:  1/2 = a + b ;  first moment:  1/4 = a + 2 b
    b = Fraction(1, 4) - Fraction(1, 2)
    a = Fraction(1, 2) - b
    return (a, b)


def _fine_taps(update):
    """Expand ``phi_f(odd) - sum u_i phi_c(i)`` in fine hats."""
    coarse_hat = (Fraction(1, 2), Fraction(1), Fraction(1, 2))
    if update is UPDATE_INTERIOR:
        taps = [Fraction(0)] * 5          # fine nodes 2k-1 .. 2k+3
        taps[2] += 1
        for offset, weight in ((0, update[0]), (2, update[1])):
            for i, c in enumerate(coarse_hat):
                taps[offset + i] -= weight * c
        return taps
    taps = [Fraction(0)] * 5              # fine nodes 1 .. 5
    taps[0] += 1
    for centre, weight in ((2, update[0]), (4, update[1])):
        for i, c in enumerate(coarse_hat):
            taps[centre - 2 + i] -= weight * c
    return taps


def _mass(taps):
    diag = sum(t * t for t in taps) * Fraction(2, 3)
    off = sum(taps[i] * taps[i + 1] for i in range(len(taps) - 1)) * Fraction(1, 6)
    return diag + 2 * off


def _stiff(taps):
    padded = [Fraction(0)] + list(taps) + [Fraction(0)]
    return sum((padded[i + 1] - padded[i]) ** 2 for i in range(len(padded) - 1))


def generate_table() -> str:
    boundary = _boundary_update()
    interior_taps = _fine_taps(UPDATE_INTERIOR)
    left_taps = _fine_taps(boundary)
    rows = [
        ("predict", PREDICT),
        ("update_interior", UPDATE_INTERIOR),
        ("update_left", boundary),
        ("update_right", boundary),
        ("fine_interior", interior_taps),
        ("fine_left", left_taps),
        ("mass_hat", (Fraction(2, 3),)),
        ("mass_interior", (_mass(interior_taps),)),
        ("mass_boundary", (_mass(left_taps),)),
        ("stiff_interior", (_stiff(interior_taps),)),
        ("stiff_boundary", (_stiff(left_taps),)),
        ("dual_moments", (Fraction(2),)),
    ]
    lines = ["# Dirichlet piecewise-linear lifted wavelets, exact rationals",
             f"version {TABLE_VERSION}"]
    for name, values in rows:
        lines.append(name + " " + " ".join(str(v) for v in values))
    return "\n".join(lines) + "\n"


def parse_table(text: str) -> dict[str, tuple[Fraction, ...]]:
    table: dict[str, tuple[Fraction, ...]] = {}
    version = None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, *values = line.split()
        if name == "version":
            version = int(values[0])
            continue
        if not values:
            raise ValueError(f"filter record {name!r} has no values")
        table[name] = tuple(Fraction(v) for v in values)
    if version != TABLE_VERSION:
        raise ValueError(f"unsupported filter table version {version}")
    return table


@lru_cache(maxsize=None)
def load_table() -> dict[str, tuple[Fraction, ...]]:
    text = resources.files("rothe_wavelet").joinpath(
        f"data/filters_v{TABLE_VERSION}.txt").read_text()
    return parse_table(text)


if __name__ == "__main__":
    sys.stdout.write(generate_table())
