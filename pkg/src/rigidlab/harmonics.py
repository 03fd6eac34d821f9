"""Real solid harmonics as explicit polynomials in (x, y, z).

Normalised so that their restrictions to the unit sphere are orthonormal in
L^2(S^2).  Polynomials are dicts mapping exponent triples to coefficients.
"""
from __future__ import annotations

from functools import lru_cache
from math import comb, cos, factorial, pi, sin, sqrt

Poly = dict


def _mul(p: Poly, q: Poly) -> Poly:
    out: Poly = {}
    for ea, ca in p.items():
        for eb, cb in q.items():
            e = (ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2])
            out[e] = out.get(e, 0.0) + ca * cb
    return out


def _add(p: Poly, q: Poly, s: float = 1.0) -> Poly:
    out = dict(p)
    for e, c in q.items():
        out[e] = out.get(e, 0.0) + s * c
    return out


def _pow(p: Poly, k: int) -> Poly:
    out: Poly = {(0, 0, 0): 1.0}
    for _ in range(k):
        out = _mul(out, p)
    return out


@lru_cache(maxsize=None)
def real_solid_harmonic(l: int, m: int) -> tuple:
    """Return the orthonormal real solid harmonic of degree ``l`` and order ``m``.

    The result is a tuple of ((a, b, c), coeff) pairs for x^a y^b z^c.
    """
    if l < 0 or abs(m) > l:
        raise ValueError(f"invalid harmonic indices l={l}, m={m}")
    am = abs(m)
    r2: Poly = {(2, 0, 0): 1.0, (0, 2, 0): 1.0, (0, 0, 2): 1.0}
    pi_lm: Poly = {}
    for k in range((l - am) // 2 + 1):
        c = ((-1) ** k * 2.0 ** (-l) * comb(l, k) * comb(2 * l - 2 * k, l)
             * factorial(l - 2 * k) / factorial(l - 2 * k - am))
        term = _mul(_pow(r2, k), {(0, 0, l - 2 * k - am): c})
        pi_lm = _add(pi_lm, term)
    pi_lm = {e: c * sqrt(factorial(l - am) / factorial(l + am)) for e, c in pi_lm.items()}
    ab: Poly = {}
    for p in range(am + 1):
        ang = (am - p) * pi / 2
        w = cos(ang) if m >= 0 else sin(ang)
        w = round(w)  # exact 0, +-1
        if w:
            ab = _add(ab, {(p, am - p, 0): comb(am, p) * w})
    poly = _mul(pi_lm, ab)
    norm = sqrt((2 * l + 1) / (4 * pi))
    if m != 0:
        norm *= sqrt(2.0)
    return tuple(sorted((e, c * norm) for e, c in poly.items() if c != 0.0))


def eval_poly(terms, x, y, z):
    """Evaluate a polynomial on numbers, arrays or ``Dual2`` objects."""
    maxdeg = max((max(e) for e, _ in terms), default=0)
    px, py, pz = [1.0], [1.0], [1.0]
    for _ in range(maxdeg):
        px.append(px[-1] * x)
        py.append(py[-1] * y)
        pz.append(pz[-1] * z)
    total = 0.0
    for (a, b, c), coeff in terms:
        total = total + (px[a] * py[b]) * pz[c] * coeff
    return total
