"""Blume-Capel Hamiltonian on the periodic square lattice, in exact arithmetic.

Energies are pairs of integers ``(a, b)`` standing for ``a + b*h``.  The
exchange term is always an integer and the field term is an integer multiple
of ``h``, so every comparison that matters for the landscape is exact.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

SPINS = (-1, 0, 1)


class RegimeWarning(UserWarning):
    """The lattice is smaller than the size assumed by the asymptotic theory."""


@dataclass(frozen=True)
class EnergyDelta:
    """Exact energy ``a + b*h``."""

    a: int
    b: int

    def __add__(self, o):
        return EnergyDelta(self.a + o.a, self.b + o.b)

    def __sub__(self, o):
        return EnergyDelta(self.a - o.a, self.b - o.b)

    def __neg__(self):
        return EnergyDelta(-self.a, -self.b)

    def value(self, h) -> float:
        return self.a + self.b * float(h)

    def exact(self, h) -> Fraction:
        return self.a + self.b * exact_h(h)

    def __str__(self):
        if self.b == 0:
            return str(self.a)
        coef = {1: "h", -1: "-h"}.get(self.b, f"{self.b}h")
        if self.a == 0:
            return coef
        return f"{self.a}{coef}" if coef.startswith("-") else f"{self.a}+{coef}"

    @classmethod
    def parse(cls, text: str) -> "EnergyDelta":
        """Parse strings such as ``"12-2h"``, ``"-h"`` or ``"-4"``."""
        t = text.replace(" ", "")
        terms = re.findall(r"[+-]?\d*h?", t)
        terms = [x for x in terms if x]
        if not t or "".join(terms) != t:
            raise ValueError(f"cannot parse energy {text!r}")
        a = b = 0
        for term in terms:
            if term.endswith("h"):
                coef = term[:-1]
                b += int(coef + "1") if coef in ("", "+", "-") else int(coef)
            elif term in ("+", "-"):
                raise ValueError(f"cannot parse energy {text!r}")
            else:
                a += int(term)
        return cls(a, b)


def exact_h(h) -> Fraction:
    """The field as a rational, read from its decimal representation."""
    return h if isinstance(h, Fraction) else Fraction(str(h))


@dataclass(frozen=True)
class ModelParams:
    L: int
    h: float
    override_regime: bool = False

    def __post_init__(self):
        if self.L < 3:
            raise ValueError("lattice side must be at least 3")
        hf = exact_h(self.h)
        if not 0 < hf < 1:
            raise ValueError("field must satisfy 0 < h < 1")
        if (2 / hf).denominator == 1:
            raise ValueError(f"2/h = {2 / hf} is an integer; the critical length is ambiguous")
        if not self.regime_ok and self.override_regime:
            warnings.warn(f"|Lambda| = {self.n_sites} < 49/h^4 = {float(49 / hf ** 4):.1f}; "
                          "results are outside the asymptotic regime", RegimeWarning, stacklevel=3)

    @property
    def n_sites(self) -> int:
        return self.L * self.L

    @property
    def regime_ok(self) -> bool:
        return self.n_sites >= 49 / exact_h(self.h) ** 4

    @property
    def h_exact(self) -> Fraction:
        return exact_h(self.h)

    def compare(self, e1: EnergyDelta, e2: EnergyDelta) -> int:
        d = (e1 - e2).exact(self.h)
        return (d > 0) - (d < 0)


def constant_config(params: ModelParams, s: int) -> np.ndarray:
    return np.full((params.L, params.L), s, dtype=np.int8)


def hamiltonian(params: ModelParams, sigma) -> EnergyDelta:
    """``sum_<ij> (s_i - s_j)^2 - h sum_i s_i`` over nearest-neighbour bonds."""
    s = np.asarray(sigma, dtype=np.int64)
    if s.shape != (params.L, params.L):
        raise ValueError(f"configuration shape {s.shape} does not match L={params.L}")
    a = int(((s - np.roll(s, 1, 0)) ** 2).sum() + ((s - np.roll(s, 1, 1)) ** 2).sum())
    return EnergyDelta(a, -int(s.sum()))


def neighbor_sum(sigma) -> np.ndarray:
    s = np.asarray(sigma, dtype=np.int64)
    return np.roll(s, 1, 0) + np.roll(s, -1, 0) + np.roll(s, 1, 1) + np.roll(s, -1, 1)


def _site(params, i):
    if isinstance(i, (tuple, list)):
        r, c = i
    else:
        r, c = divmod(int(i), params.L)
    return r % params.L, c % params.L


def delta_single_flip(params: ModelParams, sigma, i, s: int) -> EnergyDelta:
    """Energy change of setting site ``i`` to ``s``, from its four neighbours."""
    r, c = _site(params, i)
    old = int(sigma[r, c])
    if s not in SPINS:
        raise ValueError(f"spin {s} not in {{-1,0,+1}}")
    if s == old:
        raise ValueError("new spin equals the current spin")
    L = params.L
    n = (int(sigma[(r + 1) % L, c]) + int(sigma[(r - 1) % L, c])
         + int(sigma[r, (c + 1) % L]) + int(sigma[r, (c - 1) % L]))
    return EnergyDelta(4 * (s * s - old * old) - 2 * (s - old) * n, old - s)


def flip_deltas(sigma):
    """Integer parts ``a[s]`` and ``b[s]`` of every single flip, ``s`` indexed as spin+1.

    Entries where ``s`` equals the current spin are zero and must be masked
    by the caller.
    """
    s = np.asarray(sigma, dtype=np.int64)
    n = neighbor_sum(s)
    a = np.empty((3,) + s.shape, dtype=np.int64)
    b = np.empty_like(a)
    for k, t in enumerate(SPINS):
        a[k] = 4 * (t * t - s * s) - 2 * (t - s) * n
        b[k] = s - t
    return a, b


def spin_flip(sigma, i, s: int) -> np.ndarray:
    """The operator ``S^i_s``: a copy of ``sigma`` with site ``i`` set to ``s``."""
    out = np.array(sigma, copy=True)
    L = out.shape[0]
    r, c = (i if isinstance(i, (tuple, list)) else divmod(int(i), L))
    out[r % L, c % L] = s
    return out


# -- Table of local energy differences ----------------------------------------------

# Cross patterns are written as five spins: top, left, centre, right, bottom.
# Each row lists the patterns with centre -, 0, + and the three differences
# H(2)-H(1), H(3)-H(1), H(3)-H(2) exactly as printed.
TABLE1 = {
    "A": (("-----", "--0--", "--+--"), ("4-h", "16-2h", "12-h")),
    "B": (("----0", "--0-0", "--+-0"), ("2-h", "12-2h", "10-h")),
    "C": (("----+", "--0-+", "--+-+"), ("-h", "8-2h", "8-h")),
    "D": (("-0--0", "-00-0", "-0+-0"), ("-h", "8-2h", "8-h")),
    "E": (("-+--0", "-+0-0", "-++-0"), ("-2-h", "4-2h", "6-h")),
    "F": (("-+--+", "-+0-+", "-++-+"), ("-4-h", "-2h", "4-h")),
    "G": (("-0-00", "-0000", "-0+00"), ("-2-h", "4-2h", "6-h")),
    "H": (("-0-+0", "-00+0", "-0++0"), ("-4-h", "-2h", "4-h")),
    "J": (("-0-++", "-00++", "-0+++"), ("-6-h", "-4-2h", "2-h")),
    "K": (("-+-++", "-+0++", "-++++"), ("-8-h", "-8-2h", "-h")),
    "I": (("00-00", "00000", "00+00"), ("-4-h", "-2h", "4-h")),
    "L": (("00-0+", "0000+", "00+0+"), ("-6-h", "-4-2h", "2-h")),
    "M": (("0+-0+", "0+00+", "0++0+"), ("-8-h", "-8-2h", "-h")),
    "N": (("0+-++", "0+0++", "0++++"), ("-10-h", "-12-2h", "2-h")),
    "O": (("++-++", "++0++", "+++++"), ("-12-h", "-16-2h", "-4-h")),
}
TABLE_COLUMNS = ("H(2)-H(1)", "H(3)-H(1)", "H(3)-H(2)")
_SYM = {"-": -1, "0": 0, "+": 1}


def embed_cross(params: ModelParams, pattern: str, background: int = 0) -> np.ndarray:
    """Place a five-spin cross at the lattice centre."""
    if len(pattern) != 5:
        raise ValueError("cross pattern needs five spins")
    sig = constant_config(params, background)
    c = params.L // 2
    top, left, mid, right, bottom = (_SYM[ch] for ch in pattern)
    sig[c - 1, c], sig[c, c - 1], sig[c, c], sig[c, c + 1], sig[c + 1, c] = \
        top, left, mid, right, bottom
    return sig


@dataclass
class TableEntry:
    row: str
    column: str
    printed: EnergyDelta
    computed: EnergyDelta

    @property
    def ok(self) -> bool:
        return self.printed == self.computed


@dataclass
class TableReport:
    entries: list

    @property
    def n_pass(self) -> int:
        return sum(e.ok for e in self.entries)

    @property
    def passed(self) -> bool:
        return self.n_pass == len(self.entries)

    def mismatches(self):
        return [e for e in self.entries if not e.ok]

    def __str__(self):
        lines = [f"table check: {self.n_pass}/{len(self.entries)} entries match"]
        for e in self.mismatches():
            lines.append(f"  row {e.row}, {e.column}: printed {e.printed}, computed {e.computed}")
        return "\n".join(lines)


def table_check(params: ModelParams | None = None) -> TableReport:
    """Recompute every table entry by global Hamiltonian subtraction."""
    params = params or ModelParams(7, 0.7)
    if params.L < 5:
        raise ValueError("lattice too small to embed a cross without self-overlap")
    entries = []
    for row, (patterns, printed) in TABLE1.items():
        H = [hamiltonian(params, embed_cross(params, p)) for p in patterns]
        diffs = (H[1] - H[0], H[2] - H[0], H[2] - H[1])
        for col, txt, d in zip(TABLE_COLUMNS, printed, diffs):
            entries.append(TableEntry(row, col, EnergyDelta.parse(txt), d))
    return TableReport(entries)


# -- Critical quantities ----------------------------------------------------------

@dataclass(frozen=True)
class CriticalQuantities:
    lc: int
    gamma: EnergyDelta
    gamma_value: float
    k1: Fraction
    k2: Fraction

    @property
    def prefactor_first(self) -> Fraction:
        """Prefactor of ``E_d[tau_{0,u}]`` and ``E_0[tau_u]``."""
        return 1 / self.k1

    @property
    def prefactor_total(self) -> Fraction:
        """Prefactor of ``E_d[tau_u]``."""
        return 1 / self.k1 + 1 / self.k2

    def predictions(self, beta: float) -> dict:
        s = math.exp(beta * self.gamma_value)
        return {"E_d[tau_0u]": float(self.prefactor_first) * s,
                "E_0[tau_u]": float(1 / self.k2) * s,
                "E_d[tau_u]": float(self.prefactor_total) * s}


def critical_quantities(params: ModelParams) -> CriticalQuantities:
    hf = params.h_exact
    lc = math.floor(2 / hf) + 1
    gamma = EnergyDelta(4 * lc, -(lc * (lc - 1) + 1))
    k = Fraction(2, 3) * (2 * lc - 1)
    return CriticalQuantities(lc, gamma, gamma.value(params.h), k, k)
