"""Butcher tableaus for the Gauss, HBVM and EQUIP families.

All three families share the same skeleton: a small core matrix expressed in
the shifted orthonormal Legendre basis, conjugated back to the stage basis
through Vandermonde-type matrices built on Gauss-Legendre nodes.

* Gauss / EQUIP:  A = P X_s(alpha) P^{-1}  on s nodes (alpha = 0 is Gauss).
* HBVM(k, s):     A = W1 Xhat_s W0^T Omega on k >= s nodes, where W1 has
  s + 1 basis columns, W0 the first s, and Omega = diag(weights).

The off-diagonal coefficients xi_j = 1/(2 sqrt(4 j^2 - 1)) couple neighbouring
basis modes; the EQUIP parameter alpha perturbs only the outermost pair, which
keeps the algebraic symplecticity condition intact for every alpha.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .quadrature import gauss_rule, vandermonde

__all__ = [
    "CoreMatrix",
    "MethodSpec",
    "ButcherTableau",
    "xi",
    "build_X",
    "build_Xhat",
    "build_gauss",
    "build_equip_tableau",
    "build_hbvm",
    "build_tableau",
    "symplecticity_residual",
    "format_tableau",
    "tableau_csv",
]

# conjugating an s x s basis change should never be anywhere near singular;
# exceeding this signals an internal bug, not a user error
_COND_LIMIT = 1e12

KINDS = ("gauss", "hbvm", "equip")


def xi(j: int) -> float:
    """Coupling coefficient between basis modes j and j + 1."""
    if j < 1:
        raise ValueError(f"index must be >= 1, got {j}")
    return 1.0 / (2.0 * np.sqrt(4.0 * j * j - 1.0))


@dataclass(frozen=True, eq=False)
class CoreMatrix:
    """Core matrix in the Legendre basis: s x s for X_s(alpha), (s+1) x s for Xhat_s."""

    s: int
    alpha: float
    entries: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        self.entries.setflags(write=False)
        self.xi.setflags(write=False)


@dataclass(frozen=True)
class MethodSpec:
    """Identity of a method: family kind, degree parameter s, node count k (hbvm)."""

    kind: str
    s: int
    k: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown method kind {self.kind!r}")
        if self.s < 1:
            raise ValueError(f"s must be positive, got {self.s}")
        if self.kind == "hbvm":
            if self.k is None:
                raise ValueError("hbvm requires k")
            if self.k < self.s:
                raise ValueError(f"hbvm requires k >= s, got k={self.k}, s={self.s}")
        elif self.k is not None:
            raise ValueError(f"k is only meaningful for hbvm, got kind={self.kind!r}")

    @property
    def n_stages(self) -> int:
        return self.k if self.kind == "hbvm" else self.s

    @property
    def order(self) -> int:
        return 2 * self.s

    def __str__(self) -> str:
        if self.kind == "hbvm":
            return f"hbvm:k={self.k},s={self.s}"
        return f"{self.kind}:s={self.s}"


@dataclass(frozen=True, eq=False)
class ButcherTableau:
    """Runge-Kutta data (A, b, c) plus order and construction metadata."""

    n_stages: int
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int
    spec: MethodSpec
    alpha: float = 0.0

    def __post_init__(self):
        n = self.n_stages
        if self.A.shape != (n, n) or self.b.shape != (n,) or self.c.shape != (n,):
            raise ValueError("tableau dimensions are inconsistent")
        self.A.setflags(write=False)
        self.b.setflags(write=False)
        self.c.setflags(write=False)


def build_X(s: int, alpha: float) -> CoreMatrix:
    """Tridiagonal core matrix X_s(alpha).

    Entry (1,1) is 1/2, the sub/superdiagonal carries +-xi_1 .. +-xi_{s-1}
    and alpha is added to the outermost pair.  For s = 1 there is no
    off-diagonal slot and alpha is forced to 0.
    """
    if s < 1:
        raise ValueError(f"s must be positive, got {s}")
    if s == 1:
        alpha = 0.0
    xis = np.array([xi(j) for j in range(1, s)])
    X = np.zeros((s, s))
    X[0, 0] = 0.5
    for j in range(s - 1):
        off = xis[j] + (alpha if j == s - 2 else 0.0)
        X[j, j + 1] = -off
        X[j + 1, j] = off
    return CoreMatrix(s=s, alpha=float(alpha), entries=X, xi=xis)


def build_Xhat(s: int) -> CoreMatrix:
    """Extended core matrix Xhat_s: X_s(0) plus a bottom row carrying xi_s."""
    if s < 1:
        raise ValueError(f"s must be positive, got {s}")
    top = build_X(s, 0.0)
    Xhat = np.zeros((s + 1, s))
    Xhat[:s] = top.entries
    Xhat[s, s - 1] = xi(s)
    return CoreMatrix(s=s, alpha=0.0, entries=Xhat, xi=np.append(top.xi, xi(s)))


def _conjugate(P: np.ndarray, X: np.ndarray) -> np.ndarray:
    """A = P X P^{-1} computed as a linear solve against P (never an inverse)."""
    cond = np.linalg.cond(P)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise RuntimeError(
            f"basis change matrix is ill-conditioned (cond ~ {cond:.2e}); "
            "this indicates an internal bug"
        )
    return np.linalg.solve(P.T, (P @ X).T).T


def build_equip_tableau(s: int, alpha: float) -> ButcherTableau:
    """EQUIP tableau on s Gauss nodes; alpha = 0 reduces to the Gauss method."""
    rule = gauss_rule(s)
    P = vandermonde(rule, s)
    core = build_X(s, alpha)
    A = _conjugate(P, core.entries)
    return ButcherTableau(
        n_stages=s, A=A, b=rule.weights.copy(), c=rule.nodes.copy(),
        order=2 * s, spec=MethodSpec(kind="equip", s=s), alpha=core.alpha,
    )


def build_gauss(s: int) -> ButcherTableau:
    """s-stage Gauss-Legendre collocation tableau, order 2s."""
    t = build_equip_tableau(s, 0.0)
    return ButcherTableau(
        n_stages=s, A=t.A.copy(), b=t.b.copy(), c=t.c.copy(),
        order=2 * s, spec=MethodSpec(kind="gauss", s=s),
    )


def build_hbvm(k: int, s: int) -> ButcherTableau:
    """HBVM(k, s) tableau on k Gauss nodes, order 2s.

    The right-hand basis factor is truncated to the first s columns so the
    product composes; at k = s this reduces elementwise to the Gauss tableau.
    """
    if s < 1:
        raise ValueError(f"s must be positive, got {s}")
    if k < s:
        raise ValueError(f"hbvm requires k >= s, got k={k}, s={s}")
    rule = gauss_rule(k)
    W1 = vandermonde(rule, s + 1)
    W0 = vandermonde(rule, s)
    A = (W1 @ build_Xhat(s).entries @ W0.T) * rule.weights[None, :]
    return ButcherTableau(
        n_stages=k, A=A, b=rule.weights.copy(), c=rule.nodes.copy(),
        order=2 * s, spec=MethodSpec(kind="hbvm", s=s, k=k),
    )


def build_tableau(spec: MethodSpec, alpha: float = 0.0) -> ButcherTableau:
    """Construct the tableau a MethodSpec describes (alpha applies to equip only)."""
    if spec.kind == "gauss":
        return build_gauss(spec.s)
    if spec.kind == "hbvm":
        return build_hbvm(spec.k, spec.s)
    return build_equip_tableau(spec.s, alpha)


def symplecticity_residual(t: ButcherTableau) -> float:
    """Max-norm of diag(b) A + A^T diag(b) - b b^T.

    Zero (to round-off) certifies that the method conserves all quadratic
    invariants of canonical Hamiltonian flows.
    """
    B = np.diag(t.b)
    M = B @ t.A + t.A.T @ B - np.outer(t.b, t.b)
    return float(np.max(np.abs(M)))


def _fmt15(x: float) -> str:
    """Fixed-point decimal with 15 significant digits."""
    return np.format_float_positional(
        x, precision=15, unique=False, fractional=False, trim="k"
    )


def format_tableau(t: ButcherTableau) -> str:
    """Aligned human-readable form: c | A rows, then the weights row."""
    cells = [[_fmt15(t.c[i])] + [_fmt15(a) for a in t.A[i]] for i in range(t.n_stages)]
    cells.append([""] + [_fmt15(w) for w in t.b])
    widths = [max(len(row[j]) for row in cells) for j in range(t.n_stages + 1)]
    lines = [f"# {t.spec}  order {t.order}"]
    for i, row in enumerate(cells):
        sep = " | " if i < t.n_stages else "   "
        lines.append(row[0].rjust(widths[0]) + sep
                     + "  ".join(row[j + 1].rjust(widths[j + 1]) for j in range(t.n_stages)))
    return "\n".join(lines)


def tableau_csv(t: ButcherTableau) -> str:
    """Machine-readable form: header comments, then one CSV row per tableau row.

    Each stage row is ``c_i,a_i1,...,a_in``; the trailing row holds the
    weights with an empty leading field.
    """
    out = io.StringIO()
    out.write(f"# method {t.spec.kind}\n")
    out.write(f"# s {t.spec.s}\n")
    out.write(f"# k {t.n_stages}\n")
    out.write(f"# alpha {format(t.alpha, '.17g')}\n")
    for i in range(t.n_stages):
        row = [format(t.c[i], ".17g")] + [format(a, ".17g") for a in t.A[i]]
        out.write(",".join(row) + "\n")
    out.write("," + ",".join(format(w, ".17g") for w in t.b) + "\n")
    return out.getvalue()
