"""Warm-startable LSMR and BiCG, plus a dense direct solver used as an oracle."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg


class Termination(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    BREAKDOWN = "breakdown"


class RankDeficientError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class StoppingRule:
    """Termination parameters.

    ``atol``/``btol``/``conlim`` drive LSMR's standard tests and ``rtol`` the
    BiCG relative residual test.  ``max_iters=None`` picks the per-method
    default (``2 min(m, n)`` for LSMR, ``10 n`` for BiCG).
    """

    atol: float = 1e-6
    btol: float = 1e-6
    conlim: float = 1e8
    rtol: float = 1e-5
    max_iters: Optional[int] = None

    def with_max_iters(self, max_iters: int) -> "StoppingRule":
        return StoppingRule(self.atol, self.btol, self.conlim, self.rtol, max_iters)


@dataclass
class SolveReport:
    x_final: np.ndarray
    iterations: int
    residual_history: list
    termination: Termination
    initial_guess_tag: str = "zero"
    note: str = ""
    x_initial: Optional[np.ndarray] = None

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1]

    @property
    def converged(self) -> bool:
        return self.termination is Termination.CONVERGED

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "termination": self.termination.value,
            "residuals": [float(r) for r in self.residual_history],
            "x": [float(v) for v in self.x_final],
            "guess": self.initial_guess_tag,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")


def _prepare(a, b, x0):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ValueError(f"incompatible shapes A{a.shape} and b{b.shape}")
    n = a.shape[1]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64).reshape(-1)
    if x.shape != (n,):
        raise ValueError(f"x0 has length {x.shape[0]}, expected {n}")
    return a, b, x


def _sym_ortho(a, b):
    """Stable Givens rotation ``(c, s, r)`` with ``[c s; -s c] [a; b] = [r; 0]``."""
    if b == 0:
        return math.copysign(1.0, a) if a != 0 else 1.0, 0.0, abs(a)
    if a == 0:
        return 0.0, math.copysign(1.0, b), abs(b)
    if abs(b) > abs(a):
        tau = a / b
        s = math.copysign(1.0, b) / math.sqrt(1 + tau * tau)
        return s * tau, s, b / s
    tau = b / a
    c = math.copysign(1.0, a) / math.sqrt(1 + tau * tau)
    return c, c * tau, a / c


def lsmr(a, b, x0=None, stop: StoppingRule = StoppingRule(), guess: str = "zero") -> SolveReport:
    """LSMR (Fong & Saunders) on the correction ``A d = b - A x0``; returns ``x0 + d``.

    The stopping tests are the standard ones, measured against the original
    ``||b||``::

        ||r|| <= btol ||b|| + atol ||A|| ||x||      (compatible system)
        ||A^T r|| <= atol ||A|| ||r||             (least-squares optimum)
        cond(A) >= conlim                          (ill-conditioning guard)

    Norm and condition estimates come from the bidiagonalisation recurrences;
    ``residual_history`` however holds the true ``||b - A x_k||``.
    """
    a, b, x = _prepare(a, b, x0)
    m, n = a.shape
    max_iters = 2 * min(m, n) if stop.max_iters is None else stop.max_iters
    ctol = 1.0 / stop.conlim if stop.conlim > 0 else 0.0
    normb = float(np.linalg.norm(b))

    x_start = x.copy()
    u = b - a @ x
    beta = float(np.linalg.norm(u))
    history = [beta]

    def report(term, k, note=""):
        return SolveReport(x, k, history, term, guess, note, x_start)

    if beta > 0:
        u = u / beta
        v = a.T @ u
        alpha = float(np.linalg.norm(v))
    else:
        v = np.zeros(n)
        alpha = 0.0
    if alpha > 0:
        v = v / alpha

    # Stopping test on the initial guess itself.
    norm_a_f = float(np.linalg.norm(a))
    normx0 = float(np.linalg.norm(x))
    if beta <= stop.btol * normb + stop.atol * norm_a_f * normx0 or alpha * beta == 0:
        return report(Termination.CONVERGED, 0)
    if alpha * beta <= stop.atol * norm_a_f * beta:
        return report(Termination.CONVERGED, 0)

    zetabar = alpha * beta
    alphabar = alpha
    rho = rhobar = cbar = 1.0
    sbar = 0.0
    h = v.copy()
    hbar = np.zeros(n)
    dx = np.zeros(n)

    betadd = beta
    betad = 0.0
    rhodold = 1.0
    tautildeold = 0.0
    thetatilde = 0.0
    zeta = 0.0
    d = 0.0

    norm_a2 = alpha * alpha
    maxrbar = 0.0
    minrbar = 1e100

    for k in range(1, max_iters + 1):
        u = a @ v - alpha * u
        beta = float(np.linalg.norm(u))
        if beta > 0:
            u = u / beta
            v = a.T @ u - beta * v
            alpha = float(np.linalg.norm(v))
            if alpha > 0:
                v = v / alpha

        chat, shat, alphahat = _sym_ortho(alphabar, 0.0)

        rhoold = rho
        c, s, rho = _sym_ortho(alphahat, beta)
        thetanew = s * alpha
        alphabar = c * alpha

        rhobarold = rhobar
        zetaold = zeta
        thetabar = sbar * rho
        rhotemp = cbar * rho
        cbar, sbar, rhobar = _sym_ortho(cbar * rho, thetanew)
        zeta = cbar * zetabar
        zetabar = -sbar * zetabar

        hbar = h - (thetabar * rho / (rhoold * rhobarold)) * hbar
        dx = dx + (zeta / (rho * rhobar)) * hbar
        h = v - (thetanew / rho) * h

        # ||r|| estimate
        betaacute = chat * betadd
        betacheck = -shat * betadd
        betahat = c * betaacute
        betadd = -s * betaacute
        thetatildeold = thetatilde
        ctildeold, stildeold, rhotildeold = _sym_ortho(rhodold, thetabar)
        thetatilde = stildeold * rhobar
        rhodold = ctildeold * rhobar
        betad = -stildeold * betad + ctildeold * betahat
        tautildeold = (zetaold - thetatildeold * tautildeold) / rhotildeold
        taud = (zeta - thetatilde * tautildeold) / rhodold
        d = d + betacheck * betacheck
        normr_est = math.sqrt(d + (betad - taud) ** 2 + betadd * betadd)

        # ||A|| and cond(A) estimates
        norm_a2 = norm_a2 + beta * beta
        norm_a = math.sqrt(norm_a2)
        norm_a2 = norm_a2 + alpha * alpha
        maxrbar = max(maxrbar, rhobarold)
        if k > 1:
            minrbar = min(minrbar, rhobarold)
        cond_a = max(maxrbar, rhotemp) / min(minrbar, rhotemp)

        x = x_start + dx
        history.append(float(np.linalg.norm(b - a @ x)))

        normar = abs(zetabar)
        normx = float(np.linalg.norm(x))
        test1 = normr_est / normb if normb > 0 else 0.0
        test2 = normar / (norm_a * normr_est) if norm_a * normr_est > 0 else math.inf
        test3 = 1.0 / cond_a
        t1 = test1 / (1 + norm_a * normx / normb) if normb > 0 else 0.0
        rtol = stop.btol + stop.atol * norm_a * normx / normb if normb > 0 else stop.btol

        if test1 <= rtol or test2 <= stop.atol or 1 + t1 <= 1 or 1 + test2 <= 1:
            return report(Termination.CONVERGED, k)
        if test3 <= ctol or 1 + test3 <= 1:
            return report(Termination.BREAKDOWN, k, "condition estimate exceeded conlim")
        if beta == 0 or alpha == 0:
            # Krylov space exhausted: the iterate is the exact least-squares solution.
            return report(Termination.CONVERGED, k)
    return report(Termination.MAX_ITERS, max_iters)


def bicg(a, b, x0=None, stop: StoppingRule = StoppingRule(), guess: str = "zero",
         breakdown_tol: float = 1e-14) -> SolveReport:
    """Bi-conjugate gradient with shadow residual ``r~0 = r0``.

    Converged when the true residual satisfies ``||b - A x|| <= rtol ||b||``.
    On breakdown (vanishing ``rho`` or pivot, relative to ``breakdown_tol``)
    the best iterate seen so far is returned.
    """
    a, b, x = _prepare(a, b, x0)
    m, n = a.shape
    if m != n:
        raise ValueError(f"BiCG needs a square matrix, got {m}x{n}")
    max_iters = 10 * n if stop.max_iters is None else stop.max_iters
    target = stop.rtol * float(np.linalg.norm(b))

    x_start = x.copy()
    r = b - a @ x
    history = [float(np.linalg.norm(r))]
    best_x, best_res = x.copy(), history[0]

    def report(x_out, k, term, note=""):
        return SolveReport(x_out, k, history, term, guess, note, x_start)

    if history[0] <= target:
        return report(x, 0, Termination.CONVERGED)

    rt = r.copy()
    p = pt = None
    rho_old = 1.0
    for k in range(1, max_iters + 1):
        rho = float(rt @ r)
        if abs(rho) <= breakdown_tol * np.linalg.norm(rt) * np.linalg.norm(r):
            return report(best_x, k - 1, Termination.BREAKDOWN, "rho vanished")
        if p is None:
            p, pt = r.copy(), rt.copy()
        else:
            beta = rho / rho_old
            p = r + beta * p
            pt = rt + beta * pt
        q = a @ p
        qt = a.T @ pt
        pivot = float(pt @ q)
        if abs(pivot) <= breakdown_tol * np.linalg.norm(pt) * np.linalg.norm(q):
            return report(best_x, k - 1, Termination.BREAKDOWN, "pivot vanished")
        alpha = rho / pivot
        x = x + alpha * p
        r = r - alpha * q
        rt = rt - alpha * qt
        rho_old = rho
        res = float(np.linalg.norm(b - a @ x))
        history.append(res)
        if res < best_res:
            best_x, best_res = x.copy(), res
        if res <= target:
            return report(x, k, Termination.CONVERGED)
    return report(x, max_iters, Termination.MAX_ITERS)


def solve_direct(a, b) -> np.ndarray:
    """LU with partial pivoting for square systems; Cholesky normal equations otherwise."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    m, n = a.shape
    if m < n:
        raise ValueError("underdetermined systems are not supported")
    if m == n:
        lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
        diag = np.abs(np.diag(lu))
        if diag.min() <= np.finfo(float).eps * max(diag.max(), 1e-300) * n:
            raise RankDeficientError("zero pivot in LU factorisation")
        return scipy.linalg.lu_solve((lu, piv), b)
    try:
        factor = scipy.linalg.cho_factor(a.T @ a, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise RankDeficientError("normal equations are not positive definite") from exc
    return scipy.linalg.cho_solve(factor, a.T @ b)


def solve(kind, a, b, x0=None, stop: StoppingRule = StoppingRule(), guess: str = "zero") -> SolveReport:
    """Dispatch by problem kind: LSMR for least squares, BiCG for square systems."""
    kind = getattr(kind, "value", kind)
    if kind == "LLS":
        return lsmr(a, b, x0, stop, guess)
    if kind == "LSE":
        return bicg(a, b, x0, stop, guess)
    raise ValueError(f"unknown problem kind {kind!r}")
