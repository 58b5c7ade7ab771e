"""Dense two-phase simplex for the small LPs used by bound fitting and verification.

Problems are stated in a general form (free/bounded variables, ``<=``, ``=``,
``>=`` rows) and converted to ``min c x, A x = b, x >= 0, b >= 0`` internally.
Pivoting uses Dantzig's rule and falls back to Bland's rule after a run of
degenerate pivots.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SolverStalledError

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIVOT_TOL = 1e-11
MAX_PIVOTS = 1_000_000
BLAND_AFTER = 100

LE, EQ, GE = "<=", "=", ">="


@dataclass
class LinearProgram:
    objective: np.ndarray
    sense: str = "min"
    A: np.ndarray | None = None
    relations: list = field(default_factory=list)
    rhs: np.ndarray | None = None
    bounds: list | None = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        n = self.objective.size
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        if self.A is None:
            self.A = np.zeros((0, n))
            self.rhs = np.zeros(0)
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.rhs = np.asarray(self.rhs, dtype=float).ravel()
        self.relations = list(self.relations)
        if self.A.shape[0] != self.rhs.size or len(self.relations) != self.rhs.size:
            raise ValueError("constraint rows, relations and rhs must have equal length")
        for r in self.relations:
            if r not in (LE, EQ, GE):
                raise ValueError(f"unknown relation {r!r}")
        if self.bounds is None:
            self.bounds = [(0.0, np.inf)] * n
        if len(self.bounds) != n:
            raise ValueError("need one (lo, hi) bound pair per variable")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.rhs))
                and np.all(np.isfinite(self.objective))):
            raise ValueError("LP coefficients must be finite")

    @property
    def n_vars(self) -> int:
        return self.objective.size

    def add_constraint(self, coeffs, relation, rhs):
        self.A = np.vstack([self.A, np.asarray(coeffs, dtype=float).reshape(1, -1)])
        self.relations.append(relation)
        self.rhs = np.append(self.rhs, float(rhs))


@dataclass
class LpSolution:
    status: str
    values: np.ndarray | None = None
    objective_value: float | None = None
    duals: np.ndarray | None = None
    pivots: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class _Tableau:
    """Row 0..m-1 constraints, row m objective (reduced costs), last column rhs."""

    def __init__(self, A, b, c, basis):
        m, n = A.shape
        T = np.zeros((m + 1, n + 1))
        T[:m, :n] = A
        T[:m, n] = b
        T[m, :n] = c
        self.T = T
        self.basis = list(basis)
        self.m = m
        self.n = n
        self.pivots = 0
        # price out basic columns
        for r, j in enumerate(self.basis):
            if T[m, j] != 0.0:
                T[m] -= T[m, j] * T[r]

    def pivot(self, r, j):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        nz = np.nonzero(col)[0]
        if nz.size:
            T[nz] -= np.outer(col[nz], T[r])
        self.basis[r] = j
        self.pivots += 1
        if self.pivots > MAX_PIVOTS:
            raise SolverStalledError(f"simplex exceeded {MAX_PIVOTS} pivots")

    def run(self, allowed: np.ndarray) -> str:
        """Minimise the objective row over columns flagged in ``allowed``."""
        T, m, n = self.T, self.m, self.n
        degenerate_run = 0
        while True:
            red = T[m, :n]
            cand = np.nonzero(allowed & (red < -OPT_TOL))[0]
            if cand.size == 0:
                return "optimal"
            bland = degenerate_run >= BLAND_AFTER
            j = int(cand[0]) if bland else int(cand[np.argmin(red[cand])])
            col = T[:m, j]
            pos = col > PIVOT_TOL
            if not np.any(pos):
                return "unbounded"
            rows = np.nonzero(pos)[0]
            ratios = T[rows, n] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
            if ties.size > 1:
                # smallest basic index keeps the choice deterministic and is Bland's rule
                r = int(min(ties, key=lambda rr: self.basis[rr]))
            else:
                r = int(ties[0])
            degenerate_run = degenerate_run + 1 if T[r, n] <= FEAS_TOL else 0
            self.pivot(r, j)


def _standard_form(lp: LinearProgram):
    """Return (A, b, c, const, recover) for min c y, A y = b, y >= 0."""
    n = lp.n_vars
    c_in = lp.objective if lp.sense == "min" else -lp.objective
    cols = []  # (orig index, sign, offset-from-lo) mapping per std column
    shift = np.zeros(n)
    A_cols = []
    c_std = []
    extra_rows = []  # (std column, upper) for finite-width variables
    for i, (lo, hi) in enumerate(lp.bounds):
        lo = -np.inf if lo is None else float(lo)
        hi = np.inf if hi is None else float(hi)
        if lo > hi:
            raise ValueError(f"variable {i} has lo > hi")
        if np.isfinite(lo):
            shift[i] = lo
            cols.append((i, 1.0))
            A_cols.append(lp.A[:, i])
            c_std.append(c_in[i])
            if np.isfinite(hi):
                extra_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            shift[i] = hi
            cols.append((i, -1.0))
            A_cols.append(-lp.A[:, i])
            c_std.append(-c_in[i])
        else:
            cols.append((i, 1.0))
            A_cols.append(lp.A[:, i])
            c_std.append(c_in[i])
            cols.append((i, -1.0))
            A_cols.append(-lp.A[:, i])
            c_std.append(-c_in[i])
    m0 = lp.A.shape[0]
    nstruct = len(cols)
    A_s = np.column_stack(A_cols) if A_cols else np.zeros((m0, 0))
    b_s = lp.rhs - lp.A @ shift
    rel = list(lp.relations)
    if extra_rows:
        E = np.zeros((len(extra_rows), nstruct))
        for k, (j, ub) in enumerate(extra_rows):
            E[k, j] = 1.0
        A_s = np.vstack([A_s, E])
        b_s = np.concatenate([b_s, [ub for _, ub in extra_rows]])
        rel += [LE] * len(extra_rows)
    const = float(c_in @ shift)
    return A_s, b_s, rel, np.array(c_std), const, cols, shift, m0


def solve_lp(lp: LinearProgram) -> LpSolution:
    A_s, b_s, rel, c_s, const, cols, shift, m0 = _standard_form(lp)
    m, ns = A_s.shape
    # slack/surplus columns
    n_slack = sum(r != EQ for r in rel)
    S = np.zeros((m, n_slack))
    k = 0
    slack_of_row = [-1] * m
    for r, rr in enumerate(rel):
        if rr == LE:
            S[r, k] = 1.0
        elif rr == GE:
            S[r, k] = -1.0
        if rr != EQ:
            slack_of_row[r] = ns + k
            k += 1
    A = np.hstack([A_s, S])
    b = b_s.copy()
    flip = np.where(b < 0, -1.0, 1.0)
    A *= flip[:, None]
    b *= flip
    n1 = A.shape[1]
    # rows whose slack is +1 after flipping start basic; others get artificials
    basis = [-1] * m
    art_rows = []
    for r in range(m):
        s = slack_of_row[r]
        if s >= 0 and A[r, s] > 0:
            basis[r] = s
        else:
            art_rows.append(r)
    n_art = len(art_rows)
    Aart = np.zeros((m, n_art))
    for k, r in enumerate(art_rows):
        Aart[r, k] = 1.0
        basis[r] = n1 + k
    Afull = np.hstack([A, Aart])
    ntot = n1 + n_art
    # identity column of each row, for dual recovery
    ident_col = [basis[r] for r in range(m)]

    pivots = 0
    if n_art:
        c1 = np.zeros(ntot)
        c1[n1:] = 1.0
        tab = _Tableau(Afull, b, c1, basis)
        tab.run(np.ones(ntot, dtype=bool))
        pivots = tab.pivots
        if -tab.T[m, -1] > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
            return LpSolution("infeasible", pivots=pivots)
        # drive remaining artificials out of the basis
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if tab.basis[r] >= n1:
                row = tab.T[r, :n1]
                nz = np.nonzero(np.abs(row) > 1e-9)[0]
                if nz.size:
                    tab.pivot(r, int(nz[np.argmax(np.abs(row[nz]))]))
                else:
                    keep[r] = False
        T = tab.T
        basis2 = [tab.basis[r] for r in range(m) if keep[r]]
        rows2 = np.nonzero(keep)[0]
        A2 = T[rows2, :ntot]
        b2 = T[rows2, -1]
        pivots = tab.pivots
    else:
        A2, b2, basis2, rows2 = Afull, b, basis, np.arange(m)
        keep = np.ones(m, dtype=bool)

    c2 = np.zeros(ntot)
    c2[:ns] = c_s
    tab2 = _Tableau(A2, b2, c2, basis2)
    allowed = np.zeros(ntot, dtype=bool)
    allowed[:n1] = True
    status = tab2.run(allowed)
    pivots += tab2.pivots
    if status == "unbounded":
        return LpSolution("unbounded", pivots=pivots)

    T = tab2.T
    y = np.zeros(ntot)
    for r, j in enumerate(tab2.basis):
        y[j] = T[r, -1]
    x = shift.copy()
    for k, (i, sgn) in enumerate(cols):
        x[i] += sgn * y[k]
    obj = float(c_s @ y[:ns]) + const
    # duals: reduced cost of the row's initial identity column is c_j - pi_r
    red = T[-1, :ntot]
    pi = np.zeros(m)
    for r in range(m):
        j = ident_col[r]
        cj = c2[j]
        pi[r] = cj - red[j]
    # identity column of a surplus-flipped row was -1 * slack... handled via flip below
    duals = (pi * flip)[:m0]
    if lp.sense == "max":
        obj = -obj
        duals = -duals
    return LpSolution("optimal", x, obj, duals, pivots)
