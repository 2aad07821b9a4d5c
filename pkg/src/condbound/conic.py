"""Solver-agnostic conic programs and the adapter to backend solvers.

A :class:`ConeProgram` minimises ``c @ x + offset`` subject to
``A_eq @ x == b_eq`` and a list of blocks ``G @ x + h in K``.

PSD blocks use the packed upper triangle in column-major order,
``(0,0), (0,1), (1,1), (0,2), (1,2), (2,2), ...``, with off-diagonal entries
multiplied by sqrt(2) so that ``<svec(A), svec(B)> = trace(A B)``.

Plain-text dump format (one item per line, floats written with ``repr``)::

    condbound-cone-program 1
    vars <n>
    objective <nnz> <offset>
    <index> <value>                       (nnz lines)
    eq <rows> <nnz>
    <row> <col> <value>                   (nnz lines)
    <rhs>                                 (rows lines)
    block <kind> <size> <rows> <nnz>      (kind: nonneg | soc | psd)
    <row> <col> <value>                   (nnz lines)
    <offset>                              (rows lines)
"""
from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np
import scipy.sparse as sp

from .errors import DegreeMismatch, InvalidInput, SolverFailure
from .model import Status

SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# cones and svec packing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Nonneg:
    dim: int

    @property
    def size(self) -> int:
        return self.dim


@dataclass(frozen=True)
class SecondOrder:
    """``(t, x)`` with ``||x|| <= t``."""

    dim: int

    @property
    def size(self) -> int:
        return self.dim


@dataclass(frozen=True)
class PSD:
    n: int

    @property
    def size(self) -> int:
        return self.n * (self.n + 1) // 2


Cone = Union[Nonneg, SecondOrder, PSD]


def svec_index(i: int, j: int) -> int:
    if i > j:
        i, j = j, i
    return j * (j + 1) // 2 + i


def svec(S: np.ndarray) -> np.ndarray:
    n = S.shape[0]
    out = np.empty(n * (n + 1) // 2)
    for j in range(n):
        for i in range(j + 1):
            out[svec_index(i, j)] = S[i, j] * (1.0 if i == j else SQRT2)
    return out


def smat(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = int(round((math.sqrt(8 * len(v) + 1) - 1) / 2))
    S = np.empty((n, n))
    for j in range(n):
        for i in range(j + 1):
            val = v[svec_index(i, j)] / (1.0 if i == j else SQRT2)
            S[i, j] = S[j, i] = val
    return S


# ---------------------------------------------------------------------------
# program
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConeBlock:
    matrix: sp.csr_matrix
    offset: np.ndarray
    cone: Cone


@dataclass(frozen=True, eq=False)
class ConeProgram:
    num_vars: int
    objective: np.ndarray
    eq_matrix: sp.csr_matrix
    eq_rhs: np.ndarray
    blocks: tuple[ConeBlock, ...] = ()
    objective_offset: float = 0.0

    def __post_init__(self):
        n = self.num_vars
        if self.objective.shape != (n,) or self.eq_matrix.shape[1] != n:
            raise InvalidInput("dimension mismatch in cone program")
        if self.eq_matrix.shape[0] != len(self.eq_rhs):
            raise InvalidInput("equality rows and rhs differ in length")
        for b in self.blocks:
            if b.matrix.shape != (b.cone.size, n) or len(b.offset) != b.cone.size:
                raise InvalidInput("cone block shape mismatch")
        arrays = [self.objective, self.eq_matrix.data, self.eq_rhs]
        arrays += [a for b in self.blocks for a in (b.matrix.data, b.offset)]
        if any(not np.all(np.isfinite(a)) for a in arrays):
            raise InvalidInput("non-finite coefficient in cone program")

    @property
    def is_lp(self) -> bool:
        return all(isinstance(b.cone, Nonneg) for b in self.blocks)

    # serialization ------------------------------------------------------
    def dumps(self) -> str:
        lines = ["condbound-cone-program 1", f"vars {self.num_vars}"]
        nz = np.flatnonzero(self.objective)
        lines.append(f"objective {len(nz)} {self.objective_offset!r}")
        lines += [f"{i} {float(self.objective[i])!r}" for i in nz]
        lines += _dump_matrix("eq", self.eq_matrix, self.eq_rhs)
        for b in self.blocks:
            kind = {Nonneg: "nonneg", SecondOrder: "soc", PSD: "psd"}[type(b.cone)]
            size = b.cone.n if isinstance(b.cone, PSD) else b.cone.dim
            lines += _dump_matrix(f"block {kind} {size}", b.matrix, b.offset)
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ConeProgram":
        it = iter(text.splitlines())
        if next(it).split() != ["condbound-cone-program", "1"]:
            raise InvalidInput("not a cone program dump")
        n = int(next(it).split()[1])
        _, nnz, off = next(it).split()
        obj = np.zeros(n)
        for _ in range(int(nnz)):
            i, v = next(it).split()
            obj[int(i)] = float(v)
        head = next(it).split()
        A, b = _load_matrix(it, int(head[1]), int(head[2]), n)
        blocks = []
        for line in it:
            head = line.split()
            if not head:
                continue
            kind, size, rows, nnz = head[1], int(head[2]), int(head[3]), int(head[4])
            cone = {"nonneg": Nonneg, "soc": SecondOrder, "psd": PSD}[kind](size)
            G, h = _load_matrix(it, rows, nnz, n)
            blocks.append(ConeBlock(G, h, cone))
        return cls(n, obj, A, b, tuple(blocks), float(off))

    def to_dict(self) -> dict:
        return {"format": "condbound-cone-program", "text": self.dumps()}

    @classmethod
    def from_dict(cls, data: dict) -> "ConeProgram":
        return cls.loads(data["text"])


def _dump_matrix(head: str, M: sp.csr_matrix, rhs: np.ndarray) -> list[str]:
    C = M.tocoo()
    lines = [f"{head} {M.shape[0]} {C.nnz}"]
    lines += [f"{i} {j} {float(v)!r}" for i, j, v in zip(C.row, C.col, C.data)]
    lines += [repr(float(v)) for v in rhs]
    return lines


def _load_matrix(it, rows: int, nnz: int, n: int):
    r, c, v = [], [], []
    for _ in range(nnz):
        i, j, val = next(it).split()
        r.append(int(i)); c.append(int(j)); v.append(float(val))
    M = sp.csr_matrix((v, (r, c)), shape=(rows, n))
    rhs = np.array([float(next(it)) for _ in range(rows)])
    return M, rhs


# ---------------------------------------------------------------------------
# builder
# ---------------------------------------------------------------------------

Terms = dict  # {var index: coefficient}


def _axpy(acc: Terms, terms: Terms, scale: float = 1.0) -> Terms:
    for k, v in terms.items():
        acc[k] = acc.get(k, 0.0) + scale * v
    return acc


class ProgramBuilder:
    """Incremental construction of a :class:`ConeProgram`."""

    def __init__(self):
        self.num_vars = 0
        self._obj: Terms = {}
        self._offset = 0.0
        self._eq: list[tuple[Terms, float]] = []
        self._blocks: list[tuple[list[tuple[Terms, float]], Cone]] = []

    def variables(self, k: int) -> np.ndarray:
        idx = np.arange(self.num_vars, self.num_vars + k)
        self.num_vars += k
        return idx

    def minimize(self, terms: Terms, offset: float = 0.0) -> None:
        self._obj = dict(terms)
        self._offset = offset

    def equality(self, terms: Terms, rhs: float = 0.0) -> None:
        """``sum terms == rhs``."""
        self._eq.append((dict(terms), float(rhs)))

    def nonneg(self, terms: Terms, const: float = 0.0) -> None:
        """``sum terms + const >= 0``."""
        self._blocks.append(([(dict(terms), float(const))], Nonneg(1)))

    def cone(self, rows: list[tuple[Terms, float]], cone: Cone) -> int:
        if len(rows) != cone.size:
            raise InvalidInput("row count does not match cone size")
        self._blocks.append(([(dict(t), float(c)) for t, c in rows], cone))
        return len(self._blocks) - 1

    def psd_matrix(self, entries: dict[tuple[int, int], tuple[Terms, float]], n: int) -> int:
        """Constrain the symmetric matrix with affine ``entries[(i, j)]``
        (``i <= j``; missing entries are zero) to be PSD."""
        rows = [({}, 0.0)] * (n * (n + 1) // 2)
        for (i, j), (terms, const) in entries.items():
            s = 1.0 if i == j else SQRT2
            rows[svec_index(i, j)] = ({k: s * v for k, v in terms.items()}, s * const)
        return self.cone(rows, PSD(n))

    def gram(self, size: int) -> list[Terms]:
        """New PSD Gram matrix ``Q`` (``size x size``); returns, for each
        degree ``k``, the terms of the coefficient of ``x^k`` in
        ``z(x)^T Q z(x)`` with monomial vector ``z = (1, x, ..., x^(size-1))``."""
        if size <= 0:
            return []
        v = self.variables(size * (size + 1) // 2)
        if size == 1:
            self.nonneg({int(v[0]): 1.0})
        else:
            self.cone([({int(k): 1.0}, 0.0) for k in v], PSD(size))
        coeffs: list[Terms] = [dict() for _ in range(2 * size - 1)]
        for j in range(size):
            for i in range(j + 1):
                w = 1.0 if i == j else SQRT2
                coeffs[i + j][int(v[svec_index(i, j)])] = w
        return coeffs

    def build(self) -> ConeProgram:
        n = self.num_vars
        obj = np.zeros(n)
        for k, v in self._obj.items():
            obj[k] += v
        A, b = _rows_to_csr(self._eq, n)
        blocks = []
        for rows, cone in self._blocks:
            G, h = _rows_to_csr(rows, n)
            blocks.append(ConeBlock(G, h, cone))
        return ConeProgram(n, obj, A, b, tuple(blocks), self._offset)


def _rows_to_csr(rows, n):
    r, c, v = [], [], []
    for i, (terms, _) in enumerate(rows):
        for k, val in terms.items():
            if val != 0.0:
                r.append(i); c.append(k); v.append(val)
    M = sp.csr_matrix((v, (r, c)), shape=(len(rows), n))
    M.sum_duplicates()
    return M, np.array([const for _, const in rows], dtype=float)


# ---------------------------------------------------------------------------
# solving
# ---------------------------------------------------------------------------

class Outcome(str, enum.Enum):
    OPTIMAL = "optimal"
    PRIMAL_INFEASIBLE = "primal_infeasible"
    DUAL_INFEASIBLE = "dual_infeasible"
    NUMERICAL_TROUBLE = "numerical_trouble"


# Every program built by this package minimises a bound over certificate
# variables.  An infeasible certificate system means no finite bound exists
# (divergent); an unbounded-below program means the ambiguity set is empty.
OUTCOME_TO_STATUS = {
    Outcome.OPTIMAL: Status.TIGHT,
    Outcome.PRIMAL_INFEASIBLE: Status.DIVERGENT,
    Outcome.DUAL_INFEASIBLE: Status.INFEASIBLE,
    Outcome.NUMERICAL_TROUBLE: Status.NUMERICAL_TROUBLE,
}


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-9
    max_iter: int = 200_000
    backend: str = "clarabel"
    time_limit: float = math.inf


@dataclass(frozen=True, eq=False)
class SolveOutcome:
    status: Outcome
    x: np.ndarray | None
    eq_duals: np.ndarray | None
    cone_duals: tuple[np.ndarray, ...]
    objective: float
    dual_objective: float
    backend_status: str
    solve_time: float
    reduced_accuracy: bool = False


def solve(prog: ConeProgram, settings: SolverSettings = SolverSettings()) -> SolveOutcome:
    backend = settings.backend
    if backend == "auto":
        backend = "highs" if prog.is_lp else "clarabel"
    try:
        fn = _BACKENDS[backend]
    except KeyError:
        raise InvalidInput(f"unknown backend {backend!r}") from None
    return fn(prog, settings)


def _solve_clarabel(prog: ConeProgram, settings: SolverSettings) -> SolveOutcome:
    import clarabel

    n = prog.num_vars
    mats = [prog.eq_matrix] + [-b.matrix for b in prog.blocks]
    A = sp.vstack(mats, format="csc") if mats else sp.csc_matrix((0, n))
    bvec = np.concatenate([prog.eq_rhs] + [b.offset for b in prog.blocks])
    cones = []
    if prog.eq_matrix.shape[0]:
        cones.append(clarabel.ZeroConeT(prog.eq_matrix.shape[0]))
    for b in prog.blocks:
        if isinstance(b.cone, Nonneg):
            cones.append(clarabel.NonnegativeConeT(b.cone.dim))
        elif isinstance(b.cone, SecondOrder):
            cones.append(clarabel.SecondOrderConeT(b.cone.dim))
        else:
            cones.append(clarabel.PSDTriangleConeT(b.cone.n))
    s = clarabel.DefaultSettings()
    s.verbose = False
    s.tol_gap_abs = s.tol_gap_rel = s.tol_feas = settings.tol
    s.tol_ktratio = max(settings.tol, 1e-10)
    s.max_iter = min(settings.max_iter, 2**31 - 1)
    if math.isfinite(settings.time_limit):
        s.time_limit = settings.time_limit
    P = sp.csc_matrix((n, n))
    t0 = time.perf_counter()
    try:
        sol = clarabel.DefaultSolver(P, prog.objective, A, bvec, cones, s).solve()
    except Exception as exc:  # backend raises its own exception types
        raise SolverFailure(f"clarabel: {exc}") from exc
    elapsed = time.perf_counter() - t0
    name = str(sol.status).split(".")[-1]
    table = {
        "Solved": (Outcome.OPTIMAL, False),
        "AlmostSolved": (Outcome.OPTIMAL, True),
        "PrimalInfeasible": (Outcome.PRIMAL_INFEASIBLE, False),
        "AlmostPrimalInfeasible": (Outcome.PRIMAL_INFEASIBLE, True),
        "DualInfeasible": (Outcome.DUAL_INFEASIBLE, False),
        "AlmostDualInfeasible": (Outcome.DUAL_INFEASIBLE, True),
    }
    if name == "Unsolved":
        raise SolverFailure("clarabel returned Unsolved")
    status, reduced = table.get(name, (Outcome.NUMERICAL_TROUBLE, True))
    z = np.asarray(sol.z)
    k = prog.eq_matrix.shape[0]
    duals, pos = [], k
    for b in prog.blocks:
        duals.append(z[pos:pos + b.cone.size])
        pos += b.cone.size
    x = np.asarray(sol.x)
    obj = float(sol.obj_val) + prog.objective_offset
    dobj = float(getattr(sol, "obj_val_dual", sol.obj_val)) + prog.objective_offset
    return SolveOutcome(status, x, z[:k], tuple(duals), obj, dobj, name, elapsed, reduced)


def _solve_highs(prog: ConeProgram, settings: SolverSettings) -> SolveOutcome:
    from scipy.optimize import linprog

    if not prog.is_lp:
        raise InvalidInput("the highs backend handles linear programs only")
    G = sp.vstack([b.matrix for b in prog.blocks], format="csr") if prog.blocks else None
    h = np.concatenate([b.offset for b in prog.blocks]) if prog.blocks else None
    t0 = time.perf_counter()
    res = linprog(
        prog.objective,
        A_ub=-G if G is not None else None,
        b_ub=h,
        A_eq=prog.eq_matrix if prog.eq_matrix.shape[0] else None,
        b_eq=prog.eq_rhs if prog.eq_matrix.shape[0] else None,
        bounds=(None, None),
        method="highs",
        options={"primal_feasibility_tolerance": max(settings.tol, 1e-10),
                 "dual_feasibility_tolerance": max(settings.tol, 1e-10)},
    )
    elapsed = time.perf_counter() - t0
    status = {0: Outcome.OPTIMAL, 2: Outcome.PRIMAL_INFEASIBLE,
              3: Outcome.DUAL_INFEASIBLE}.get(res.status, Outcome.NUMERICAL_TROUBLE)
    if status is not Outcome.OPTIMAL:
        return SolveOutcome(status, None, None, (), math.nan, math.nan, res.message, elapsed)
    eq = -np.asarray(res.eqlin.marginals) if prog.eq_matrix.shape[0] else np.zeros(0)
    ineq = -np.asarray(res.ineqlin.marginals) if prog.blocks else np.zeros(0)
    duals, pos = [], 0
    for b in prog.blocks:
        duals.append(ineq[pos:pos + b.cone.size])
        pos += b.cone.size
    obj = float(res.fun) + prog.objective_offset
    return SolveOutcome(status, np.asarray(res.x), eq, tuple(duals), obj, obj, res.message, elapsed)


_BACKENDS = {"clarabel": _solve_clarabel, "highs": _solve_highs}


# ---------------------------------------------------------------------------
# Gram-matrix certificates
# ---------------------------------------------------------------------------

def psd_from_gram(poly_coeffs, degree: int) -> ConeProgram:
    """Feasibility program for ``p(x) = z(x)^T Q z(x)`` with ``Q`` PSD.

    ``poly_coeffs`` are ascending numeric coefficients; the Gram matrix
    occupies the first ``(d/2+1)(d/2+2)/2`` variables in svec order.
    """
    if degree < 0 or degree % 2:
        raise DegreeMismatch("degree must be even and nonnegative")
    coeffs = list(poly_coeffs)
    if len(coeffs) > degree + 1 and any(coeffs[degree + 1:]):
        raise DegreeMismatch("polynomial degree exceeds the Gram degree")
    coeffs += [0.0] * (degree + 1 - len(coeffs))
    b = ProgramBuilder()
    rows = b.gram(degree // 2 + 1)
    for k, terms in enumerate(rows):
        b.equality(terms, float(coeffs[k]))
    return b.build()
