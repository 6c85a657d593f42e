"""High-precision primal-dual interior-point solver for small dense block SDPs.

Solves   minimize sum_i tr(X_i C_i)
         s.t.     sum_i tr(X_i A_{i,j}) = b_j  (j = 1..m),  X_i PSD

with a Mehrotra predictor-corrector on the symmetrized HKM direction, all
arithmetic on gmpy2.mpfr scalars held in numpy object arrays.  Problem sizes
here are tiny (blocks up to ~41, under ~90 rows), so everything is dense and
the Schur complement is factored with a plain Cholesky.

The AnalyticCenter mode runs pure centering steps on the zero objective; for
a feasibility problem the central path point is independent of mu, so the
iterates converge to the analytic center of the feasible region.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import gmpy2
import numpy as np
from gmpy2 import mpfr

from . import hp


class Mode(enum.Enum):
    MINIMIZE = "Minimize"
    ANALYTIC_CENTER = "AnalyticCenter"


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    STALLED = "Stalled"


class DegenerateRowsError(ValueError):
    pass


@dataclass
class ConstraintRow:
    """One linear equality sum_i tr(X_i mats[i]) = rhs; mats indexed by block."""

    mats: dict
    rhs: object
    label: str = ""


@dataclass
class LinearConstraintSet:
    rows: list = field(default_factory=list)

    def add(self, mats: dict, rhs, label: str = ""):
        self.rows.append(ConstraintRow(mats, mpfr(rhs), label))

    def extend(self, other: "LinearConstraintSet"):
        self.rows.extend(other.rows)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)


@dataclass
class SdpProblem:
    blocks: tuple  # ((name, size), ...)
    costs: dict  # block index -> (n,n) object array; missing = zero
    rows: LinearConstraintSet
    mode: Mode = Mode.MINIMIZE
    objective_offset: object = 0

    def block_index(self, name: str) -> int:
        for i, (nm, _) in enumerate(self.blocks):
            if nm == name:
                return i
        raise KeyError(name)

    def block_sizes(self) -> list:
        return [sz for _, sz in self.blocks]


@dataclass
class SolveOptions:
    precision: int = 256
    gap_tol: float = 1e-30
    max_iter: int = 500
    feas_tol: float | None = None  # defaults to gap_tol
    step_frac: float = 0.98
    center_tol: float = 1e-20
    scale_rows: bool = True
    debug: bool = False
    # early exits for yes/no probes: stop once the primal objective of a
    # feasible iterate drops below stop_below, or the certified dual bound
    # rises above stop_above
    stop_below: float | None = None
    stop_above: float | None = None


@dataclass
class SdpSolution:
    X: list
    y: list
    S: list
    duality_gap: object
    status: Status
    iterations: int
    primal_objective: object = None
    dual_objective: object = None
    mu: object = None


@dataclass
class ResidualReport:
    primal_residual: float
    dual_residual: float
    min_eigenvalues: list


# -- dense mpfr linear algebra ------------------------------------------------


class _NotPD(Exception):
    pass


def _zeros(n, m=None):
    a = np.empty((n, m if m is not None else n), dtype=object)
    a[:] = mpfr(0)
    return a


def _eye(n, scale=1):
    a = _zeros(n)
    s = mpfr(scale)
    for i in range(n):
        a[i, i] = s
    return a


def _sym(a):
    return (a + a.T) / 2


def _dot(a, b) -> mpfr:
    return (a * b).sum()


def _cholesky(M):
    n = M.shape[0]
    L = _zeros(n)
    for i in range(n):
        for j in range(i + 1):
            s = M[i, j] - np.dot(L[i, :j], L[j, :j])
            if i == j:
                if not s > 0:
                    raise _NotPD()
                L[i, i] = gmpy2.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    return L


def _tri_lower_inv(L):
    n = L.shape[0]
    inv = _zeros(n)
    for i in range(n):
        inv[i, i] = 1 / L[i, i]
        for j in range(i):
            inv[i, j] = -np.dot(L[i, j:i], inv[j:i, j]) / L[i, i]
    return inv


def _spd_inverse(M):
    L = _cholesky(M)
    Linv = _tri_lower_inv(L)
    return Linv.T @ Linv


def _chol_solve(L, rhs):
    n = L.shape[0]
    y = [mpfr(0)] * n
    for i in range(n):
        y[i] = (rhs[i] - np.dot(L[i, :i], y[:i])) / L[i, i]
    x = [mpfr(0)] * n
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - np.dot(L[i + 1 :, i], x[i + 1 :])) / L[i, i]
    return np.array(x, dtype=object)


def _lu_factor(M):
    """Partial-pivoted LU of a dense (nonsymmetric) Schur complement matrix."""
    n = M.shape[0]
    A = M.copy()
    piv = list(range(n))
    for k in range(n):
        p = max(range(k, n), key=lambda r: abs(A[r, k]))
        if A[p, k] == 0:
            raise _NotPD()
        if p != k:
            A[[k, p], :] = A[[p, k], :]
            piv[k], piv[p] = piv[p], piv[k]
        for r in range(k + 1, n):
            A[r, k] = A[r, k] / A[k, k]
            A[r, k + 1 :] = A[r, k + 1 :] - A[r, k] * A[k, k + 1 :]
    return A, piv


def _lu_solve(A, piv, b):
    n = A.shape[0]
    x = np.array([b[p] for p in piv], dtype=object)
    for i in range(n):
        x[i] = x[i] - np.dot(A[i, :i], x[:i])
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - np.dot(A[i, i + 1 :], x[i + 1 :])) / A[i, i]
    return x


def _is_psd(M) -> bool:
    try:
        _cholesky(M)
        return True
    except _NotPD:
        return False


def _max_step(X, dX, frac) -> mpfr:
    """Largest step <= 1 along dX keeping X + alpha*dX positive definite."""
    one = mpfr(1)
    frac = mpfr(frac)
    # float estimate of the smallest generalized eigenvalue of (dX, X)
    alpha = one
    try:
        Xf = X.astype(float)
        dXf = dX.astype(float)
        Lf = np.linalg.cholesky(Xf)
        W = np.linalg.solve(Lf, np.linalg.solve(Lf, dXf).T)
        lam_min = float(np.linalg.eigvalsh((W + W.T) / 2).min())
        if lam_min < 0:
            alpha = min(one, frac * (-1 / mpfr(lam_min)))
    except (np.linalg.LinAlgError, ValueError, OverflowError):
        pass
    # exact verification with shrink fallback
    for _ in range(80):
        if _is_psd(X + alpha * dX):
            return alpha
        alpha = alpha * mpfr("0.8")
    return mpfr(0)


# -- preprocessing -------------------------------------------------------------


def _validate_and_scale(problem: SdpProblem, opts: SolveOptions):
    nblocks = len(problem.blocks)
    rows = []
    scales = []
    for row in problem.rows:
        norm2 = mpfr(0)
        for bi, mat in row.mats.items():
            if bi < 0 or bi >= nblocks:
                raise ValueError(f"row {row.label!r} references unknown block {bi}")
            n = problem.blocks[bi][1]
            if mat.shape != (n, n):
                raise ValueError(f"row {row.label!r} has wrong shape for block {bi}")
            norm2 += _dot(mat, mat)
        if not norm2 > 0:
            raise DegenerateRowsError(f"degenerate rows: zero row {row.label!r}")
        nu = gmpy2.sqrt(norm2) if opts.scale_rows else mpfr(1)
        scales.append(nu)
        rows.append(
            ConstraintRow(
                {bi: _sym(mat) / nu for bi, mat in row.mats.items()},
                mpfr(row.rhs) / nu,
                row.label,
            )
        )
    # Gram-matrix rank check on the scaled rows
    m = len(rows)
    gram = _zeros(m)
    for j in range(m):
        for k in range(j + 1):
            acc = mpfr(0)
            for bi, mat in rows[j].mats.items():
                other = rows[k].mats.get(bi)
                if other is not None:
                    acc += _dot(mat, other)
            gram[j, k] = acc
            gram[k, j] = acc
    tol = mpfr(2) ** (-(opts.precision // 2))
    L = _zeros(m)
    for i in range(m):
        for j in range(i + 1):
            s = gram[i, j] - np.dot(L[i, :j], L[j, :j])
            if i == j:
                if not s > tol:
                    raise DegenerateRowsError(
                        f"degenerate rows: row {rows[i].label!r} is linearly dependent"
                    )
                L[i, i] = gmpy2.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    return rows, scales


# -- the interior-point iteration ----------------------------------------------


class _Workspace:
    def __init__(self, problem: SdpProblem, rows):
        self.sizes = problem.block_sizes()
        self.nblocks = len(self.sizes)
        self.m = len(rows)
        self.rows = rows
        self.b = np.array([r.rhs for r in rows], dtype=object)
        self.C = [
            _sym(problem.costs[i]) if i in problem.costs else _zeros(n)
            for i, n in enumerate(self.sizes)
        ]
        # per block: stacked constraint matrices (m*n, n) and flattened (m, n*n)
        self.stacked = []
        self.flat = []
        for i, n in enumerate(self.sizes):
            st = _zeros(self.m * n, n)
            fl = _zeros(self.m, n * n)
            for j, row in enumerate(rows):
                mat = row.mats.get(i)
                if mat is not None:
                    st[j * n : (j + 1) * n, :] = mat
                    fl[j, :] = mat.reshape(-1)
            self.stacked.append(st)
            self.flat.append(fl)

    def apply_rows(self, X) -> np.ndarray:
        """[<A_j, X>]_j across blocks."""
        out = _zeros(self.m, 1).reshape(-1)
        for i, n in enumerate(self.sizes):
            vals = self.flat[i] @ X[i].reshape(-1)
            out = out + vals
        return out

    def adjoint(self, y):
        """[sum_j y_j A_{i,j}]_i."""
        out = []
        for i, n in enumerate(self.sizes):
            acc = (y[np.newaxis, :] @ self.flat[i]).reshape(n, n)
            out.append(_sym(acc))
        return out


def solve(problem: SdpProblem, opts: SolveOptions | None = None) -> SdpSolution:
    """Run the interior-point method; see module docstring for the scheme."""
    opts = opts or SolveOptions()
    with hp.prec(opts.precision):
        return _solve_inner(problem, opts)


def _solve_inner(problem: SdpProblem, opts: SolveOptions) -> SdpSolution:
    rows, scales = _validate_and_scale(problem, opts)
    ws = _Workspace(problem, rows)
    m, sizes = ws.m, ws.sizes
    ntotal = sum(sizes)
    gap_tol = mpfr(opts.gap_tol)
    feas_tol = mpfr(opts.feas_tol) if opts.feas_tol is not None else gap_tol
    minimize = problem.mode is Mode.MINIMIZE

    X = [_eye(n) for n in sizes]
    S = [_eye(n) for n in sizes]
    y = np.array([mpfr(0)] * m, dtype=object)

    b_scale = max([abs(v) for v in ws.b], default=mpfr(0)) + 1
    c_scale = max([max(abs(v) for v in C.flat) for C in ws.C], default=mpfr(0)) + 1

    best_merit = None
    best_iter = 0
    status = Status.STALLED
    it = 0

    for it in range(1, opts.max_iter + 1):
        # residuals
        rp = ws.b - ws.apply_rows(X)
        AtY = ws.adjoint(y)
        Rd = [ws.C[i] - S[i] - AtY[i] for i in range(ws.nblocks)]
        mu = sum(_dot(X[i], S[i]) for i in range(ws.nblocks)) / ntotal
        pobj = sum(_dot(ws.C[i], X[i]) for i in range(ws.nblocks))
        dobj = np.dot(ws.b, y)
        gap = abs(pobj - dobj)

        rp_rel = max((abs(v) for v in rp), default=mpfr(0)) / b_scale
        rd_rel = max(max(abs(v) for v in Rd[i].flat) for i in range(ws.nblocks)) / c_scale
        gap_rel = gap / (1 + abs(pobj) + abs(dobj))

        if opts.debug and minimize and rp_rel < mpfr("1e-25") and rd_rel < mpfr("1e-25"):
            assert pobj - dobj >= -mpfr("1e-20") * (1 + abs(pobj)), "weak duality violated"

        if minimize:
            merit = max(rp_rel, rd_rel, gap_rel, mu / (1 + abs(pobj)))
            if rp_rel <= feas_tol and rd_rel <= feas_tol and (
                gap_rel <= gap_tol and mu / (1 + abs(pobj)) <= gap_tol
            ):
                status = Status.OPTIMAL
                break
            if (
                opts.stop_below is not None
                and rp_rel <= mpfr("1e-25")
                and pobj < mpfr(opts.stop_below)
            ):
                status = Status.OPTIMAL
                break
            if (
                opts.stop_above is not None
                and rd_rel <= mpfr("1e-25")
                and dobj > mpfr(opts.stop_above)
            ):
                status = Status.OPTIMAL
                break
        else:
            center = max(
                max(abs(v) for v in (X[i] @ S[i] - _eye(sizes[i], mu)).flat) / mu
                for i in range(ws.nblocks)
            )
            merit = max(rp_rel, rd_rel)
            if rp_rel <= feas_tol and rd_rel <= feas_tol and center <= mpfr(opts.center_tol):
                status = Status.FEASIBLE
                break

        if best_merit is None or merit < best_merit * mpfr("0.99"):
            best_merit = merit
            best_iter = it
        elif it - best_iter > 150:
            ynorm = max((abs(v) for v in y), default=mpfr(0))
            if rp_rel > mpfr("1e-8") and ynorm > mpfr("1e10") and dobj > 0:
                status = Status.INFEASIBLE
            else:
                status = Status.STALLED
            break

        # factorizations of S and the (nonsymmetric) HKM Schur complement
        try:
            Sinv = [_spd_inverse(S[i]) for i in range(ws.nblocks)]
        except _NotPD:
            status = Status.STALLED
            break

        T = []  # per block: Sinv A_j X flattened into rows of an (m, n*n) array
        M = _zeros(m)
        for i, n in enumerate(sizes):
            U = ws.stacked[i] @ Sinv[i]  # blocks A_j Sinv
            Ut = U.reshape(m, n, n).transpose(0, 2, 1).reshape(m * n, n)  # Sinv A_j
            V = Ut @ X[i]  # Sinv A_j X
            Tf = _zeros(m, n * n)
            for j in range(m):
                Tf[j, :] = V[j * n : (j + 1) * n, :].reshape(-1)
            T.append(Tf)
            M = M + ws.flat[i] @ Tf.T
        try:
            Lu, piv = _lu_factor(M)
        except _NotPD:
            status = Status.STALLED
            break

        def direction(tau, Kc):
            # HKM kernel dX~ + Sinv dS X = tau Sinv - X (+ corrector), with dX
            # symmetrized only at the end; <A_j, dX> = rp_j stays exact.
            G = []
            for i, n in enumerate(sizes):
                g = -X[i] - Sinv[i] @ Rd[i] @ X[i]
                if tau != 0:
                    g = g + tau * Sinv[i]
                if Kc is not None:
                    g = g + Kc[i]
                G.append(g)
            rhs = rp.copy()
            for i in range(ws.nblocks):
                rhs = rhs - ws.flat[i] @ G[i].reshape(-1)
            dy = _lu_solve(Lu, piv, rhs)
            AtDy = ws.adjoint(dy)
            dS = [Rd[i] - AtDy[i] for i in range(ws.nblocks)]
            dX = []
            for i, n in enumerate(sizes):
                dX.append(_sym(G[i] + (dy[np.newaxis, :] @ T[i]).reshape(n, n)))
            return dX, dy, dS

        if minimize:
            dXa, dya, dSa = direction(mpfr(0), None)
            ap = min(_max_step(X[i], dXa[i], opts.step_frac) for i in range(ws.nblocks))
            ad = min(_max_step(S[i], dSa[i], opts.step_frac) for i in range(ws.nblocks))
            mu_aff = sum(
                _dot(X[i] + ap * dXa[i], S[i] + ad * dSa[i]) for i in range(ws.nblocks)
            ) / ntotal
            # shorter affine steps call for more centering (lower exponent)
            expo = 3 if min(ap, ad) > mpfr("0.2") else 1
            sigma = (mu_aff / mu) ** expo
            sigma = min(max(sigma, mpfr("1e-12")), mpfr(1))
            Kc = [
                -(Sinv[i] @ dSa[i] @ dXa[i])
                for i in range(ws.nblocks)
            ]
            dX, dy, dS = direction(sigma * mu, Kc)
        else:
            dX, dy, dS = direction(mu, None)

        ap = min(_max_step(X[i], dX[i], opts.step_frac) for i in range(ws.nblocks))
        ad = min(_max_step(S[i], dS[i], opts.step_frac) for i in range(ws.nblocks))
        if ap == 0 and ad == 0:
            status = Status.STALLED
            break
        X = [_sym(X[i] + ap * dX[i]) for i in range(ws.nblocks)]
        y = y + ad * dy
        S = [_sym(S[i] + ad * dS[i]) for i in range(ws.nblocks)]

    y_out = [y[j] / scales[j] for j in range(m)]
    pobj = sum(_dot(ws.C[i], X[i]) for i in range(ws.nblocks))
    dobj = np.dot(ws.b, y)
    return SdpSolution(
        X=X,
        y=y_out,
        S=S,
        duality_gap=abs(pobj - dobj),
        status=status,
        iterations=it,
        primal_objective=pobj + mpfr(problem.objective_offset),
        dual_objective=dobj + mpfr(problem.objective_offset),
        mu=sum(_dot(X[i], S[i]) for i in range(ws.nblocks)) / ntotal,
    )


def residuals(problem: SdpProblem, solution: SdpSolution) -> ResidualReport:
    """Float-level residual and eigenvalue estimates used for handoff decisions."""
    with hp.prec(hp.DEFAULT_PRECISION):
        rows = list(problem.rows)
        prim = 0.0
        for row in rows:
            acc = mpfr(0)
            for bi, mat in row.mats.items():
                acc += _dot(_sym(mat), solution.X[bi])
            prim = max(prim, abs(float(acc - mpfr(row.rhs))))
        dual = 0.0
        for i, (_, n) in enumerate(problem.blocks):
            acc = _zeros(n)
            for j, row in enumerate(rows):
                mat = row.mats.get(i)
                if mat is not None:
                    acc = acc + solution.y[j] * _sym(mat)
            C = problem.costs.get(i)
            resid = (C if C is not None else _zeros(n)) - solution.S[i] - acc
            dual = max(dual, float(max(abs(v) for v in resid.flat)))
        mins = []
        for i, (_, n) in enumerate(problem.blocks):
            Xf = solution.X[i].astype(float)
            mins.append(float(np.linalg.eigvalsh((Xf + Xf.T) / 2).min()))
    return ResidualReport(primal_residual=prim, dual_residual=dual, min_eigenvalues=mins)


def phase1_problem(problem: SdpProblem) -> SdpProblem:
    """Feasibility probe: minimize tau s.t. rows hold with tau-weighted slack.

    Starting from the identity primal point, tr(A_j X) + tau*(b_j - tr(A_j I))
    = b_j is feasible at (I, 1); the original problem is feasible iff the
    optimal tau is 0.
    """
    aux_index = len(problem.blocks)
    blocks = tuple(problem.blocks) + (("phase1", 1),)
    rows = LinearConstraintSet()
    for row in problem.rows:
        mats = dict(row.mats)
        gap = mpfr(row.rhs)
        for bi, mat in row.mats.items():
            n = problem.blocks[bi][1]
            gap -= sum(_sym(mat)[i, i] for i in range(n))
        mats[aux_index] = np.array([[gap]], dtype=object)
        rows.add(mats, row.rhs, row.label)
    costs = {aux_index: np.array([[mpfr(1)]], dtype=object)}
    return SdpProblem(blocks=blocks, costs=costs, rows=rows, mode=Mode.MINIMIZE)
