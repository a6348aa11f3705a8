"""Conjugate-gradient family and relaxed ART, plain and superiorized.

All drivers share one outer-loop shape: the iterate published at counter k
is the half iterate x_{k-1/2} (the previous full iterate plus its
perturbation; the perturbation is zero for the unsuperiorized runs), the
while test compares the squared residual f at that half iterate against
eps, and the trace carries one record per test.  On termination the driver
returns the half iterate, not the last full update.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .linops import Image, SparseMatrix, normal_op, rmatvec
from .metrics import EllipseMask, residual_f, selective_error
from .tv import SuperiorizationParams, SuperiorizationState, s_tv, tv_value

# inner products this small are treated as exact breakdown (the Krylov
# space is exhausted), which doubles as a convergence signal
BREAKDOWN_EPS = 1e-30


class SolverBreakdown(RuntimeError):
    """Raised when a conjugate-gradient denominator vanishes."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (gradient norm {residual:.3e})")
        self.residual = residual


@dataclass
class PcgState:
    """One conjugate-gradient iterate: position, direction, mapped direction.

    ``h`` always equals the system operator applied to ``p``; ``g`` is the
    gradient evaluated at the point the last update started from.
    """

    x: np.ndarray
    p: np.ndarray
    h: np.ndarray
    k: int
    g: np.ndarray | None = None


def pcg_init(x0: np.ndarray, a_op, y: np.ndarray, m_op=None) -> PcgState:
    """Steepest-descent start shared by the whole CG family.

    Computes g0, z0 = M g0, p0 = -z0, h0 = A p0 and the exact line-search
    step to x1.  Raises SolverBreakdown when p0' h0 vanishes (x0 already
    stationary or the operator is singular along p0).
    """
    g0 = a_op(x0) - y
    z0 = g0 if m_op is None else m_op(g0)
    p0 = -z0
    h0 = a_op(p0)
    ph = float(p0 @ h0)
    if abs(ph) <= BREAKDOWN_EPS:
        raise SolverBreakdown("initial direction is degenerate", float(np.linalg.norm(g0)))
    alpha = -float(g0 @ p0) / ph
    return PcgState(x=x0 + alpha * p0, p=p0, h=h0, k=1, g=g0)


def u_pcg(state: PcgState, a_op, y: np.ndarray, m_op=None) -> PcgState:
    """One preconditioned CG update from (x, p, h) to (x', p', h').

    The gradient is recomputed from the incoming x, so the update remains
    valid when the caller has perturbed x between steps.
    """
    g = a_op(state.x) - y
    z = g if m_op is None else m_op(g)
    ph_prev = float(state.p @ state.h)
    if abs(ph_prev) <= BREAKDOWN_EPS:
        raise SolverBreakdown("previous direction is degenerate", float(np.linalg.norm(g)))
    beta = float(z @ state.h) / ph_prev
    p = -z + beta * state.p
    h = a_op(p)
    ph = float(p @ h)
    if abs(ph) <= BREAKDOWN_EPS:
        raise SolverBreakdown("search direction is degenerate", float(np.linalg.norm(g)))
    alpha = -float(g @ p) / ph
    return PcgState(x=state.x + alpha * p, p=p, h=h, k=state.k + 1, g=g)


def u_cg(state: PcgState, a_op, y: np.ndarray) -> PcgState:
    """Unpreconditioned update; identical to u_pcg with no preconditioner."""
    return u_pcg(state, a_op, y, None)


def u_tpcg(state: PcgState, n_op, a_op, y: np.ndarray) -> PcgState:
    """Update in transformed coordinates: operator N A N, right side N y.

    N is symmetric, so the transformed system is N A N^T x^ = N y and
    u_cg on it reproduces u_pcg on the original system through x = N^T x^.
    """
    return u_pcg(state, lambda v: n_op(a_op(n_op(v))), n_op(y), None)


@dataclass(frozen=True)
class CurveRecord:
    """Per-iteration sample of the published half iterate."""

    k: int
    seconds: float
    f: float
    tv: float
    se: float  # NaN when no reference image was supplied


@dataclass
class RunResult:
    k: int
    x_out: Image
    x_image: Image  # image-domain rendition of x_out (differs only for sup_tpcg)
    trace: list[CurveRecord]
    status: str  # "converged" | "max_iter" | "breakdown"
    s_norms: list[float] = field(default_factory=list)
    ells: list[int] = field(default_factory=list)
    history: dict | None = None

    @property
    def terminated(self) -> bool:
        return self.status == "converged"


def _identity(v: np.ndarray) -> np.ndarray:
    return v


def _run_krylov(
    projection: SparseMatrix,
    b: np.ndarray,
    x0: Image,
    *,
    eps: float,
    max_iter: int = 1000,
    m_op=None,
    sup: SuperiorizationParams | None = None,
    a_op=None,
    rhs=None,
    to_image=None,
    from_image=None,
    phantom: Image | None = None,
    se_mask: EllipseMask | None = None,
    keep_history: bool = False,
) -> RunResult:
    if eps <= 0:
        raise ValueError("eps must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be a positive integer")
    rows, cols = x0.rows, x0.cols
    if a_op is None:
        a_op = lambda v: normal_op(projection, v)  # noqa: E731
    if rhs is None:
        rhs = rmatvec(projection, np.asarray(b, dtype=np.float64))
    to_image = to_image or _identity
    from_image = from_image or _identity

    t0 = time.perf_counter()
    init_breakdown = False
    try:
        state = pcg_init(x0.data, a_op, rhs, m_op)
    except SolverBreakdown:
        state = PcgState(x=x0.data, p=np.zeros_like(x0.data), h=np.zeros_like(x0.data), k=1)
        init_breakdown = True

    history: dict | None = None
    if keep_history:
        history = {
            "x": [x0.data, state.x],
            "x_half": [x0.data],
            "p": [state.p],
            "h": [state.h],
            "g": [state.g],
            "s": [],
        }

    ell = SuperiorizationState(0)
    x_half = x0.data
    k = 1
    trace: list[CurveRecord] = []
    s_norms: list[float] = []
    ells: list[int] = []
    status = None
    while True:
        img_half = to_image(x_half)
        fval = residual_f(img_half, projection, b)
        tv = tv_value(Image(img_half, rows, cols))
        se = (
            selective_error(Image(img_half, rows, cols), phantom, se_mask)
            if phantom is not None and se_mask is not None
            else float("nan")
        )
        trace.append(CurveRecord(k, time.perf_counter() - t0, fval, tv, se))
        if fval <= eps:
            status = "converged"
            break
        if init_breakdown:
            status = "breakdown"
            break
        if k >= max_iter:
            status = "max_iter"
            break

        if sup is not None:
            s, ell = s_tv(Image(to_image(state.x), rows, cols), ell, sup)
            s_norms.append(float(np.linalg.norm(s)))
            ells.append(ell.trials)
            x_half_next = state.x + from_image(s)
        else:
            s = None
            x_half_next = state.x
        try:
            state = u_pcg(
                PcgState(x=x_half_next, p=state.p, h=state.h, k=state.k, g=state.g),
                a_op,
                rhs,
                m_op,
            )
        except SolverBreakdown:
            status = "breakdown"
            break
        if history is not None:
            history["s"].append(s)
            history["x"].append(state.x)
            history["x_half"].append(x_half_next)
            history["p"].append(state.p)
            history["h"].append(state.h)
            history["g"].append(state.g)
        x_half = x_half_next
        k += 1

    return RunResult(
        k=k,
        x_out=Image(x_half, rows, cols),
        x_image=Image(to_image(x_half), rows, cols),
        trace=trace,
        status=status,
        s_norms=s_norms,
        ells=ells,
        history=history,
    )


def run_cg(projection, b, x0, *, eps, max_iter=1000, **kw) -> RunResult:
    """Plain CG on the normal equations of the measurement system."""
    return _run_krylov(projection, b, x0, eps=eps, max_iter=max_iter, **kw)


def run_pcg(projection, b, x0, *, m_op, eps, max_iter=1000, **kw) -> RunResult:
    """Preconditioned CG; m_op maps gradients through the preconditioner."""
    return _run_krylov(projection, b, x0, m_op=m_op, eps=eps, max_iter=max_iter, **kw)


def sup_cg(projection, b, x0, *, params, eps_prime, max_iter=1000, **kw) -> RunResult:
    """Superiorized CG.

    The stopping threshold eps_prime refers to the halved objective
    0.5*||R x - b||^2, hence the doubling here; the trace still records
    the plain squared residual.
    """
    return _run_krylov(
        projection, b, x0, sup=params, eps=2.0 * eps_prime, max_iter=max_iter, **kw
    )


def sup_pcg(projection, b, x0, *, params, m_op, eps, max_iter=1000, **kw) -> RunResult:
    """Superiorized preconditioned CG (perturb, then one u_pcg update)."""
    return _run_krylov(
        projection, b, x0, m_op=m_op, sup=params, eps=eps, max_iter=max_iter, **kw
    )


def sup_tpcg(
    projection,
    b,
    xhat0: Image,
    *,
    params,
    n_op,
    n_inv_op,
    eps,
    max_iter=1000,
    **kw,
) -> RunResult:
    """Superiorized CG in N-transformed coordinates.

    Perturbations are generated in the image domain (on N x^) and carried
    back through N^{-1}; the while test and the trace likewise evaluate the
    image-domain iterate N x^, so runs are directly comparable with sup_pcg.
    x_out stays in transformed coordinates; x_image carries N x^ out.
    """
    a_base = lambda v: normal_op(projection, v)  # noqa: E731
    rhs_hat = n_op(rmatvec(projection, np.asarray(b, dtype=np.float64)))
    return _run_krylov(
        projection,
        b,
        xhat0,
        sup=params,
        eps=eps,
        max_iter=max_iter,
        a_op=lambda v: n_op(a_base(n_op(v))),
        rhs=rhs_hat,
        to_image=n_op,
        from_image=n_inv_op,
        **kw,
    )


# --- relaxed ART -----------------------------------------------------------


@dataclass(frozen=True)
class ArtParams:
    """Row weighting and relaxation for the regularized Kaczmarz sweep.

    snr scales the measurement block against the prior block; relaxation is
    the fraction of each hyperplane projection taken.  gray_prior=None drops
    the prior rows entirely (plain Kaczmarz on the measurements).
    """

    snr: float
    relaxation: float
    gray_prior: Image | None

    def __post_init__(self):
        if self.snr <= 0:
            raise ValueError("snr must be positive")
        if self.relaxation <= 0:
            raise ValueError("relaxation must be positive")


def estimate_gray_value(projection: SparseMatrix, b: np.ndarray) -> float:
    """Average image value consistent with all measured data.

    Total measured integral divided by the total intersection length; exact
    whenever the underlying image is constant over the scanned grid.
    """
    total_length = float(np.sum(projection.values))
    if total_length <= 0:
        raise ValueError("projection matrix has no nonzero entries")
    return float(np.sum(b)) / total_length


def uniform_prior(projection: SparseMatrix, b, rows: int, cols: int) -> Image:
    return Image.full(rows, cols, estimate_gray_value(projection, np.asarray(b)))


def _row_norms_sq(a: SparseMatrix) -> np.ndarray:
    out = np.zeros(a.n_rows)
    sq = a.values * a.values
    counts = np.diff(a.row_ptr)
    if sq.size:
        idx = np.minimum(a.row_ptr[:-1], sq.size - 1)
        out = np.add.reduceat(sq, idx)
        out[counts == 0] = 0.0
    return out


def art_sweep(
    x: Image,
    projection: SparseMatrix,
    b: np.ndarray,
    params: ArtParams,
    row_norms_sq: np.ndarray | None = None,
) -> Image:
    """One relaxed Kaczmarz cycle over the stacked system [snr*R; I].

    Measurement rows come first in their stored (angle-major) order, then
    the unit prior rows; each visit moves the iterate a ``relaxation``
    fraction toward the row's hyperplane.  Zero rows are skipped.
    """
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (projection.n_rows,):
        raise ValueError(
            f"art_sweep: matrix has {projection.n_rows} rows but b has shape {b.shape}"
        )
    if x.data.size != projection.n_cols:
        raise ValueError(
            f"art_sweep: matrix has {projection.n_cols} columns but the image has "
            f"{x.data.size} pixels"
        )
    if row_norms_sq is None:
        row_norms_sq = _row_norms_sq(projection)
    r = params.snr
    lam = params.relaxation
    data = x.data.copy()
    row_ptr, col_idx, values = projection.row_ptr, projection.col_idx, projection.values
    for i in range(projection.n_rows):
        rn = row_norms_sq[i]
        if rn == 0.0:
            continue
        lo, hi = row_ptr[i], row_ptr[i + 1]
        cols = col_idx[lo:hi]
        vals = values[lo:hi]
        resid = r * b[i] - r * float(vals @ data[cols])
        data[cols] += (lam * resid / (r * r * rn)) * (r * vals)
    if params.gray_prior is not None:
        # unit rows touch disjoint components, so the sequential pass over
        # them is exactly this vectorized blend
        data += lam * (params.gray_prior.data - data)
    return Image(data, x.rows, x.cols)


def _run_art(
    projection: SparseMatrix,
    b: np.ndarray,
    x0: Image,
    *,
    art_params: ArtParams,
    eps: float,
    max_iter: int = 1000,
    sup: SuperiorizationParams | None = None,
    phantom: Image | None = None,
    se_mask: EllipseMask | None = None,
) -> RunResult:
    if eps <= 0:
        raise ValueError("eps must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be a positive integer")
    rows, cols = x0.rows, x0.cols
    norms = _row_norms_sq(projection)
    t0 = time.perf_counter()
    x = art_sweep(x0, projection, b, art_params, norms).data
    x_half = x0.data
    ell = SuperiorizationState(0)
    k = 1
    trace: list[CurveRecord] = []
    s_norms: list[float] = []
    ells: list[int] = []
    status = None
    while True:
        fval = residual_f(x_half, projection, b)
        tv = tv_value(Image(x_half, rows, cols))
        se = (
            selective_error(Image(x_half, rows, cols), phantom, se_mask)
            if phantom is not None and se_mask is not None
            else float("nan")
        )
        trace.append(CurveRecord(k, time.perf_counter() - t0, fval, tv, se))
        if fval <= eps:
            status = "converged"
            break
        if k >= max_iter:
            status = "max_iter"
            break
        if sup is not None:
            s, ell = s_tv(Image(x, rows, cols), ell, sup)
            s_norms.append(float(np.linalg.norm(s)))
            ells.append(ell.trials)
            x_half = x + s
        else:
            x_half = x
        x = art_sweep(Image(x_half, rows, cols), projection, b, art_params, norms).data
        k += 1

    out = Image(x_half, rows, cols)
    return RunResult(
        k=k,
        x_out=out,
        x_image=out,
        trace=trace,
        status=status,
        s_norms=s_norms,
        ells=ells,
    )


def run_art(projection, b, x0, *, art_params, eps, max_iter=1000, **kw) -> RunResult:
    """Plain relaxed ART (one Kaczmarz cycle per outer iteration)."""
    return _run_art(
        projection, b, x0, art_params=art_params, eps=eps, max_iter=max_iter, **kw
    )


def sup_art(
    projection, b, x0, *, art_params, params, eps, max_iter=1000, **kw
) -> RunResult:
    """Superiorized ART: TV perturbation before every sweep."""
    return _run_art(
        projection,
        b,
        x0,
        art_params=art_params,
        eps=eps,
        max_iter=max_iter,
        sup=params,
        **kw,
    )
