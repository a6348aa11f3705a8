"""End-to-end acceptance checks.

Every test here guards one headline property of the toolkit and prints a
single PASS/FAIL line with the measured margin, so a full run doubles as a
sign-off report.  Numbers in the test names fix the report order.
"""

import math

import numpy as np
import pytest

import supertomo as st
from supertomo import (
    ArtParams,
    EllipseSpec,
    Image,
    PreconditionerSpec,
    ScanGeometry,
    SolverBreakdown,
    SuperiorizationParams,
    SuperiorizationState,
    apply_M,
    apply_N,
    apply_N_inv_T,
    m_operator,
    n_inv_t_operator,
    n_operator,
    nonascending_vector,
    pcg_init,
    run_art,
    run_cg,
    run_pcg,
    s_tv,
    sup_art,
    sup_cg,
    sup_pcg,
    sup_tpcg,
    tv_value,
    u_cg,
    uniform_prior,
)
from supertomo.harness import io
from supertomo.harness.cli import main as cli_main


@pytest.fixture
def report(capfd):
    def _report(num: int, name: str, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} {num:02d} {name} — {detail}"
        with capfd.disabled():
            print(line, flush=True)
        assert ok, line
    return _report


def min_se(result):
    ses = [rec.se for rec in result.trace]
    k = int(np.argmin(ses))
    return ses[k], result.trace[k].k


def test_01_perturbation_norm_bound(desk, report):
    # every TV perturbation of a superiorized run obeys the geometric
    # budget n_steps * base_step * decay^((k-1)*n_steps), with no slack
    params = SuperiorizationParams(40, 1 - 1e-5, 1e-2)
    res = sup_pcg(
        desk.projection, desk.b, desk.x0,
        params=params, m_op=m_operator(PreconditionerSpec(1e-5, 0.8, 64, 64)),
        eps=1e-300, max_iter=15,
    )
    ratios = [
        sn / (params.n_steps * params.base_step * params.decay ** ((k - 1) * params.n_steps))
        for k, sn in enumerate(res.s_norms, start=1)
    ]
    ok = len(ratios) == 14 and max(ratios) <= 1.0
    report(1, "perturbation norms within geometric budget", ok,
           f"worst ‖s‖/budget {max(ratios):.6f} over {len(ratios)} steps")


def test_02_tv_never_ascends(report):
    rng = np.random.default_rng(2026)
    fails = strict = 0
    for _ in range(1000):
        image = Image(rng.standard_normal(256), 16, 16)
        params = SuperiorizationParams(
            int(rng.integers(1, 13)),
            float(rng.uniform(0.9, 0.999999)),
            float(10.0 ** rng.uniform(-3.0, -1.0)),
        )
        before = tv_value(image)
        s, _ = s_tv(image, SuperiorizationState(int(rng.integers(0, 60))), params)
        after = tv_value(Image(image.data + s, 16, 16))
        if after > before:
            fails += 1
        elif after < before:
            strict += 1
    report(2, "TV perturbations never increase TV", fails == 0,
           f"0 increases allowed, saw {fails}; {strict}/1000 strictly decreased")


def test_03_descent_direction_matches_finite_differences(report):
    rng = np.random.default_rng(11)
    n, h = 12, 1e-6
    worst = 0.0
    for _ in range(100):
        base = 0.15 * np.add.outer(np.arange(n), np.arange(n)).astype(float)
        data = (base + 0.02 * rng.standard_normal((n, n))).ravel()
        t = nonascending_vector(Image(data, n, n))
        fd = np.empty(n * n)
        for i in range(n * n):
            plus, minus = data.copy(), data.copy()
            plus[i] += h
            minus[i] -= h
            fd[i] = (tv_value(Image(plus, n, n)) - tv_value(Image(minus, n, n))) / (2 * h)
        t_fd = -fd / np.linalg.norm(fd)
        gap = np.abs(t - t_fd) / (np.abs(t_fd) + 1e-8)
        worst = max(worst, float(gap.max()))
    report(3, "descent direction matches TV finite differences", worst <= 1e-4,
           f"worst relative component gap {worst:.3e} (tol 1e-4)")


def test_04_cg_terminates_against_direct_solve(report):
    rng = np.random.default_rng(40)
    worst_res = worst_err = 0.0
    for _ in range(10):
        b = rng.standard_normal((20, 20))
        a = b.T @ b + 20 * np.eye(20)
        y = rng.standard_normal(20)
        want = np.linalg.solve(a, y)
        state = pcg_init(np.zeros(20), lambda v: a @ v, y)
        while state.k < 20:
            try:
                state = u_cg(state, lambda v: a @ v, y)
            except SolverBreakdown:
                break
        worst_res = max(worst_res, np.linalg.norm(a @ state.x - y) / np.linalg.norm(y))
        worst_err = max(worst_err, np.linalg.norm(state.x - want) / np.linalg.norm(want))
    ok = worst_res <= 1e-8 and worst_err <= 1e-6
    report(4, "CG finishes 20x20 SPD systems in ≤20 iterations", ok,
           f"worst residual {worst_res:.2e} (tol 1e-8), worst error vs direct solve {worst_err:.2e}")


def test_05_identity_preconditioner_reproduces_cg(desk, report):
    ident = PreconditionerSpec(1e-3, 0.6, 64, 64, identity=True)
    r1 = run_cg(desk.projection, desk.b, desk.x0, eps=1e-300, max_iter=15, keep_history=True)
    r2 = run_pcg(desk.projection, desk.b, desk.x0, m_op=m_operator(ident),
                 eps=1e-300, max_iter=15, keep_history=True)
    drift = max(
        np.linalg.norm(u - v) / max(np.linalg.norm(u), 1e-300)
        for u, v in zip(r1.history["x"], r2.history["x"])
    )
    report(5, "PCG with the identity filter retraces CG", drift <= 1e-14,
           f"max relative iterate drift {drift:.2e} over 15 iterations (tol 1e-14)")


def test_06_transformed_run_matches_untransformed(mid32, report):
    spec = PreconditionerSpec(1e-3, 0.6, 32, 32)
    n_op, n_inv = n_operator(spec), n_inv_t_operator(spec)
    params = SuperiorizationParams(10, 1 - 1e-5, 1e-2)
    common = dict(params=params, max_iter=10, keep_history=True)
    probe = sup_pcg(mid32.projection, mid32.b, mid32.x0,
                    m_op=m_operator(spec), eps=1e-300, **common)
    fs = [rec.f for rec in probe.trace]
    eps = math.sqrt(fs[-1] * fs[-2])  # threshold the last probe iteration crosses
    r1 = sup_pcg(mid32.projection, mid32.b, mid32.x0,
                 m_op=m_operator(spec), eps=eps, **common)
    xhat0 = Image(n_inv(mid32.x0.data), 32, 32)
    r2 = sup_tpcg(mid32.projection, mid32.b, xhat0,
                  n_op=n_op, n_inv_op=n_inv, eps=eps, **common)
    drift = max(
        np.linalg.norm(x - n_op(xhat)) / max(np.linalg.norm(x), 1e-300)
        for x, xhat in zip(r1.history["x"][1:], r2.history["x"][1:])
    )
    f_gap = max(abs(a.f - b.f) / a.f for a, b in zip(r1.trace, r2.trace))
    ok = (
        drift <= 1e-6
        and r1.k == r2.k
        and r1.status == r2.status == "converged"
        and f_gap <= 1e-9
    )
    report(6, "transformed-coordinates run matches plain run", ok,
           f"max ‖x − N x̂‖/‖x‖ {drift:.2e} (tol 1e-6), both stop at k={r1.k}, "
           f"objective gap {f_gap:.1e}")


def test_07_convergence_above_attainable_residual(small16, tmp_path, report):
    dense = small16.projection.to_dense()
    lsq = np.linalg.lstsq(dense, small16.b, rcond=None)[0]
    eps0 = float(np.sum((dense @ lsq - small16.b) ** 2))
    io.write_sinogram(tmp_path / "s.vec", st.Sinogram(small16.b, small16.geom))
    sets = {
        "sinogram": tmp_path / "s.vec", "algorithm": "suppcg",
        "grid_rows": 16, "grid_cols": 16, "n_angles": 18, "n_rays": 23,
        "ray_spacing": 0.3, "pixel_size": 0.3,
        "K": 10, "a": 0.99, "gamma": 0.05, "mu": 1e-3, "rho": 0.6,
        "eps": f"{1.01 * eps0:.17g}", "max_iter": 5000,
    }
    argv = ["reconstruct", "--out", str(tmp_path / "out")]
    for key, value in sets.items():
        argv += ["--set", f"{key}={value}"]
    code = cli_main(argv)
    curves = io.read_curves_csv(tmp_path / "out" / "curves.csv")
    ok = code == 0 and curves[-1].k < 5000
    report(7, "run converges once the threshold clears the attainable residual", ok,
           f"floor {eps0:.6f}, threshold 1.01x, exit code {code} at k={curves[-1].k} "
           f"(cap 5000)")


def test_08_preconditioner_soundness(report):
    spec = PreconditionerSpec(1e-3, 0.6, 12, 12)
    rng = np.random.default_rng(80)
    pd_min = np.inf
    sym = factor = round_trip = 0.0
    for _ in range(100):
        u, v = rng.standard_normal(144), rng.standard_normal(144)
        mu_, mv = apply_M(u, spec), apply_M(v, spec)
        scale = np.linalg.norm(u) * np.linalg.norm(mv)
        sym = max(sym, abs(float(u @ mv - v @ mu_)) / scale)
        pd_min = min(pd_min, float(v @ mv) / float(v @ v))
        factor = max(factor, np.linalg.norm(apply_N(apply_N(v, spec), spec) - mv)
                     / np.linalg.norm(mv))
        round_trip = max(round_trip, np.linalg.norm(apply_N_inv_T(apply_N(v, spec), spec) - v)
                         / np.linalg.norm(v))

    geom = ScanGeometry(6, 11, 0.4, 8, 8, 0.4)
    mat = st.build_projection_matrix(geom)
    spec8 = PreconditionerSpec(1e-3, 0.6, 8, 8)
    a = np.empty((64, 64))
    m_dense = np.empty((64, 64))
    n_dense = np.empty((64, 64))
    for j in range(64):
        e = np.zeros(64)
        e[j] = 1.0
        a[:, j] = st.normal_op(mat, e)
        m_dense[:, j] = apply_M(e, spec8)
        n_dense[:, j] = apply_N(e, spec8)
    ma = np.sort_complex(np.linalg.eigvals(m_dense @ a))
    nan = np.sort_complex(np.linalg.eigvals(n_dense @ a @ n_dense.T))
    spec_gap = float(np.max(np.abs(ma - nan))) / max(float(np.abs(ma).max()), 1.0)

    ok = (sym <= 1e-10 and pd_min > 0 and factor <= 1e-10
          and round_trip <= 1e-10 and spec_gap <= 1e-8)
    report(8, "filter operator is SPD, factors as N·N, and preserves spectra", ok,
           f"symmetry {sym:.1e}, min Rayleigh {pd_min:.2e}, N∘N vs M {factor:.1e}, "
           f"inverse round trip {round_trip:.1e}, eigenvalue gap {spec_gap:.1e}")


def test_09_superiorization_improves_roi_error(desk, report):
    # all runs share one noisy scan; each superiorized variant keeps its
    # plain counterpart's tuning so only the TV steps differ
    common = dict(eps=1e-300, max_iter=15, phantom=desk.phantom, se_mask=desk.mask)
    args = (desk.projection, desk.b, desk.x0)

    cg = run_cg(*args, **common)
    supcg = sup_cg(*args, params=SuperiorizationParams(40, 1 - 1e-5, 5e-2),
                   eps_prime=5e-301, max_iter=15,
                   phantom=desk.phantom, se_mask=desk.mask)

    shared = m_operator(PreconditionerSpec(1e-3, 0.6, 64, 64))
    pcg = run_pcg(*args, m_op=shared, **common)
    suppcg = sup_pcg(*args, m_op=shared,
                     params=SuperiorizationParams(40, 1 - 1e-5, 1e-2), **common)

    art_params = ArtParams(
        snr=5.0, relaxation=1e-2,
        gray_prior=uniform_prior(desk.projection, desk.b, 64, 64),
    )
    art = run_art(*args, art_params=art_params, **common)
    supart = sup_art(*args, art_params=art_params,
                     params=SuperiorizationParams(10, 1 - 1e-5, 1e-2), **common)

    pairs = {name: (min_se(a), min_se(b))
             for name, a, b in (("cg", cg, supcg), ("pcg", pcg, suppcg), ("art", art, supart))}
    ok = all(sup[0] <= plain[0] for plain, sup in pairs.values())
    ok = ok and pairs["pcg"][1][1] <= pairs["cg"][1][1]
    detail = ", ".join(
        f"{name}: {sup[0]:.4f}@{sup[1]} ≤ {plain[0]:.4f}@{plain[1]}"
        for name, (plain, sup) in pairs.items()
    )
    report(9, "superiorized runs reach lower region-of-interest error", ok,
           detail + " (superiorized first)")


def test_10_projector_oracles(desk, report):
    rng = np.random.default_rng(100)
    adj = 0.0
    for _ in range(100):
        u = rng.standard_normal(desk.projection.n_rows)
        v = rng.standard_normal(desk.projection.n_cols)
        rv, rtu = st.matvec(desk.projection, v), st.rmatvec(desk.projection, u)
        adj = max(adj, abs(float(u @ rv - rtu @ v))
                  / (np.linalg.norm(u) * np.linalg.norm(rv)))

    chords = st.build_projection_matrix(ScanGeometry(4, 1, 1.0, 1, 1, 1.0)).to_dense().ravel()
    chord_gap = float(np.max(np.abs(chords - [1.0, math.sqrt(2.0), 1.0, math.sqrt(2.0)])))

    geom = ScanGeometry(8, 21, 0.2, 15, 15, 0.2)
    mat = st.build_projection_matrix(geom)
    disk = st.generate_phantom([EllipseSpec(0.0, 0.0, 1.1, 1.1, 0.0, 1.0)], geom)
    sino = st.matvec(mat, disk.data).reshape(8, 21)
    step = math.pi / 8
    orbit = 0.0
    for i, theta in enumerate(geom.angles()):
        j = int(round(((math.pi / 2 - theta) % math.pi) / step)) % 8
        mirror = int(round(((math.pi - theta) % math.pi) / step)) % 8
        orbit = max(orbit, float(np.max(np.abs(sino[i] - sino[j]))),
                    float(np.max(np.abs(sino[i] - sino[mirror]))))

    ok = adj <= 1e-10 and chord_gap <= 1e-12 and orbit <= 1e-8
    report(10, "projector adjoint, chord lengths, and disk symmetry hold", ok,
           f"adjoint {adj:.1e} (tol 1e-10), chords {chord_gap:.1e} (tol 1e-12), "
           f"rotation drift {orbit:.1e} (tol 1e-8)")
