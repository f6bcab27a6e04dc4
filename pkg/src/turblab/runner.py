"""Run orchestration: one experiment per config, sweeps over a parameter axis.

Every run writes into its own directory: ``series.csv``, ``summary.csv``,
``metadata.json`` and, for field experiments, checkpoints.  Outputs carry no
timestamps, so equal configs give byte-identical files.
"""

import copy
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import combustion as cb
from .checkpoint import read_checkpoint, write_checkpoint
from .config import config_hash, set_path, validate
from .errors import ConfigError, TurblabError
from .fields import ChannelDomain, PeriodicBox, ScalarField, StripDomain, VectorField
from .flow import NSE2D, NSE3D, FlowHistory, band_forcing, energy, enstrophy, flow_diagnostics, taylor_green
from .series import DiagnosticsSeries, read_csv, write_csv

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_ACCEPT = 0, 2, 3, 4


@dataclass
class RunReport:
    status: int
    outdir: Path
    summary: dict = field(default_factory=dict)
    message: str = ""
    checkpoint: str = None


def output_root(default="turblab_out"):
    return Path(os.environ.get("TURBLAB_OUT", default))


def _write_meta(outdir, cfg, extra):
    meta = {"config": cfg.data, "config_hash": cfg.hash, "kind": cfg.kind}
    meta.update(extra)
    (outdir / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=float) + "\n")


def _write_summary(outdir, cfg, summary):
    keys = list(summary)
    write_csv(outdir / "summary.csv", keys, [[summary[k] for k in keys]], cfg.hash)


# --- experiments -----------------------------------------------------------------


def _combustion(cfg, outdir):
    kappa, v0 = cfg["kappa"], cfg["v0"]
    l = kappa / v0
    kind = cfg["profile.kind"]
    U = float(cfg.get("profile.amplitude", 0.0))
    # laminar fronts need the reaction length resolved; sheared fronts need room to tilt
    X = cfg.get("grid.X") or (50 * l if kind == "none" or U == 0 else max(20.0, 40 * l))
    d = StripDomain(X=X, nx=cfg["grid.nx"], ny=cfg["grid.ny"])
    flow = None
    if kind != "none" and U != 0:
        flow = cb.shear_profile(d, kind, U, cfg.get("profile.table"))
    state = cb.FrontState(cb.initial_front(d, kappa, v0), kappa, v0, flow=flow)
    solver = cb.KPPSolver(d, kappa, v0, scheme=cfg.get("scheme"))
    run = cb.run_front(state, cfg["t_end"], solver=solver, sample_every=cfg.get("sample_every"))
    write_csv(
        outdir / "series.csv",
        ["t", "V", "product_functional"],
        zip(run.t, run.V, run.product),
        cfg.hash,
    )
    pos = run.t > 0
    c3 = float(np.min(run.V[pos] / cb.thm3_bound(v0, kappa, run.t[pos])))
    summary = {"U": U, "avg_V": float("nan"), "thm4_bound": float("nan"), "tau0": float("nan"), "empirical_C3": c3}
    if flow is not None:
        part = cb.compute_partition(flow)
        bound, tau0 = cb.thm4_bound(part, flow, kappa, v0)
        tau = cfg.get("tau") or tau0
        summary.update(thm4_bound=bound, tau0=tau0)
        if tau <= run.t[-1] * (1 + 1e-12):
            summary["avg_V"] = cb.avg_burning_rate((run.t, run.V), tau)
    elif cfg.get("tau"):
        summary["avg_V"] = cb.avg_burning_rate((run.t, run.V), cfg["tau"])
    summary["min_product"] = float(run.product.min())
    summary["max_principle_flags"] = len(run.state.flags)
    return summary, {"X": X, "constants": {"C3": 1.0, "C_plus": 1.0, "C_minus": 1.0}}


def _convection(cfg, outdir):
    from .convection.boussinesq import BoussinesqState, run_boussinesq
    from .convection.nusselt import fluctuation_n, nusselt_and_identities, nusselt_bounds
    from .convection.rotating import RotatingIPState, run_rotating

    d = ChannelDomain(L=cfg.get("L"), nx=cfg["grid.nx"], nz=cfg["grid.nz"])
    t_end = cfg["t_end"]
    if cfg["model"] == "boussinesq":
        Ra, sigma = cfg["Ra"], cfg.get("sigma")
        state = BoussinesqState.perturbed(d, sigma, Ra, amplitude=cfg.get("amplitude", 1e-2), seed=cfg.seed)
        run = run_boussinesq(state, t_end, dt_max=cfg.get("dt_max"), sample_every=cfg.get("sample_every"))
        hist, final = run.history, run.state
    else:
        Ra, sigma = cfg["R"], None
        E = float(cfg.get("E"))
        _, z = d.mesh()
        rng = np.random.default_rng(cfg.seed)
        x, _ = d.mesh()
        pert = cfg.get("amplitude", 1e-2) * np.sin(np.pi * z) * np.cos(2 * np.pi * x / d.L + rng.uniform(0, 2 * np.pi))
        pert[:, [0, -1]] = 0.0
        state = RotatingIPState(ScalarField(d, 1.0 - z + pert), E, Ra)
        final, hist = run_rotating(state, t_end, dt_max=cfg.get("dt_max"), sample_every=cfg.get("sample_every"))
    t = hist.array("t")
    wT = hist.array("wT")
    running = [1.0 + (np.trapezoid(wT[: i + 1], t[: i + 1]) / (t[i] - t[0]) if i else wT[0]) for i in range(len(t))]
    write_csv(
        outdir / "series.csv",
        ["t", "N_running", "I_T", "I_u", "n"],
        zip(t, running, hist.array("grad_T_sq"), hist.array("grad_u_sq"), hist.array("n")),
        cfg.hash,
    )
    t_start = t[0] + cfg.get("spinup") * (t[-1] - t[0])
    stats = nusselt_and_identities(hist, Ra, t_start=t_start, sigma=sigma or 1.0)
    n = fluctuation_n(hist, t_start)
    if cfg["model"] == "boussinesq":
        b = nusselt_bounds(Ra=Ra, n=n)
        summary = {"Ra": Ra, "N": stats["N"], "thm5": b["thm5"], "thm7_full": b["thm7_full"], "thm7_ip": b["thm7_ip"]}
    else:
        b = nusselt_bounds(E=float(cfg.get("E")), R=Ra)
        summary = {"R": Ra, "E": float(cfg.get("E")), "N": stats["N"], "thm6": b["thm6"]}
    summary.update(I_T=stats["I_T"], I_u=stats["I_u"], res_T=stats["res_T"], res_u=stats["res_u"], n=n)
    summary["low_confidence"] = int(stats["low_confidence"])
    summary["stationary"] = int(stats["stationary"])
    chk = outdir / "final_T.tlb"
    write_checkpoint(chk, final.T, {"t": final.t})
    return summary, {"spinup_fraction": cfg.get("spinup"), "constants": "all 1", "window": stats["window"]}


def forced_2d(n, nu, k_lo, k_hi, amplitude, t_end, seed=0, courant=0.4, spinup=0.2, sample_dt=None, on_sample=None):
    """Forced 2D run from rest; returns (series, snapshots after spin-up, omegas)."""
    box = PeriodicBox(2, n)
    f = band_forcing(box, k_lo, k_hi, amplitude, seed=seed)
    sol = NSE2D(box, nu, f)
    wh = np.zeros((n, n // 2 + 1), dtype=complex)
    series = DiagnosticsSeries(["energy", "enstrophy", "eps", "eta", "tau_inv", "osc", "bkm"])
    hist = FlowHistory()
    snaps, omegas = [], []
    t = 0.0
    sample_dt = sample_dt or t_end / 100
    next_sample = 0.0
    hx = box.spacing[0]
    while True:
        if t >= next_sample - 1e-12 or t >= t_end - 1e-12:
            u = VectorField(box, sol.velocity(wh))
            om = ScalarField(box, np.fft.irfft2(wh, s=box.n))
            diag = flow_diagnostics(u, om, nu, hist, t)
            series.append(t, energy=energy(u), enstrophy=enstrophy(om), eps=diag.eps, eta=diag.eta,
                          tau_inv=diag.tau_inv, osc=diag.osc, bkm=diag.bkm)
            if t >= spinup * t_end - 1e-12:
                snaps.append(u)
                omegas.append(om)
            if on_sample:
                on_sample(t, u, om)
            next_sample += sample_dt
        if t >= t_end - 1e-12:
            break
        umax = np.abs(sol.velocity(wh)).max()
        dt = min(courant * hx / max(umax, 1e-12), next_sample - t, t_end - t, 0.1)
        wh = sol.step_hat(wh, dt, check=False)
        t += dt
    return series, snaps, omegas


def forced_3d(n, nu, k_lo, k_hi, amplitude, t_end, seed=0, courant=0.4, spinup=0.2, sample_dt=None, on_sample=None):
    box = PeriodicBox(3, n)
    f = band_forcing(box, k_lo, k_hi, amplitude, seed=seed, ncomp=3)
    sol = NSE3D(box, nu, f)
    uh = np.zeros((3,) + sol.k2.shape, dtype=complex)
    series = DiagnosticsSeries(["energy", "enstrophy", "eps", "eta", "tau_inv", "osc", "bkm"])
    hist = FlowHistory()
    snaps = []
    t = 0.0
    sample_dt = sample_dt or t_end / 50
    next_sample = 0.0
    hx = box.spacing[0]
    while True:
        if t >= next_sample - 1e-12 or t >= t_end - 1e-12:
            u = VectorField(box, sol.ifft(uh))
            om = VectorField(box, sol.ifft(sol.curl_hat(uh)))
            diag = flow_diagnostics(u, om, nu, hist, t)
            series.append(t, energy=energy(u), enstrophy=enstrophy(om), eps=diag.eps, eta=diag.eta,
                          tau_inv=diag.tau_inv, osc=diag.osc, bkm=diag.bkm)
            if t >= spinup * t_end - 1e-12:
                snaps.append(u)
            if on_sample:
                on_sample(t, u, om)
            next_sample += sample_dt
        if t >= t_end - 1e-12:
            break
        umax = np.abs(sol.ifft(uh)).max()
        dt = min(courant * hx / max(umax, 1e-12), next_sample - t, t_end - t, 0.1)
        uh = sol.step_hat(uh, dt, check=False)
        t += dt
    return series, snaps


def _nse(cfg, outdir):
    dim = 2 if cfg.kind == "nse2d" else 3
    every = cfg.get("checkpoint_every")
    count = [0]

    def keep(t, u, om):
        count[0] += 1
        if every and (count[0] - 1) % every == 0:
            write_checkpoint(outdir / f"u_{count[0] - 1:05d}.tlb", u, {"t": t, "nu": cfg["nu"]})

    args = (cfg["grid.n"], cfg["nu"], cfg["forcing.k_lo"], cfg["forcing.k_hi"], cfg["forcing.amplitude"], cfg["t_end"])
    kw = dict(seed=cfg.seed, courant=cfg.get("courant"), spinup=cfg.get("spinup"), on_sample=keep)
    if dim == 2:
        series, snaps, _ = forced_2d(*args, **kw)
    else:
        series, snaps = forced_3d(*args, **kw)
    series.to_csv(outdir / "series.csv", cfg.hash)
    last = snaps[-1] if snaps else None
    if last is not None:
        write_checkpoint(outdir / "final_u.tlb", last, {"t": series.array("t")[-1], "nu": cfg["nu"]})
    t0 = series.array("t")[-1] * cfg.get("spinup")
    summary = {name: series.time_average(name, t0) for name in ("energy", "enstrophy", "eps", "eta")}
    summary["tau_inv"] = float(series.array("tau_inv")[-1])
    summary["bkm"] = float(series.array("bkm")[-1])
    return summary, {"spinup_fraction": cfg.get("spinup"), "forcing": "frozen band projection"}


def _euler(cfg, outdir):
    from .labels import ActiveVectorEuler, LabelHistory, LabelMap, label_diagnostics
    from .flow import step_euler_classical

    box = PeriodicBox(3, cfg["grid.n"])
    u0 = taylor_green(box, cfg.get("amplitude"))
    dt, t_end = cfg["dt"], cfg["t_end"]
    nsteps = int(round(t_end / dt))
    solver = ActiveVectorEuler(u0)
    every = cfg.get("checkpoint_every")
    lmap, u, hist = LabelMap.identity(u0), u0, LabelHistory()
    rows = []
    for i in range(nsteps + 1):
        diag = label_diagnostics(lmap, hist)
        uA, _ = solver.velocity_and_pressure(lmap.delta.values)
        diff = float(np.sqrt(np.mean((uA - u.values) ** 2) / np.mean(u.values**2)))
        rows.append([lmap.t, energy(VectorField(box, uA)), diag.sup_grad_A_sq, diag.integral,
                     diag.det_min, diag.det_max, diff, int(diag.under_resolved)])
        if every and i % every == 0:
            write_checkpoint(outdir / f"delta_{i:05d}.tlb", lmap.delta, {"t": lmap.t})
        if i == nsteps:
            break
        delta = solver.step(lmap.delta.values, dt)
        lmap = LabelMap(VectorField(box, delta), u0, (i + 1) * dt)
        u = step_euler_classical(u, dt).u
    write_csv(
        outdir / "series.csv",
        ["t", "energy", "sup_grad_A_sq", "sup_grad_A_sq_integral", "det_min", "det_max", "l2_distance",
         "under_resolved"],
        rows,
        cfg.hash,
    )
    write_checkpoint(outdir / "delta_final.tlb", lmap.delta, {"t": lmap.t})
    summary = {"t": lmap.t, "l2_distance": rows[-1][6], "det_min": min(r[4] for r in rows),
               "det_max": max(r[5] for r in rows), "energy_drift": abs(rows[-1][1] / rows[0][1] - 1)}
    return summary, {"composition": "exact Fourier summation"}


def _spectra(cfg, outdir):
    from .spectra import bound_curves, c_psi_constant, lp_spectrum, window_scalars

    nu, L = cfg["nu"], cfg["L"]
    fields = [read_checkpoint(p)[0] for p in cfg["inputs"]]
    report = lp_spectrum(fields, L)
    omegas = None
    if fields[0].domain.dim == 2:
        from .fields import curl

        omegas = [curl(u) for u in fields]
    report.scalars.update(window_scalars(fields, nu, omegas))
    env = {}
    for regime in ("thm9_2d", "thm10_3d"):
        try:
            env.update(bound_curves(report, nu, regime))
        except TurblabError:
            pass
    nan = np.full(len(report.k_hi), np.nan)
    rows = zip(range(len(report.k_hi)), report.k_lo, report.k_hi, report.E_LP, env.get("thm9", nan),
               env.get("thm10", nan), env.get("kolmogorov", nan), env.get("kraichnan", nan))
    write_csv(outdir / "series.csv", ["shell_index", "k_lo", "k_hi", "E_LP", "thm9_env", "thm10_env",
                                      "kolmogorov_ref", "kraichnan_ref"], rows, cfg.hash)
    s = report.scalars
    summary = {"tau_inv": s["tau_inv"], "eps_hat": s.get("eps_hat", np.nan), "k_d_hat": s.get("k_d_hat", np.nan),
               "eta_hat": s.get("eta_hat", np.nan), "C_psi": c_psi_constant()[0]}
    return summary, {"k_d_convention": "(nu tau)^(-1/2)", "envelope_point": "shell upper edge k_m",
                     "C_Kl": 1.0, "C_Kr": 1.0}


def _kernel(cfg, outdir):
    from .convection.operators import KernelParams, kernel_sum

    params = KernelParams(L=cfg["L"], p=cfg["p"])
    rows = []
    for eps in np.atleast_1d(cfg["eps"]):
        for x in cfg["x"]:
            K, b = kernel_sum(params, np.asarray(x, dtype=float), eps=float(eps))
            rows.append([float(x[0]), float(x[1]), float(eps), float(K), float(b)])
    write_csv(outdir / "series.csv", ["x1", "x2", "eps", "K", "bound"], rows, cfg.hash)
    ratio = max(abs(r[3]) / r[4] for r in rows)
    return {"rows": len(rows), "max_K_over_bound": ratio}, {}


EXPERIMENTS = {
    "combustion": _combustion,
    "convection": _convection,
    "euler": _euler,
    "spectra": _spectra,
    "nse2d": _nse,
    "nse3d": _nse,
    "kernel": _kernel,
}


def last_checkpoint(outdir):
    """Most recent checkpoint in ``outdir`` by cadence index, or None."""
    found = sorted(Path(outdir).glob("*.tlb"))
    return str(found[-1]) if found else None


def run(config, outdir=None):
    """Execute one validated config (dict or RunConfig)."""
    try:
        cfg = config if hasattr(config, "kind") else validate(config)
    except ConfigError as exc:
        return RunReport(EXIT_CONFIG, Path(outdir or "."), message=str(exc))
    if outdir is None:
        outdir = output_root() / (cfg.get("out") or f"{cfg.kind}_{cfg.hash}")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        summary, meta = EXPERIMENTS[cfg.kind](cfg, outdir)
    except (TurblabError, FloatingPointError) as exc:
        chk = getattr(exc, "checkpoint", None) or last_checkpoint(outdir)
        return RunReport(EXIT_ABORT, outdir, message=f"{type(exc).__name__}: {exc}", checkpoint=chk)
    _write_summary(outdir, cfg, summary)
    _write_meta(outdir, cfg, meta)
    return RunReport(EXIT_OK, outdir, summary)


# --- sweeps ------------------------------------------------------------------------


def parse_axis(spec):
    """'profile.amplitude=1,2,4' -> ('profile.amplitude', [1.0, 2.0, 4.0])."""
    if "=" not in spec:
        raise ConfigError(f"axis must look like key=v1,v2: {spec!r}")
    key, vals = spec.split("=", 1)
    out = []
    for v in vals.split(","):
        try:
            out.append(json.loads(v))
        except json.JSONDecodeError:
            out.append(v)
    return key.strip(), out


def sweep(template, key, values, outdir=None, workers=None):
    """One run per axis value (thread pool); merged summary sorted by value.

    Returns (rows, failures).  Failed children are listed in failures.csv
    next to the merged summary.
    """
    if len(values) < 2:
        raise ConfigError("a sweep needs at least two axis values", key=key)
    for v in values:
        if isinstance(v, (int, float)) and not np.isfinite(v):
            raise ConfigError(f"non-finite axis value {v}", key=key)
    base = template if isinstance(template, dict) else template.data
    root = Path(outdir) if outdir else output_root() / f"sweep_{config_hash(base)}"
    root.mkdir(parents=True, exist_ok=True)
    jobs = []
    for v in sorted(values):
        cfg = copy.deepcopy(base)
        set_path(cfg, key, v)
        jobs.append((v, cfg, root / f"{key}={v}"))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        reports = list(pool.map(lambda j: run(j[1], j[2]), jobs))
    header, rows, failures = None, [], []
    for (v, cfg, d), rep in zip(jobs, reports):
        if rep.status != EXIT_OK:
            failures.append([v, rep.status, rep.message])
            continue
        h, r = read_csv(d / "summary.csv")
        header = header or [key] + h
        rows.extend([[v] + row for row in r])
    if header:
        write_csv(root / "summary.csv", header, rows, config_hash(base))
    if failures:
        write_csv(root / "failures.csv", [key, "status", "message"], failures, config_hash(base))
    return rows, failures
