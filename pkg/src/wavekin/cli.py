"""Experiment runner: quadruplets, simulate, moments, kinetic.

Exit codes: 0 pass, 1 usage error, 2 numerical failure, 3 statistical test
failure.  Output directory defaults to $WAVEKIN_OUTDIR or ./wavekin_out.
All data files carry the manifest hash; reruns with identical
(command, params, seed) are byte-identical.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .effective import (BlowUpError, DampingProfile, ForcingProfile, SimConfig,
                        simulate)
from .kinetic import (KineticConfig, SpectrumFn, collision_integral,
                      evolve_spectrum, kz_exponents, stationarity_scan)
from .lattice import (build_lattice, brute_force_quadruplets,
                      count_scaling_slope, enumerate_quadruplets,
                      momentum_table, quadruplet_count, quadruplet_table,
                      quadruplets_to_rows)
from .moments import chain_rhs_second, estimate_moment, moment_samples, \
    qg_closure_sixth
from .runio import (Manifest, apply_overrides, default_outdir, load_config,
                    write_csv, write_json)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_STATISTICAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _mode_str(mode) -> str:
    return ";".join(str(c) for c in mode)


def _parse_mode(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.replace(";", ",").split(","))


# ----------------------------------------------------------------- quadruplets

def cmd_quadruplets(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = {"d": args.d, "L": args.L, "K": args.K,
              "k": args.k, "oracle": bool(args.oracle),
              "scaling": args.scaling}
    manifest = Manifest("quadruplets", params, seed=None, version=__version__)
    h = manifest.hash

    if args.scaling:
        lo, hi = (int(p) for p in args.scaling.split(".."))
        Ls = list(range(lo, hi + 1))
        slope, counts = count_scaling_slope(args.d, args.K, Ls)
        rows = [(L, int(c)) for L, c in zip(Ls, counts)]
        manifest.add_output(write_csv(out / "scaling.csv", ["L", "count"], rows, h))
        manifest.add_output(write_json(out / "scaling.json",
                                       {"Ls": Ls, "counts": [int(c) for c in counts],
                                        "slope": slope, "target": 2 * args.d - 1}, h))
        manifest.write(out)
        print(f"count scaling slope over L={lo}..{hi}: {slope:.3f} "
              f"(target {2 * args.d - 1})")
        return EXIT_OK

    lattice = build_lattice(args.d, args.L, args.K)
    modes = [_parse_mode(args.k)] if args.k else lattice.mode_tuples()
    all_rows = []
    mismatch = 0
    for k in modes:
        quads = enumerate_quadruplets(lattice, k)
        all_rows.extend(quadruplets_to_rows(quads))
        if args.oracle:
            oracle = brute_force_quadruplets(lattice, k)
            if [(q.k1, q.k2, q.k3, q.trivial) for q in quads] != \
               [(q.k1, q.k2, q.k3, q.trivial) for q in oracle]:
                mismatch += 1
                print(f"oracle mismatch at k={k}", file=sys.stderr)
    manifest.add_output(write_csv(out / "quadruplets.csv",
                                  ["k1", "k2", "k3", "k", "trivial_flag"],
                                  all_rows, h))
    counts = quadruplet_count(lattice)
    count_rows = [(_mode_str(k), int(counts.per_mode[i]))
                  for i, k in enumerate(lattice.mode_tuples())]
    manifest.add_output(write_csv(out / "counts.csv", ["k", "nontrivial_count"],
                                  count_rows, h))
    n_trivial = sum(1 for r in all_rows if r[4] == 1)
    summary = {"modes": len(lattice), "total_nontrivial": counts.total,
               "rows_written": len(all_rows), "trivial_rows": n_trivial,
               "oracle_checked": bool(args.oracle), "oracle_mismatches": mismatch}
    manifest.add_output(write_json(out / "summary.json", summary, h))
    manifest.write(out)
    print(f"{len(lattice)} modes, {counts.total} nontrivial quadruplets"
          + (f", oracle diff = {mismatch}" if args.oracle else ""))
    return EXIT_NUMERICAL if mismatch else EXIT_OK


# ------------------------------------------------------------------- simulate

def _profiles_from_config(cfg: dict):
    lat = cfg.get("lattice", {})
    lattice = build_lattice(int(lat.get("d", 2)), float(lat.get("l", 1.0)),
                            float(lat.get("k", 1.5)))
    dmp = cfg.get("damping", {})
    damping = DampingProfile(eps1=float(dmp.get("eps1", 1.0)),
                             eps2=float(dmp.get("eps2", 0.0)),
                             beta=float(dmp.get("beta", 0.0)))
    frc = cfg.get("forcing", {})
    forcing = ForcingProfile(b0=float(frc.get("b0", 1.0)),
                             p=float(frc.get("p", 1.0)))
    return lattice, damping, forcing


def _sim_config(cfg: dict, mode: str) -> SimConfig:
    sim = cfg.get("sim", {})
    return SimConfig(
        rho=float(sim.get("rho", 0.0)),
        dt=float(sim.get("dt", 0.01)),
        T=float(sim.get("t", sim.get("T", 1.0))),
        ensemble_size=int(sim.get("ensemble_size", 1)),
        seed=int(sim.get("seed", 0)),
        stride=int(sim.get("stride", 1)),
        nu_fast=(float(sim["nu_fast"]) if mode == "full" and
                 sim.get("nu_fast") is not None else None),
        blowup_bound=float(sim.get("blowup_bound", 1e6)),
        store_states=bool(sim.get("save_states", True)),
    )


def _worker_simulate(payload):
    """Top-level worker so ProcessPoolExecutor can pickle it."""
    cfg, mode, indices = payload
    lattice, damping, forcing = _profiles_from_config(cfg)
    sim_cfg = _sim_config(cfg, mode)
    table = quadruplet_table(lattice) if mode == "effective" else None
    mtab = momentum_table(lattice) if mode == "full" else None
    res = simulate(lattice, sim_cfg, damping, forcing, table=table,
                   mom_table=mtab, mode=mode, trajectory_indices=indices)
    return res.states


def _run_ensemble(cfg: dict, mode: str, threads: int):
    lattice, damping, forcing = _profiles_from_config(cfg)
    sim_cfg = _sim_config(cfg, mode)
    if threads <= 1 or sim_cfg.ensemble_size < 2 * threads:
        table = quadruplet_table(lattice) if mode == "effective" else None
        mtab = momentum_table(lattice) if mode == "full" else None
        res = simulate(lattice, sim_cfg, damping, forcing, table=table,
                       mom_table=mtab, mode=mode)
        return lattice, damping, forcing, sim_cfg, res.taus, res.states
    # split trajectories across workers; per-trajectory streams keep the
    # result identical to the serial run
    blocks = np.array_split(np.arange(sim_cfg.ensemble_size), threads)
    payloads = [(cfg, mode, list(map(int, b))) for b in blocks if b.size]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        parts = list(ex.map(_worker_simulate, payloads))
    states = np.concatenate(parts, axis=1)
    n_steps = int(round(sim_cfg.T / sim_cfg.dt))
    taus = np.array([s * sim_cfg.dt
                     for s in range(0, n_steps + 1, sim_cfg.stride)])
    return lattice, damping, forcing, sim_cfg, taus, states


def _write_states_csv(out, lattice, taus, states, h, manifest):
    rows = []
    mode_strs = [_mode_str(m) for m in lattice.mode_tuples()]
    for si, tau in enumerate(taus):
        for t in range(states.shape[1]):
            for mi, ms in enumerate(mode_strs):
                v = states[si, t, mi]
                rows.append((t, float(tau), ms, float(v.real), float(v.imag)))
    manifest.add_output(write_csv(out / "states.csv",
                                  ["trajectory_id", "tau", "mode", "re_v", "im_v"],
                                  rows, h))


def _write_spectra_csv(out, lattice, taus, states, h, manifest,
                       name="spectra.csv"):
    abs2 = np.abs(states) ** 2
    mean = abs2.mean(axis=1)
    n = states.shape[1]
    stderr = abs2.std(axis=1, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    rows = []
    mode_strs = [_mode_str(m) for m in lattice.mode_tuples()]
    for si, tau in enumerate(taus):
        for mi, ms in enumerate(mode_strs):
            rows.append((float(tau), ms, float(mean[si, mi]), float(stderr[si, mi])))
    manifest.add_output(write_csv(out / name,
                                  ["tau", "mode", "mean_abs2", "stderr"], rows, h))


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    apply_overrides(cfg, args.set or [])
    mode = args.mode or cfg.get("sim", {}).get("mode", "effective")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = {"config": cfg, "mode": mode}
    seed = cfg.get("sim", {}).get("seed", 0)
    manifest = Manifest("simulate", params, seed=seed, version=__version__)
    h = manifest.hash
    threads = args.threads or os.cpu_count() or 1

    if args.nu_list:
        return _simulate_nu_trend(args, cfg, out, manifest, threads)

    try:
        lattice, damping, forcing, sim_cfg, taus, states = _run_ensemble(
            cfg, mode, threads)
    except BlowUpError as e:
        print(f"blow-up: {e}", file=sys.stderr)
        manifest.add_output(write_json(out / "blowup.json",
                                       {"trajectories": e.trajectory_ids,
                                        "tau": e.tau}, h))
        manifest.write(out)
        return EXIT_NUMERICAL

    _write_spectra_csv(out, lattice, taus, states, h, manifest)
    if sim_cfg.store_states:
        _write_states_csv(out, lattice, taus, states, h, manifest)

    status = EXIT_OK
    if args.ou_check:
        if sim_cfg.rho != 0.0:
            print("--ou-check requires rho = 0", file=sys.stderr)
            return EXIT_USAGE
        report = _ou_check(lattice, damping, forcing, states[-1])
        manifest.add_output(write_json(out / "ou_check.json", report, h))
        if not report["all_pass"]:
            status = EXIT_STATISTICAL
        print(f"OU check: {'pass' if report['all_pass'] else 'FAIL'} "
              f"({report['n_pass']}/{report['n_modes']} modes)")
    manifest.write(out)
    print(f"wrote {out} (snapshots={len(taus)}, ensemble={states.shape[1]})")
    return status


def _ou_check(lattice, damping, forcing, final_states) -> dict:
    want2 = forcing.amplitudes(lattice) ** 2 / damping.rates(lattice)
    rows = []
    all_pass = True
    for i, k in enumerate(lattice.mode_tuples()):
        est2 = estimate_moment(final_states, lattice, [k], [k])
        est4 = estimate_moment(final_states, lattice, [k, k], [k, k])
        ok2 = abs(est2.value.real - want2[i]) < 3 * est2.stderr
        ok4 = abs(est4.value.real - 2 * want2[i] ** 2) < 3 * est4.stderr
        all_pass &= ok2 and ok4
        rows.append({"mode": _mode_str(k),
                     "second": est2.value.real, "second_want": float(want2[i]),
                     "second_stderr": est2.stderr, "second_pass": bool(ok2),
                     "fourth": est4.value.real,
                     "fourth_want": float(2 * want2[i] ** 2),
                     "fourth_stderr": est4.stderr, "fourth_pass": bool(ok4)})
    return {"modes": rows, "all_pass": bool(all_pass),
            "n_pass": sum(r["second_pass"] and r["fourth_pass"] for r in rows),
            "n_modes": len(rows)}


def _simulate_nu_trend(args, cfg, out, manifest, threads) -> int:
    """Full-system runs for each nu plus the effective baseline, CRN-paired."""
    h = manifest.hash
    nus = [float(x) for x in args.nu_list.split(",")]
    tau_min = float(cfg.get("sim", {}).get("trend_tau_min",
                                           0.5 * float(cfg["sim"]["t"])))
    lattice, damping, forcing, sim_cfg, taus, eff_states = _run_ensemble(
        cfg, "effective", threads)
    _write_spectra_csv(out, lattice, taus, eff_states, h, manifest,
                       name="spectra_eff.csv")
    sel = taus >= tau_min - 1e-12
    eff_avg = np.mean(np.abs(eff_states[sel]) ** 2, axis=0)
    rows = []
    for nu in nus:
        cfg_nu = {k: dict(v) for k, v in cfg.items()}
        cfg_nu.setdefault("sim", {})["nu_fast"] = nu
        _, _, _, _, taus_nu, full_states = _run_ensemble(cfg_nu, "full", threads)
        _write_spectra_csv(out, lattice, taus_nu, full_states, h, manifest,
                           name=f"spectra_nu_{nu:g}.csv")
        full_avg = np.mean(np.abs(full_states[sel]) ** 2, axis=0)
        diff = (full_avg - eff_avg).mean(axis=0)
        rows.append((nu, float(np.sqrt(np.sum(diff ** 2)))))
    manifest.add_output(write_csv(out / "trend.csv", ["nu", "l2_distance"],
                                  rows, h))
    manifest.write(out)
    dists = [r[1] for r in rows]
    print("nu-trend distances:", ", ".join(f"{n:g}: {d:.4g}" for n, d in rows))
    monotone = all(dists[i] > dists[i + 1] for i in range(len(dists) - 1))
    print(f"monotone decreasing: {monotone}")
    return EXIT_OK


# -------------------------------------------------------------------- moments

def _read_states(ensemble_dir: Path):
    from .runio import read_csv
    import json as _json
    man = _json.loads((ensemble_dir / "manifest.json").read_text())
    cfg = man["params"]["config"]
    lattice, damping, forcing = _profiles_from_config(cfg)
    h, cols, rows = read_csv(ensemble_dir / "states.csv")
    if h != man["manifest_hash"]:
        raise ValueError("states.csv does not belong to this manifest")
    taus = sorted({float(r[1]) for r in rows})
    tau_ix = {t: i for i, t in enumerate(taus)}
    mode_ix = {_mode_str(m): i for i, m in enumerate(lattice.mode_tuples())}
    n_traj = max(int(r[0]) for r in rows) + 1
    states = np.zeros((len(taus), n_traj, len(lattice)), dtype=complex)
    for r in rows:
        states[tau_ix[float(r[1])], int(r[0]), mode_ix[r[2]]] = \
            float(r[3]) + 1j * float(r[4])
    rho = float(cfg.get("sim", {}).get("rho", 0.0))
    return lattice, damping, forcing, rho, np.array(taus), states


MIN_ENSEMBLE = 100


def cmd_moments(args) -> int:
    ensemble_dir = Path(args.ensemble)
    # own subdirectory: the ensemble's manifest must stay the owner of the
    # simulation outputs
    out = Path(args.out) if args.out else ensemble_dir / f"moments_{args.test}"
    out.mkdir(parents=True, exist_ok=True)
    try:
        lattice, damping, forcing, rho, taus, states = _read_states(ensemble_dir)
    except FileNotFoundError as e:
        print(f"missing ensemble output: {e}", file=sys.stderr)
        return EXIT_USAGE
    n_traj = states.shape[1]
    if n_traj < MIN_ENSEMBLE:
        print(f"ensemble too small ({n_traj} trajectories); "
              f"need at least {MIN_ENSEMBLE} for the moment tests",
              file=sys.stderr)
        return EXIT_USAGE
    params = {"ensemble": str(ensemble_dir), "test": args.test}
    manifest = Manifest("moments", params, seed=None, version=__version__)
    h = manifest.hash

    if args.test == "chain2":
        report = _chain2_report(lattice, damping, forcing, rho, taus, states)
    elif args.test == "closure":
        report = _closure_report(lattice, states[-1])
    else:
        print(f"unknown test {args.test}", file=sys.stderr)
        return EXIT_USAGE
    manifest.add_output(write_json(out / f"{args.test}_report.json", report, h))
    # moment table CSV alongside the JSON report
    rows = [(r["index"], r["lhs"], r["rhs"], r["stderr"], n_traj)
            for r in report["rows"]]
    manifest.add_output(write_csv(out / f"{args.test}_table.csv",
                                  ["index", "lhs", "rhs", "stderr",
                                   "sample_count"], rows, h))
    manifest.write(out)
    print(f"{args.test}: {'pass' if report['all_pass'] else 'FAIL'} "
          f"({report['n_pass']}/{len(report['rows'])})")
    return EXIT_OK if report["all_pass"] else EXIT_STATISTICAL


def _chain2_report(lattice, damping, forcing, rho, taus, states) -> dict:
    if len(taus) < 3:
        raise ValueError("chain2 needs at least 3 snapshots")
    i0 = len(taus) // 2
    dtau = taus[i0 + 1] - taus[i0 - 1]
    before, at, after = states[i0 - 1], states[i0], states[i0 + 1]
    rows = []
    all_pass = True
    for k in lattice.mode_tuples():
        ik = lattice.index(k)
        fd = (np.abs(after[:, ik]) ** 2 - np.abs(before[:, ik]) ** 2) / dtau
        fourth = lambda k1, k2, k3: moment_samples(at, lattice, [k1, k2], [k, k3])
        m_kk = np.abs(at[:, ik]) ** 2
        rhs = chain_rhs_second(lattice, k, m_kk, fourth, damping, forcing, rho)
        diff = np.asarray(fd - rhs)
        stderr = float(diff.std(ddof=1) / np.sqrt(diff.size))
        ok = abs(float(diff.mean())) < 3 * stderr
        all_pass &= ok
        rows.append({"index": _mode_str(k), "lhs": float(np.mean(fd)),
                     "rhs": float(np.mean(rhs)), "stderr": stderr,
                     "pass": bool(ok)})
    return {"rows": rows, "all_pass": bool(all_pass),
            "n_pass": sum(r["pass"] for r in rows), "tau0": float(taus[i0])}


def _closure_report(lattice, states) -> dict:
    modes = lattice.mode_tuples()
    m2 = {k: estimate_moment(states, lattice, [k], [k]).value.real
          for k in modes}
    rng = np.random.default_rng(0)
    picks = []
    nontrivial = [m for m in modes if any(c for c in m)]
    for _ in range(6):
        trip = tuple(nontrivial[i] for i in
                     rng.choice(len(nontrivial), size=3, replace=False))
        picks.append((trip, tuple(rng.permutation(len(trip)))))
    rows = []
    all_pass = True
    for upper, perm in picks:
        lower = tuple(upper[i] for i in perm)
        est = estimate_moment(states, lattice, list(upper), list(lower))
        want = qg_closure_sixth(upper, lower, m2)
        ok = abs(est.value - want) < 3 * est.stderr
        all_pass &= ok
        rows.append({"index": "|".join(map(_mode_str, upper)) + ";"
                     + "|".join(map(_mode_str, lower)),
                     "lhs": float(est.value.real), "rhs": float(want),
                     "stderr": est.stderr, "pass": bool(ok)})
    return {"rows": rows, "all_pass": bool(all_pass),
            "n_pass": sum(r["pass"] for r in rows)}


# -------------------------------------------------------------------- kinetic

def _kinetic_config(cfg: dict) -> KineticConfig:
    kin = cfg.get("kinetic", {})
    kwargs = dict(
        k_min=float(kin.get("k_min", 0.5)),
        k_max=float(kin.get("k_max", 2.0)),
        d=int(kin.get("d", 2)),
        m=float(kin.get("m", 0.0)),
        damping_eps=float(kin.get("damping_eps", 1.0)),
        eps4=float(kin.get("eps4", 1.0)),
        n_k3=int(kin.get("n_k3", 8192)),
        n_theta=int(kin.get("n_theta", 128)),
        seed=int(kin.get("seed", 0)),
        r_lo_factor=float(kin.get("r_lo_factor", 1e-3)),
    )
    if kin.get("phi_const") is not None:
        kwargs["phi_const"] = float(kin["phi_const"])
    if kin.get("k3_radius") is not None:
        kwargs["k3_radius"] = float(kin["k3_radius"])
    return KineticConfig(**kwargs)


def cmd_kinetic(args) -> int:
    if args.task == "kz-exponents":
        e = kz_exponents(args.d, args.m)
        print(f"d={args.d}, m={args.m}: KZ exponents ({e.kz1}, {e.kz2}), "
              f"RJ exponents {tuple(str(x) for x in e.rj)}")
        return EXIT_OK

    if not args.config:
        print("this task needs --config", file=sys.stderr)
        return EXIT_USAGE
    cfg = load_config(args.config)
    apply_overrides(cfg, args.set or [])
    kcfg = _kinetic_config(cfg)
    if kcfg.d != 2:
        print(f"continuum evaluator supports d=2 only, got d={kcfg.d}",
              file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = {"config": cfg, "task": args.task}
    manifest = Manifest("kinetic", params, seed=kcfg.seed, version=__version__)
    h = manifest.hash
    meta = {"phi_const": kcfg.phi_const, "eps4": kcfg.eps4,
            "window": [kcfg.k_min, kcfg.k_max], "seed": kcfg.seed,
            "m": kcfg.m, "d": kcfg.d}

    if args.task == "rj-check":
        k_eval = float(cfg.get("scan", {}).get("k_eval", 1.0))
        scan = stationarity_scan([0.0, -2.0], k_eval, kcfg)
        ok = all(abs(scan.residuals[i]) <= max(3 * scan.stderrs[i], 1e-10)
                 for i in range(2))
        rows = list(zip(scan.sigmas, scan.residuals, scan.stderrs))
        manifest.add_output(write_csv(out / "rj_check.csv",
                                      ["sigma", "residual", "stderr"], rows, h))
        manifest.add_output(write_json(out / "rj_check.json",
                                       {**meta, "pass": bool(ok),
                                        "residuals": list(map(float, scan.residuals)),
                                        "stderrs": list(map(float, scan.stderrs))},
                                       h))
        manifest.write(out)
        print(f"RJ residuals: {scan.residuals[0]:.3e}, {scan.residuals[1]:.3e} "
              f"-> {'pass' if ok else 'FAIL'}")
        return EXIT_OK if ok else EXIT_STATISTICAL

    if args.task == "scan":
        sc = cfg.get("scan", {})
        k_eval = float(sc.get("k_eval", 1.0))
        smin = float(sc.get("sigma_min", -4.0 / 3.0 - 0.5))
        smax = float(sc.get("sigma_max", -4.0 / 3.0 + 0.5))
        steps = int(sc.get("sigma_steps", 9))
        sigmas = np.linspace(smin, smax, steps)
        scan = stationarity_scan(sigmas, k_eval, kcfg)
        rows = [(float(s), float(r), float(e)) for s, r, e in
                zip(scan.sigmas, np.abs(scan.residuals), scan.stderrs)]
        manifest.add_output(write_csv(out / "scan.csv",
                                      ["sigma", "residual", "stderr"], rows, h))
        # separation test at the KZ exponent itself, CRN against +-0.25
        kz1 = -(kcfg.m + 3 * kcfg.d - 2) / 3.0
        kz_scan = stationarity_scan([kz1 - 0.25, kz1, kz1 + 0.25], k_eval, kcfg)
        sep_lo, err_lo = kz_scan.separation(0, 1)
        sep_hi, err_hi = kz_scan.separation(2, 1)
        dip = {"dip_sigma": scan.dip_sigma, **meta,
               "rejected_fraction": 0.0, "k_eval": k_eval,
               "kz_sigma": kz1,
               "kz_residual": float(kz_scan.residuals[1]),
               "kz_separation_lo": sep_lo, "kz_separation_lo_stderr": err_lo,
               "kz_separation_hi": sep_hi, "kz_separation_hi_stderr": err_hi,
               "kz_dip_significant": bool(sep_lo >= 3 * err_lo
                                          and sep_hi >= 3 * err_hi)}
        manifest.add_output(write_json(out / "dip.json", dip, h))
        manifest.write(out)
        print(f"scan minimum at sigma = {scan.dip_sigma:.4f}; "
              f"KZ dip at {kz1:.4f}: separations {sep_lo:.3f} (3s={3*err_lo:.3f}), "
              f"{sep_hi:.3f} (3s={3*err_hi:.3f})")
        return EXIT_OK

    if args.task == "evolve":
        ev = cfg.get("evolve", {})
        n_nodes = int(ev.get("n_nodes", 48))
        nodes = np.geomspace(kcfg.k_min, kcfg.k_max, n_nodes)
        init = float(ev.get("init_amplitude", 1.0)) \
            * nodes ** float(ev.get("init_exponent", 0.0))
        n0 = SpectrumFn.from_grid(nodes, init)
        g0 = float(ev.get("gamma0", 0.0))
        gm = float(ev.get("gamma_exp", 0.0))
        b0 = float(ev.get("bsq0", 0.0))
        kf = float(ev.get("bsq_width", kcfg.k_min))
        damping = lambda k: g0 * k ** gm
        forcing_sq = lambda k: b0 * np.exp(-(k / kf) ** 2)
        res = evolve_spectrum(n0, damping, forcing_sq, kcfg,
                              dt=float(ev.get("dt", 0.01)),
                              steps=int(ev.get("steps", 50)))
        rows = []
        for s in range(res.history.shape[0]):
            for i, k in enumerate(res.k_nodes):
                rows.append((s, float(k), float(res.history[s, i])))
        manifest.add_output(write_csv(out / "evolution.csv",
                                      ["step", "k_node", "n"], rows, h))
        manifest.add_output(write_json(out / "evolve_meta.json",
                                       {**meta, "clamp_count": res.clamp_count,
                                        "rejected_fraction": res.rejected_fraction},
                                       h))
        manifest.write(out)
        print(f"evolved {res.history.shape[0] - 1} steps, "
              f"clamps={res.clamp_count}")
        return EXIT_OK

    print(f"unknown kinetic task {args.task!r}", file=sys.stderr)
    return EXIT_USAGE


# ----------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wavekin",
                description="resonant wave-kinetics experiments")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quadruplets", help="enumerate resonant quadruplets")
    q.add_argument("--d", type=int, required=True)
    q.add_argument("--L", type=float, required=True)
    q.add_argument("--K", type=float, required=True)
    q.add_argument("--k", type=str, default=None,
                   help="single mode, e.g. '1,0' (default: all)")
    q.add_argument("--oracle", action="store_true",
                   help="diff the structured enumerator against brute force")
    q.add_argument("--scaling", type=str, default=None, metavar="LO..HI",
                   help="count-scaling experiment over integer L range")
    q.add_argument("--out", default=str(default_outdir() / "quadruplets"))
    q.set_defaults(func=cmd_quadruplets)

    s = sub.add_parser("simulate", help="run a trajectory ensemble")
    s.add_argument("--config", required=True)
    s.add_argument("--mode", choices=["effective", "full"], default=None)
    s.add_argument("--out", default=str(default_outdir() / "simulate"))
    s.add_argument("--threads", type=int, default=None)
    s.add_argument("--ou-check", action="store_true",
                   help="compare the rho=0 ensemble against the OU closed form")
    s.add_argument("--nu-list", type=str, default=None,
                   help="comma-separated nu values for the full-system trend")
    s.add_argument("--set", action="append", metavar="SEC.KEY=VAL",
                   help="override a config value")
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("moments", help="moment-chain tests on an ensemble")
    m.add_argument("--ensemble", required=True,
                   help="directory written by `wavekin simulate`")
    m.add_argument("--test", choices=["chain2", "closure"], required=True)
    m.add_argument("--out", default=None)
    m.set_defaults(func=cmd_moments)

    k = sub.add_parser("kinetic", help="continuum collision-integral tasks")
    k.add_argument("--task", choices=["rj-check", "scan", "evolve",
                                      "kz-exponents"], required=True)
    k.add_argument("--config", default=None)
    k.add_argument("--d", type=int, default=2, help="for kz-exponents")
    k.add_argument("--m", type=int, default=0, help="for kz-exponents")
    k.add_argument("--out", default=str(default_outdir() / "kinetic"))
    k.add_argument("--set", action="append", metavar="SEC.KEY=VAL")
    k.set_defaults(func=cmd_kinetic)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, FileNotFoundError, KeyError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except BlowUpError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ArithmeticError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
