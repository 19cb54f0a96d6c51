"""Figure rendering for wavekin outputs.

Four figure kinds:
  spectrum  log-log stationary spectrum with KZ/RJ reference slopes and a
            fitted slope annotation
  dip       sigma-scan residuals with the minimum marked
  chain     per-index LHS vs RHS comparison with error bars, pass/fail colors
  trend     nu vs L2 distance for the effective-equation convergence runs

Every CSV input carries '# manifest: <hash>' as its first line; render()
refuses inputs whose hash does not match the run manifest.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

MANIFEST_PREFIX = "# manifest: "


class ProvenanceError(RuntimeError):
    """Input file does not belong to the declared run manifest."""


@dataclass
class FigureSpec:
    kind: str                       # spectrum | dip | chain | trend
    inputs: list[str]
    output: str
    manifest: str | None = None
    reference_slopes: list[float] | None = None
    d: int | None = None
    m: float | None = None
    title: str | None = None

    @classmethod
    def from_json(cls, path: str | Path) -> "FigureSpec":
        doc = json.loads(Path(path).read_text())
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in doc.items() if k in known})


@dataclass
class RenderResult:
    output: Path
    fitted_slope: float | None = None
    dip_sigma: float | None = None


def _read_csv(path: Path) -> tuple[str, list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\n")
        if not first.startswith(MANIFEST_PREFIX):
            raise ProvenanceError(f"{path}: missing manifest header")
        h = first[len(MANIFEST_PREFIX):].strip()
        reader = csv.reader(fh)
        columns = next(reader)
        rows = [r for r in reader if r]
    return h, columns, rows


def _manifest_hash(path: Path) -> str:
    doc = json.loads(path.read_text())
    try:
        return doc["manifest_hash"]
    except KeyError:
        raise ProvenanceError(f"{path}: manifest carries no hash")


def _check_provenance(spec: FigureSpec, file_hashes: dict[Path, str]) -> None:
    if spec.manifest is None:
        return
    want = _manifest_hash(Path(spec.manifest))
    for path, got in file_hashes.items():
        if got != want:
            raise ProvenanceError(
                f"{path}: manifest hash {got} does not match {want}")


def _fit_loglog_slope(k: np.ndarray, n: np.ndarray) -> float:
    sel = (k > 0) & (n > 0)
    return float(np.polyfit(np.log(k[sel]), np.log(n[sel]), 1)[0])


def _spectrum_points(columns, rows, manifest_params) -> tuple[np.ndarray, np.ndarray]:
    """Accepts (k, n), evolve (step, k_node, n) or simulate spectra tables."""
    if columns[:2] == ["k", "n"]:
        data = np.array([[float(r[0]), float(r[1])] for r in rows])
        return data[:, 0], data[:, 1]
    if columns == ["step", "k_node", "n"]:
        last = max(int(r[0]) for r in rows)
        data = np.array([[float(r[1]), float(r[2])] for r in rows
                         if int(r[0]) == last])
        return data[:, 0], data[:, 1]
    if columns == ["tau", "mode", "mean_abs2", "stderr"]:
        L = 1.0
        if manifest_params:
            L = float(manifest_params.get("config", {})
                      .get("lattice", {}).get("l", 1.0))
        taus = [float(r[0]) for r in rows]
        last = max(taus)
        pts = {}
        for r in rows:
            if float(r[0]) != last:
                continue
            l_vec = [int(c) for c in r[1].split(";")]
            kmod = float(np.sqrt(sum(c * c for c in l_vec))) / L
            pts.setdefault(kmod, []).append(float(r[2]))
        k = np.array(sorted(pts))
        n = np.array([float(np.mean(pts[key])) for key in sorted(pts)])
        return k, n
    raise ValueError(f"unrecognized spectrum table columns: {columns}")


def _kz_slopes(d: int, m) -> list[tuple[str, float]]:
    m = Fraction(m).limit_denominator(10**6)
    kz1 = -(m + 3 * d - 2) / 3
    kz2 = -(m + 3 * d) / 3
    return [(f"KZ {kz1}", float(kz1)), (f"KZ {kz2}", float(kz2)),
            ("RJ 0", 0.0), ("RJ -2", -2.0)]


def _render_spectrum(spec, ax, columns, rows, manifest_params) -> RenderResult:
    k, n = _spectrum_points(columns, rows, manifest_params)
    sel = (k > 0) & (n > 0)
    k, n = k[sel], n[sel]
    ax.loglog(k, n, "o-", color="k", ms=4, lw=1.2, label="spectrum")
    slope = _fit_loglog_slope(k, n)
    slopes = []
    if spec.reference_slopes:
        slopes = [(f"slope {s:g}", float(s)) for s in spec.reference_slopes]
    elif spec.d is not None and spec.m is not None:
        slopes = _kz_slopes(spec.d, spec.m)
    k_ref = np.array([k.min(), k.max()])
    mid = np.sqrt(k.min() * k.max())
    n_mid = np.interp(np.log(mid), np.log(k), np.log(n))
    for label, s in slopes:
        ax.loglog(k_ref, np.exp(n_mid) * (k_ref / mid) ** s, "--", lw=1,
                  alpha=0.7, label=label)
    ax.annotate(f"fitted slope {slope:.3f}", xy=(0.05, 0.05),
                xycoords="axes fraction")
    ax.set_xlabel("|k|")
    ax.set_ylabel("n(|k|)")
    ax.legend(fontsize=8)
    return RenderResult(output=Path(spec.output), fitted_slope=slope)


def _render_dip(spec, ax, columns, rows) -> RenderResult:
    if columns != ["sigma", "residual", "stderr"]:
        raise ValueError(f"dip figure needs (sigma, residual, stderr), got {columns}")
    data = np.array([[float(x) for x in r] for r in rows])
    sig, res, err = data[:, 0], np.abs(data[:, 1]), data[:, 2]
    order = np.argsort(sig)
    sig, res, err = sig[order], res[order], err[order]
    ax.errorbar(sig, res, yerr=err, fmt="o-", color="k", ms=4, lw=1.2)
    dip = float(sig[int(np.argmin(res))])
    ax.axvline(dip, color="crimson", ls="--", lw=1.2,
               label=f"minimum at {dip:.4f}")
    ax.set_yscale("log")
    ax.set_xlabel("spectral exponent sigma")
    ax.set_ylabel("|collision residual|")
    ax.legend(fontsize=8)
    return RenderResult(output=Path(spec.output), dip_sigma=dip)


def _render_chain(spec, ax, report: dict) -> RenderResult:
    rows = report["rows"]
    x = np.arange(len(rows))
    lhs = np.array([r["lhs"] for r in rows])
    rhs = np.array([r["rhs"] for r in rows])
    err = np.array([r["stderr"] for r in rows])
    colors = ["tab:green" if r.get("pass", True) else "tab:red" for r in rows]
    w = 0.38
    ax.bar(x - w / 2, lhs, width=w, color=colors, alpha=0.85, label="LHS d/dtau")
    ax.bar(x + w / 2, rhs, width=w, color="tab:gray", alpha=0.7, label="RHS")
    ax.errorbar(x - w / 2, lhs, yerr=3 * err, fmt="none", ecolor="k", lw=1)
    ax.set_xticks(x)
    ax.set_xticklabels([r["index"] for r in rows], rotation=60, fontsize=7)
    ax.set_ylabel("moment rate")
    ax.legend(fontsize=8)
    return RenderResult(output=Path(spec.output))


def _render_trend(spec, ax, columns, rows) -> RenderResult:
    if columns != ["nu", "l2_distance"]:
        raise ValueError(f"trend figure needs (nu, l2_distance), got {columns}")
    data = np.array([[float(x) for x in r] for r in rows])
    order = np.argsort(data[:, 0])
    ax.loglog(data[order, 0], data[order, 1], "o-", color="k")
    ax.set_xlabel("nu")
    ax.set_ylabel("L2 distance of time-averaged spectra")
    return RenderResult(output=Path(spec.output))


def render(spec: FigureSpec | str | Path) -> RenderResult:
    """Render one figure; raises ProvenanceError on hash mismatch."""
    if not isinstance(spec, FigureSpec):
        spec = FigureSpec.from_json(spec)
    if spec.kind not in ("spectrum", "dip", "chain", "trend"):
        raise ValueError(f"unknown figure kind {spec.kind!r}")
    manifest_params = None
    if spec.manifest:
        manifest_params = json.loads(Path(spec.manifest).read_text()).get("params")

    csv_inputs = [Path(p) for p in spec.inputs if p.endswith(".csv")]
    json_inputs = [Path(p) for p in spec.inputs if p.endswith(".json")]
    hashes = {}
    tables = {}
    for p in csv_inputs:
        h, cols, rows = _read_csv(p)
        hashes[p] = h
        tables[p] = (cols, rows)
    reports = {}
    for p in json_inputs:
        doc = json.loads(p.read_text())
        if "manifest_hash" in doc:
            hashes[p] = doc["manifest_hash"]
        reports[p] = doc
    _check_provenance(spec, hashes)

    fig, ax = plt.subplots(figsize=(5.2, 3.9), dpi=150)
    try:
        if spec.kind == "spectrum":
            cols, rows = tables[csv_inputs[0]]
            result = _render_spectrum(spec, ax, cols, rows, manifest_params)
        elif spec.kind == "dip":
            cols, rows = tables[csv_inputs[0]]
            result = _render_dip(spec, ax, cols, rows)
        elif spec.kind == "chain":
            result = _render_chain(spec, ax, reports[json_inputs[0]])
        else:
            cols, rows = tables[csv_inputs[0]]
            result = _render_trend(spec, ax, cols, rows)
        if spec.title:
            ax.set_title(spec.title, fontsize=10)
        out = Path(spec.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.tight_layout()
        fig.savefig(out)
    finally:
        plt.close(fig)
    return result


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plotkit", description="render figures from wavekin outputs")
    parser.add_argument("spec", help="figure-spec JSON file")
    args = parser.parse_args(argv)
    try:
        result = render(args.spec)
    except ProvenanceError as e:
        print(f"provenance error: {e}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    extras = []
    if result.fitted_slope is not None:
        extras.append(f"fitted slope {result.fitted_slope:.3f}")
    if result.dip_sigma is not None:
        extras.append(f"dip at {result.dip_sigma:.4f}")
    print(f"wrote {result.output}" + (f" ({', '.join(extras)})" if extras else ""))
    return 0


if __name__ == "__main__":
    sys.exit(main())
