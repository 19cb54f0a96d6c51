import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from plotkit import FigureSpec, ProvenanceError, render

HASH = "0123456789abcdef"


def write_manifest(path: Path, h: str = HASH) -> Path:
    path.write_text(json.dumps({"manifest_hash": h,
                                "params": {"config": {"lattice": {"l": 1.0}}}}))
    return path


def write_csv(path: Path, columns, rows, h: str = HASH) -> Path:
    lines = [f"# manifest: {h}", ",".join(columns)]
    lines += [",".join(str(x) for x in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture()
def synthetic_spectrum(tmp_path):
    k = np.geomspace(0.5, 8.0, 25)
    rows = [(float(ki), float(1.3 * ki ** -2.0)) for ki in k]
    csv = write_csv(tmp_path / "spectrum.csv", ["k", "n"], rows)
    manifest = write_manifest(tmp_path / "manifest.json")
    return csv, manifest


class TestSpectrum:
    def test_fitted_slope_within_tolerance(self, synthetic_spectrum, tmp_path):
        csv, manifest = synthetic_spectrum
        spec = FigureSpec(kind="spectrum", inputs=[str(csv)],
                          output=str(tmp_path / "fig.png"),
                          manifest=str(manifest), d=2, m=0)
        result = render(spec)
        assert (tmp_path / "fig.png").exists()
        assert abs(result.fitted_slope - (-2.0)) < 0.05

    def test_svg_output(self, synthetic_spectrum, tmp_path):
        csv, manifest = synthetic_spectrum
        spec = FigureSpec(kind="spectrum", inputs=[str(csv)],
                          output=str(tmp_path / "fig.svg"),
                          manifest=str(manifest), reference_slopes=[-2.0])
        render(spec)
        assert (tmp_path / "fig.svg").read_text().startswith("<?xml")

    def test_simulate_table_accepted(self, tmp_path):
        rows = []
        for mode, l2 in [("0;0", 0), ("1;0", 1), ("0;1", 1), ("1;1", 2)]:
            n = 0.5 if l2 == 0 else 0.5 / l2
            rows.append((1.0, mode, n, 0.01))
            rows.append((2.0, mode, n, 0.01))
        csv = write_csv(tmp_path / "spectra.csv",
                        ["tau", "mode", "mean_abs2", "stderr"], rows)
        manifest = write_manifest(tmp_path / "manifest.json")
        spec = FigureSpec(kind="spectrum", inputs=[str(csv)],
                          output=str(tmp_path / "fig.png"),
                          manifest=str(manifest))
        result = render(spec)
        assert result.fitted_slope is not None


class TestProvenance:
    def test_mismatch_rejected(self, synthetic_spectrum, tmp_path):
        csv, _ = synthetic_spectrum
        bad = write_manifest(tmp_path / "other.json", h="feedfacecafebeef")
        spec = FigureSpec(kind="spectrum", inputs=[str(csv)],
                          output=str(tmp_path / "fig.png"), manifest=str(bad))
        with pytest.raises(ProvenanceError):
            render(spec)
        assert not (tmp_path / "fig.png").exists()

    def test_missing_header_rejected(self, tmp_path):
        p = tmp_path / "raw.csv"
        p.write_text("k,n\n1.0,1.0\n2.0,0.25\n")
        manifest = write_manifest(tmp_path / "manifest.json")
        spec = FigureSpec(kind="spectrum", inputs=[str(p)],
                          output=str(tmp_path / "fig.png"),
                          manifest=str(manifest))
        with pytest.raises(ProvenanceError):
            render(spec)

    def test_cli_exit_code_on_mismatch(self, synthetic_spectrum, tmp_path):
        csv, _ = synthetic_spectrum
        bad = write_manifest(tmp_path / "other.json", h="feedfacecafebeef")
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps({
            "kind": "spectrum", "inputs": [str(csv)],
            "output": str(tmp_path / "fig.png"), "manifest": str(bad)}))
        proc = subprocess.run([sys.executable, "-m", "plotkit",
                               str(spec_path)], capture_output=True, text=True)
        assert proc.returncode == 2
        assert "provenance" in proc.stderr.lower()


class TestDip:
    def test_minimum_marked(self, tmp_path):
        sigmas = np.linspace(-1.8, -0.9, 10)
        target = -4.0 / 3.0
        rows = [(float(s), float(abs(s - target) + 0.01), 0.005)
                for s in sigmas]
        csv = write_csv(tmp_path / "scan.csv", ["sigma", "residual", "stderr"],
                        rows)
        manifest = write_manifest(tmp_path / "manifest.json")
        spec = FigureSpec(kind="dip", inputs=[str(csv)],
                          output=str(tmp_path / "dip.png"),
                          manifest=str(manifest))
        result = render(spec)
        expected = float(sigmas[np.argmin(np.abs(sigmas - target))])
        assert result.dip_sigma == pytest.approx(expected)
        assert (tmp_path / "dip.png").exists()


class TestChain:
    def test_report_rendered(self, tmp_path):
        report = {"manifest_hash": HASH,
                  "rows": [{"index": "0;0", "lhs": 1.9, "rhs": 2.0,
                            "stderr": 0.05, "pass": True},
                           {"index": "1;0", "lhs": 0.4, "rhs": 0.8,
                            "stderr": 0.05, "pass": False}]}
        rp = tmp_path / "chain2_report.json"
        rp.write_text(json.dumps(report))
        manifest = write_manifest(tmp_path / "manifest.json")
        spec = FigureSpec(kind="chain", inputs=[str(rp)],
                          output=str(tmp_path / "chain.png"),
                          manifest=str(manifest))
        render(spec)
        assert (tmp_path / "chain.png").exists()

    def test_report_provenance_checked(self, tmp_path):
        report = {"manifest_hash": "feedfacecafebeef", "rows": []}
        rp = tmp_path / "r.json"
        rp.write_text(json.dumps(report))
        manifest = write_manifest(tmp_path / "manifest.json")
        spec = FigureSpec(kind="chain", inputs=[str(rp)],
                          output=str(tmp_path / "chain.png"),
                          manifest=str(manifest))
        with pytest.raises(ProvenanceError):
            render(spec)


class TestTrend:
    def test_rendered(self, tmp_path):
        rows = [(0.1, 0.0076), (0.05, 0.0020), (0.02, 0.00035)]
        csv = write_csv(tmp_path / "trend.csv", ["nu", "l2_distance"], rows)
        manifest = write_manifest(tmp_path / "manifest.json")
        spec = FigureSpec(kind="trend", inputs=[str(csv)],
                          output=str(tmp_path / "trend.png"),
                          manifest=str(manifest))
        render(spec)
        assert (tmp_path / "trend.png").exists()


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(ValueError):
        render(FigureSpec(kind="pie", inputs=[], output=str(tmp_path / "x.png")))
