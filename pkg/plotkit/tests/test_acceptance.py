"""Secondary acceptance criterion A14, printed in the same style as the
primary suite."""

import json
from pathlib import Path

import numpy as np
import pytest

from plotkit import FigureSpec, ProvenanceError, render

HASH = "0123456789abcdef"


def test_a14_plotkit(tmp_path):
    # synthetic k^-2 spectrum
    k = np.geomspace(0.5, 8.0, 25)
    lines = [f"# manifest: {HASH}", "k,n"]
    lines += [f"{float(ki)!r},{float(0.9 * ki ** -2.0)!r}" for ki in k]
    csv = tmp_path / "spectrum.csv"
    csv.write_text("\n".join(lines) + "\n")
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps({"manifest_hash": HASH, "params": {}}))

    result = render(FigureSpec(kind="spectrum", inputs=[str(csv)],
                               output=str(tmp_path / "spec.png"),
                               manifest=str(manifest), d=2, m=0))
    slope_ok = abs(result.fitted_slope - (-2.0)) <= 0.05

    # dip figure marks the scan minimum
    sigmas = np.linspace(-1.8, -0.9, 13)
    rows = [f"{float(s)!r},{float(abs(s + 4.0 / 3.0) + 0.02)!r},0.005"
            for s in sigmas]
    dip_csv = tmp_path / "scan.csv"
    dip_csv.write_text("\n".join([f"# manifest: {HASH}",
                                  "sigma,residual,stderr"] + rows) + "\n")
    dip = render(FigureSpec(kind="dip", inputs=[str(dip_csv)],
                            output=str(tmp_path / "dip.png"),
                            manifest=str(manifest)))
    expected = float(sigmas[np.argmin(np.abs(sigmas + 4.0 / 3.0))])
    dip_ok = dip.dip_sigma == pytest.approx(expected)

    # provenance mismatch rejected
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"manifest_hash": "feedfacecafebeef"}))
    try:
        render(FigureSpec(kind="spectrum", inputs=[str(csv)],
                          output=str(tmp_path / "never.png"),
                          manifest=str(bad)))
        rejected = False
    except ProvenanceError:
        rejected = True

    ok = slope_ok and dip_ok and rejected
    print(f"\nA14 {'PASS' if ok else 'FAIL'}: fitted slope "
          f"{result.fitted_slope:.3f} within 0.05 of -2; dip marked at "
          f"{dip.dip_sigma:.4f}; provenance mismatch rejected = {rejected}")
    assert ok
