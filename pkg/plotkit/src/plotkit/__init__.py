"""plotkit: render paper-style figures from wavekin CSV/JSON outputs.

Figures are batch-rendered from files only; provenance is enforced by
matching each CSV's manifest-hash header against the run manifest.
"""

from .figures import FigureSpec, ProvenanceError, RenderResult, render

__version__ = "0.1.0"
__all__ = ["FigureSpec", "ProvenanceError", "RenderResult", "render"]
