"""Regenerate the shipped datasets from their in-code definitions.

Everything under dataset/ is derived: function specs, case files with
ground-truth DAGs, and the scripted transcripts (authored by replaying the
real pipeline against a backend that answers from the truth). Rebuild after
changing fixtures, prompt bindings, or the canonical formats; the test
suite asserts the committed copies match a fresh build byte for byte.
"""

from pathlib import Path

from faasflow.bundled import build_all

for path in build_all(Path(__file__).resolve().parent.parent / "dataset"):
    print(f"wrote {path}")
