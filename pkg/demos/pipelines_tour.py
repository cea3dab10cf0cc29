"""Run two small configured experiments and list their recorded outputs."""
import tempfile
from pathlib import Path

from wavekin import pipelines

here = Path(__file__).resolve().parent.parent / "configs"
with tempfile.TemporaryDirectory() as tmp:
    for name in ("wke.yaml", "cumulants.yaml"):
        man = pipelines.run(here / name, base=Path(tmp))
        print(name, "->", "PASS" if man.passed else "FAIL", man.content_hash()[:12])
        for f in man.files[:6]:
            print("  ", f.kind, f.path)
