import os
from pathlib import Path
from typing import Optional

ROOT = Path(__file__).resolve().parents[2]
DATA = Path(os.environ.get("LANEID_DATA", ROOT / "data"))
CORPORA = DATA / "corpora"
CHECKPOINTS = DATA / "checkpoints"
REPORTS = DATA / "reports"

for p in (DATA, CORPORA, CHECKPOINTS, REPORTS):
    p.mkdir(parents=True, exist_ok=True)


def worker_count(default: Optional[int] = None) -> int:
    """Worker cap from LANEID_THREADS, else `default` or the CPU count."""
    raw = os.environ.get("LANEID_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, default if default is not None else (os.cpu_count() or 1))
