# strategem/storage/storage.py
#
# Run artifacts on disk.
# CSV files  → one per result table, preceded by a `#` metadata line.
# TXT file   → the primary table rendered as text, with the same numbers as its CSV.
#
# Fixed float formatting and "\n" line endings keep identical runs byte-identical.

import hashlib
from pathlib import Path

import pandas as pd

from strategem import __version__
from strategem.config import logger, settings

FLOAT_FORMAT = "%.10g"

# ── helpers ──────────────────────────────────────────────────────────────────


def scenario_digest(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()


def metadata_line(seed: int, digest: str) -> str:
    return f"# strategem {__version__} seed={seed} scenario_sha256={digest}\n"


def render_csv(df: pd.DataFrame, seed: int, digest: str) -> str:
    body = df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return metadata_line(seed, digest) + body


def render_summary(df: pd.DataFrame) -> str:
    return df.to_string(index=False, float_format=lambda v: FLOAT_FORMAT % v) + "\n"


# ── public API ────────────────────────────────────────────────────────────────


def save_run(result, out_dir: str | Path | None = None) -> list[Path]:
    """
    Write every table of a finished run as <run_id>_<table>.csv plus
    <run_id>_summary.txt for the primary table. Returns the written paths.
    """
    out = Path(out_dir or settings.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    digest = scenario_digest(result.digest_source)

    rendered = {
        out / f"{result.run_id}_{name}.csv": render_csv(df, result.seed, digest)
        for name, df in result.tables.items()
    }
    rendered[out / f"{result.run_id}_summary.txt"] = render_summary(result.primary)

    for path, text in rendered.items():
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    logger.info(f"Wrote {len(rendered)} artifacts for '{result.run_id}' to {out}")
    return list(rendered)


def read_table(path: str | Path) -> tuple[str, pd.DataFrame]:
    """Inverse of render_csv: the metadata line and the table."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
    return header, pd.read_csv(path, skiprows=1)
