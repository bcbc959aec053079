from __future__ import annotations
from pathlib import Path
from typing import Dict, List

import numpy as np
import pandas as pd

from .core import AU_DIM, AU_MAX, AUPS_NAMES, POSE_MAX
from .errors import DataError
from .io_corpus import FRAME_PATTERN, landmark_columns, read_manifest


def _check_csv(path: Path, header: List[str], issues: List[str], rows: int | None = None) -> pd.DataFrame | None:
    if not path.exists():
        issues.append(f"{path.name} missing")
        return None
    try:
        df = pd.read_csv(path, dtype=np.float64).rename(columns=str.strip)
    except Exception as e:
        issues.append(f"{path.name} unreadable: {e}")
        return None
    if list(df.columns) != header:
        issues.append(f"{path.name} header mismatch")
        return None
    if rows is not None and len(df) != rows:
        issues.append(f"{path.name} has {len(df)} rows, expected {rows}")
    if df.isna().any().any():
        issues.append(f"{path.name} has empty cells")
    return df


def _check_aups(df: pd.DataFrame, issues: List[str]) -> None:
    if not np.array_equal(df["frame"].to_numpy(), np.arange(len(df))):
        issues.append("aups.csv frame column is not 0..n-1")
    tol = 1e-6
    vals = df[list(AUPS_NAMES)].to_numpy()
    au, pose = vals[:, :AU_DIM], vals[:, AU_DIM:]
    if (au < -tol).any() or (au > AU_MAX + tol).any():
        issues.append(f"aups.csv AU intensity outside [0, {AU_MAX:g}]")
    if (np.abs(pose) > POSE_MAX + tol).any():
        issues.append(f"aups.csv pose outside [-{POSE_MAX:.6f}, {POSE_MAX:.6f}]")


def _check_landmarks(df: pd.DataFrame, name: str, issues: List[str]) -> None:
    vals = df[[c for c in df.columns if c != "frame"]].to_numpy()
    if (vals < 0.0).any() or (vals > 1.0).any():
        issues.append(f"{name} landmark outside [0,1]")


def collect_corpus_issues(root: Path, landmark_count: int = 12) -> Dict[str, List[str]]:
    """Every problem found, keyed by sample id ('corpus' for the top-level files)."""
    root = Path(root)
    errors: Dict[str, List[str]] = {}
    try:
        manifest = read_manifest(root / "manifest.json")
    except DataError as e:
        return {"corpus": [str(e)]}

    top: List[str] = []
    avg = _check_csv(root / "avg_flm.csv", landmark_columns(landmark_count), top, rows=1)
    if avg is not None:
        _check_landmarks(avg, "avg_flm.csv", top)
    seen = set()
    for i, entry in enumerate(manifest["samples"]):
        if not isinstance(entry, dict) or not {"id", "text", "num_frames"} <= set(entry):
            top.append(f"manifest sample {i} lacks id/text/num_frames")
            continue
        sid = str(entry["id"])
        if sid in seen:
            top.append(f"duplicate sample id {sid}")
        seen.add(sid)
        issues: List[str] = []
        n = int(entry["num_frames"])
        if n < 1:
            issues.append("num_frames must be >= 1")
        sdir = root / "samples" / sid
        if not sdir.is_dir():
            errors[sid] = ["sample directory missing"]
            continue
        aups = _check_csv(sdir / "aups.csv", ["frame", *AUPS_NAMES], issues, rows=n)
        if aups is not None:
            _check_aups(aups, issues)
        flm = _check_csv(sdir / "flm.csv", ["frame", *landmark_columns(landmark_count)], issues, rows=n)
        if flm is not None:
            _check_landmarks(flm, "flm.csv", issues)
        missing = [t for t in range(n) if not (sdir / "frames" / FRAME_PATTERN.format(t)).exists()]
        if missing:
            issues.append(f"{len(missing)} frame PNG(s) missing, first {FRAME_PATTERN.format(missing[0])}")
        if issues:
            errors[sid] = issues
    if top:
        errors["corpus"] = top
    return errors


def validate_corpus(root: Path, landmark_count: int = 12) -> int:
    """Raise DataError listing every issue; returns the sample count when the corpus is clean."""
    errors = collect_corpus_issues(root, landmark_count)
    if errors:
        lines = [f"{key}: {'; '.join(msgs)}" for key, msgs in sorted(errors.items())]
        total = sum(len(m) for m in errors.values())
        raise DataError(f"corpus {root} has {total} issue(s): " + " | ".join(lines), code="E402")
    return len(read_manifest(Path(root) / "manifest.json")["samples"])
