from __future__ import annotations
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Mapping, Optional

def _print(msg: str, quiet: bool=False):
    if not quiet: print(msg)

def log_step(name: str, ok: bool, info: str="", quiet: bool=False):
    symbol = "✓" if ok else "✗"
    _print(f"[{symbol}] {name}{f' – {info}' if info else ''}", quiet)

def format_losses(step: int, losses: Mapping[str, float]) -> str:
    parts = " ".join(f"{k}={v:.6f}" for k, v in losses.items())
    return f"step={step} {parts}"

class LossLog:
    """Collects per-step loss rows; written once at the end like the legacy TXT log."""

    def __init__(self, label: str, every: int = 50, quiet: bool = False):
        self.label = label
        self.every = max(1, int(every))
        self.quiet = quiet
        self.rows: List[str] = []
        self.history: List[Dict[str, float]] = []

    def record(self, step: int, losses: Mapping[str, float]) -> None:
        row = {k: float(v) for k, v in losses.items()}
        self.history.append(row)
        line = format_losses(step, row)
        self.rows.append(line)
        if step % self.every == 0:
            _print(f"   {self.label} {line}", self.quiet)

    def write(self, log_dir: Path, summary_lines: List[str], pattern: str | None = None) -> Optional[Path]:
        return write_txt_log(log_dir, self.label, summary_lines, self.rows, pattern=pattern)

def write_txt_log(log_dir: Path, label: str, summary_lines: List[str], per_step_lines: List[str], pattern: str | None = None) -> Optional[Path]:
    """Summary block, blank line, then one line per training step."""
    now = datetime.now()
    if not pattern:
        pattern = "loss_log.txt"
    fname = pattern.format(
        datetime_hm_u=now.strftime("%Y%m%d_%H%M"),
        label_lower=label.lower(),
        label=label,
    )
    log_dir.mkdir(parents=True, exist_ok=True)
    log_file = log_dir / fname
    with log_file.open("w", encoding="utf-8", newline="\n") as fp:
        fp.write("\n".join(summary_lines + ["", "# Per-step log"] + per_step_lines) + "\n")
    return log_file
