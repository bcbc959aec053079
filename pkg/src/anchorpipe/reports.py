from __future__ import annotations
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Mapping, Optional
import pandas as pd
from .metrics import MetricsReport, format_metric

SAMPLE_COLUMNS = ["id", "frames_pred", "frames_true", "au_mse", "psnr_db", "psnr_identical", "ssim", "temporal_l1"]

def _fmt(v) -> str:
   return format_metric(v) if isinstance(v, float) else str(v)

def report_lines(report: MetricsReport, header: Optional[Mapping[str, object]] = None) -> List[str]:
   """Flat key=value lines; header keys (mode, checkpoints) first, then the aggregate metrics."""
   lines = [f"{k}={_fmt(v)}" for k, v in (header or {}).items()]
   lines.append(f"samples={len(report.samples)}")
   lines.append(f"psnr_identical={report.psnr_identical}")
   lines += [f"{k}={_fmt(v)}" for k, v in report.as_dict().items()]
   return lines

def parse_report(text: str) -> Dict[str, str]:
   out: Dict[str, str] = {}
   for line in text.splitlines():
       if "=" in line:
           k, v = line.split("=", 1); out[k.strip()] = v.strip()
   return out

def write_kv_report(report: MetricsReport, path: Path, header: Optional[Mapping[str, object]] = None) -> Path:
   path.parent.mkdir(parents=True, exist_ok=True)
   path.write_text("\n".join(report_lines(report, header)) + "\n", encoding="utf-8", newline="\n")
   return path

def samples_frame(report: MetricsReport) -> pd.DataFrame:
   rows = [s.as_dict() for s in report.samples]
   df = pd.DataFrame(rows, columns=SAMPLE_COLUMNS)
   for col in ("au_mse", "psnr_db", "ssim", "temporal_l1"):
       df[col] = df[col].map(format_metric)
   return df

def write_samples_csv(report: MetricsReport, path: Path) -> Path:
   path.parent.mkdir(parents=True, exist_ok=True)
   samples_frame(report).to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
   return path

def _sibling(path: Path, suffix: str) -> Path:
   return path.with_name(path.stem + suffix)

def generate_report_md(report: MetricsReport, path: Path, label: str) -> Path:
   lines: List[str] = [f"# Evaluation Report – {label}",
                       f"_Generated: {datetime.now().isoformat(timespec='seconds')}_", "",
                       f"Samples: **{len(report.samples)}**", "",
                       "| metric | value |", "|---|---:|"]
   for k, v in report.as_dict().items():
       lines.append(f"| {k} | {format_metric(v)} |")
   lines += ["", "## Per sample", "", "| " + " | ".join(SAMPLE_COLUMNS) + " |",
             "|---|" + "---:|" * (len(SAMPLE_COLUMNS) - 1)]
   for _, row in samples_frame(report).iterrows():
       lines.append("| " + " | ".join(str(row[c]) for c in SAMPLE_COLUMNS) + " |")
   worst = sorted(report.samples, key=lambda s: s.psnr_db)[:5]
   if worst:
       lines += ["", "## Lowest PSNR", ""]
       lines += [f"- `{s.id}`: {format_metric(s.psnr_db)} dB, ssim {format_metric(s.ssim)}" for s in worst]
   lines.append("")
   out_path = _sibling(path, ".md")
   out_path.write_text("\n".join(lines), encoding="utf-8")
   return out_path

def generate_report_html(report: MetricsReport, path: Path, label: str) -> Path:
   def esc(x: str) -> str: return x.replace("&","&amp;").replace("<","&lt;").replace(">","&gt;")
   css = ("<style>body{font-family:system-ui,Segoe UI,Arial,sans-serif;margin:24px}"
          "h1{font-size:20px;margin-bottom:4px}h2{font-size:16px;margin-top:18px}"
          ".meta{color:#666;margin-bottom:12px}table{border-collapse:collapse;margin:6px 0 16px 0}"
          "th,td{border:1px solid #ddd;padding:6px 8px;font-size:13px}th{background:#f6f6f6;text-align:left}"
          "code{background:#f3f3f3;padding:1px 4px;border-radius:4px}</style>")
   now = datetime.now()
   html = [f"<!doctype html><html><head><meta charset='utf-8'><title>{esc(label)}</title>{css}</head><body>",
           f"<h1>Evaluation Report – {esc(label)}</h1>",
           f"<div class='meta'>Generated: {esc(now.isoformat(timespec='seconds'))} &nbsp;|&nbsp; Samples: <b>{len(report.samples)}</b></div>",
           "<table><tr><th>Metric</th><th>Value</th></tr>"]
   for k, v in report.as_dict().items():
       html.append(f"<tr><td>{esc(k)}</td><td>{esc(format_metric(v))}</td></tr>")
   html.append("</table><h2>Per sample</h2><table><tr>" + "".join(f"<th>{c}</th>" for c in SAMPLE_COLUMNS) + "</tr>")
   for _, row in samples_frame(report).iterrows():
       cells = [f"<td><code>{esc(str(row['id']))}</code></td>"] + [f"<td>{esc(str(row[c]))}</td>" for c in SAMPLE_COLUMNS[1:]]
       html.append("<tr>" + "".join(cells) + "</tr>")
   html.append("</table></body></html>")
   out_path = _sibling(path, ".html")
   out_path.write_text("".join(html), encoding="utf-8")
   return out_path

def write_eval_outputs(report: MetricsReport, path: Path, header: Optional[Mapping[str, object]] = None,
                       report_format: Optional[str] = None, label: str = "eval") -> List[Path]:
   """REPORT itself (key=value), REPORT.samples.csv, and REPORT.md / REPORT.html on request."""
   paths = [write_kv_report(report, path, header), write_samples_csv(report, _sibling(path, ".samples.csv"))]
   if report_format in ("md", "both"):   paths.append(generate_report_md(report, path, label))
   if report_format in ("html", "both"): paths.append(generate_report_html(report, path, label))
   return paths
