import math

import pandas as pd
import pytest

from anchorpipe.metrics import MetricsReport, SampleMetrics
from anchorpipe.reports import parse_report, report_lines, write_eval_outputs


@pytest.fixture
def report():
    samples = [SampleMetrics("s0000", 4, 4, 0.0, math.inf, 1.0, 0.0, psnr_identical=4),
               SampleMetrics("s0001", 3, 5, 0.012, 27.5, 0.91, 0.004)]
    return MetricsReport(au_mse=0.006, psnr_db=27.5, ssim=0.955, temporal_l1=0.002, samples=samples)


def test_report_lines_put_the_header_first(report):
    lines = report_lines(report, {"aups": "gt", "frames": "gan"})
    assert lines == ["aups=gt", "frames=gan", "samples=2", "psnr_identical=4", "au_mse=0.006000",
                     "psnr_db=27.500000", "ssim=0.955000", "temporal_l1=0.002000"]
    assert parse_report("\n".join(lines) + "\n\n") == {
        "aups": "gt", "frames": "gan", "samples": "2", "psnr_identical": "4", "au_mse": "0.006000",
        "psnr_db": "27.500000", "ssim": "0.955000", "temporal_l1": "0.002000"}


def test_kv_and_csv_only_by_default(tmp_path, report):
    paths = write_eval_outputs(report, tmp_path / "out" / "report.txt")
    assert [p.name for p in paths] == ["report.txt", "report.samples.csv"]
    df = pd.read_csv(paths[1], dtype=str)
    assert list(df.columns) == ["id", "frames_pred", "frames_true", "au_mse", "psnr_db", "psnr_identical", "ssim",
                                "temporal_l1"]
    assert df.loc[0, "psnr_db"] == "inf"
    assert df.loc[0, "psnr_identical"] == "4"
    assert df.loc[1, "frames_true"] == "5"


@pytest.mark.parametrize("fmt, suffixes", [
    ("md", [".md"]),
    ("html", [".html"]),
    ("both", [".md", ".html"]),
])
def test_rendered_reports(tmp_path, report, fmt, suffixes):
    paths = write_eval_outputs(report, tmp_path / "r.txt", {"aups": "seq2au"}, fmt, label="toy")
    assert [p.suffix for p in paths[2:]] == suffixes
    for p in paths[2:]:
        text = p.read_text(encoding="utf-8")
        assert "toy" in text and "s0001" in text and "inf" in text
