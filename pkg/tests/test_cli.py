import json
from pathlib import Path

from offcut.cli import main

FIXTURES = Path(__file__).parent / "fixtures"


def run_optimize(tmp_path, name, seed=7, workers=1, out="run"):
    outdir = tmp_path / out
    rc = main(
        [
            "optimize",
            str(FIXTURES / f"{name}.design.json"),
            "--seed",
            str(seed),
            "--out",
            str(outdir),
            "--generations",
            "1",
            "--keep",
            "4",
            "--improve-iters",
            "3",
            "--workers",
            str(workers),
            "--raster-res",
            "2.0",
        ]
    )
    assert rc == 0
    return outdir


class TestOptimizeCommand:
    def test_writes_result_and_svg(self, tmp_path):
        outdir = run_optimize(tmp_path, "mini")
        report = json.loads((outdir / "result.json").read_text())
        assert report["seed"] == 7
        assert report["suggestions"]
        first = report["suggestions"][0]
        assert (outdir / first["svg"][0]).exists()
        assert 0.0 <= first["wastage"] <= 1.0

    def test_repeat_runs_byte_identical(self, tmp_path):
        a = run_optimize(tmp_path, "mini", out="a")
        b = run_optimize(tmp_path, "mini", out="b")
        assert (a / "result.json").read_bytes() == (b / "result.json").read_bytes()
        ra = json.loads((a / "result.json").read_text())
        for s in ra["suggestions"]:
            for svg in s["svg"]:
                assert (a / svg).read_bytes() == (b / svg).read_bytes()

    def test_worker_count_does_not_change_output(self, tmp_path):
        a = run_optimize(tmp_path, "mini", workers=1, out="w1")
        b = run_optimize(tmp_path, "mini", workers=8, out="w8")
        assert (a / "result.json").read_bytes() == (b / "result.json").read_bytes()
