import base64
import io
import json
import logging
import re
import subprocess
import sys

import jsonschema
import numpy as np
import pytest
from PIL import Image

from spectralplace.bookshelf import parse_bookshelf, read_pl, write_bookshelf
from spectralplace.cli import METRICS_SCHEMA, RunConfig, main, parse_synth, run, validate_metrics
from spectralplace.engine import Snapshot, TraceRecord
from spectralplace.figures import emit_figures
from spectralplace.legalize import check_legal
from spectralplace.synth import synthesize_instance


def test_help_exits_zero():
    res = subprocess.run([sys.executable, "-m", "spectralplace", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    for flag in ("--aux", "--synth", "--target-density", "--max-iters", "--grid", "--seed",
                 "--out-pl", "--trace", "--metrics", "--svg-dir", "--stop-after"):
        assert flag in res.stdout


def test_parse_synth():
    assert parse_synth("m=1000,ws=0.5") == (1000, 0.5)
    assert parse_synth("m=20") == (20, 0.5)
    for bad in ("1000", "m=10,zz=1", "ws=0.5"):
        with pytest.raises(ValueError):
            parse_synth(bad)


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig()
    with pytest.raises(ValueError):
        RunConfig(synth=(10, 0.5), target_density=0.0)
    with pytest.raises(ValueError):
        RunConfig(synth=(10, 0.5), max_iters=0)
    with pytest.raises(ValueError):
        RunConfig(synth=(10, 0.5), aux="x.aux")


def test_bad_config_exit_code(capsys):
    assert main(["--synth", "m=10", "--target-density", "1.5"]) == 2
    assert json.loads(capsys.readouterr().err)["error"]["stage"] == "config"


def _strip_times(text):
    d = json.loads(text)
    d.pop("stage_seconds")
    return d


def test_deterministic_metrics_and_pl(tmp_path):
    outs = []
    for tag in ("a", "b"):
        pl, met = tmp_path / f"{tag}.pl", tmp_path / f"{tag}.json"
        assert main(["--synth", "m=300,ws=0.5", "--seed", "4", "--out-pl", str(pl),
                     "--metrics", str(met)]) == 0
        outs.append((pl.read_bytes(), met.read_text()))
    assert outs[0][0] == outs[1][0]
    assert _strip_times(outs[0][1]) == _strip_times(outs[1][1])
    # same bytes after removing the wall-time block
    strip = lambda t: re.sub(r'"stage_seconds": \{[^}]*\}', "", t)
    assert strip(outs[0][1]) == strip(outs[1][1])


def test_full_run_metrics_and_legal_output(tmp_path):
    nl, region, pl0 = synthesize_instance(200, seed=2)
    aux = write_bookshelf(nl, region, pl0, tmp_path / "d", "s200")
    status, m = run(RunConfig(aux=str(aux), out_pl=str(tmp_path / "o.pl"),
                              trace=str(tmp_path / "t.jsonl")))
    assert status == 0 and m["error"] is None
    validate_metrics(m)
    nl2, region2, _ = parse_bookshelf(aux)
    out = read_pl(tmp_path / "o.pl", nl2)
    assert check_legal(nl2, region2, out) == []
    assert m["hpwl"]["final"] <= m["hpwl"]["legal"] + 1e-9
    assert m["tau"]["final"] <= 0.10 and m["converged"]
    assert set(m["stage_seconds"]) >= {"input", "init", "fillers", "global", "legal", "detail"}
    assert len((tmp_path / "t.jsonl").read_text().splitlines()) == m["iterations"]


def test_stop_after_global_writes_no_fillers(tmp_path):
    status, m = run(RunConfig(synth=(100, 0.5), stop_after="global", out_pl=str(tmp_path / "g.pl")))
    assert status == 0 and m["hpwl"]["legal"] is None
    assert m["hpwl"]["final"] == m["hpwl"]["global"]
    body = [ln for ln in (tmp_path / "g.pl").read_text().splitlines()[1:] if ln.strip()]
    movable = [ln.split()[0] for ln in body if "/FIXED" not in ln]
    assert movable == [f"c{i}" for i in range(100)]  # no filler rows


def test_missing_aux_reports_error(tmp_path, capsys):
    met = tmp_path / "m.json"
    assert main(["--aux", str(tmp_path / "nope.aux"), "--metrics", str(met)]) != 0
    m = json.loads(met.read_text())
    assert m["error"]["stage"] == "input" and m["error"]["type"]
    validate_metrics(m)
    assert "error" in json.loads(capsys.readouterr().err)


def test_schema_rejects_malformed():
    _, m = run(RunConfig(synth=(20, 0.5), stop_after="init"))
    validate_metrics(m)
    bad = dict(m, iterations=-1)
    with pytest.raises(jsonschema.ValidationError):
        validate_metrics(bad)
    with pytest.raises(jsonschema.ValidationError):
        validate_metrics(dict(m, extra=1))
    assert METRICS_SCHEMA["additionalProperties"] is False


def test_empty_trace_writes_nothing(tmp_path, caplog):
    svg = tmp_path / "svg"
    with caplog.at_level(logging.WARNING):
        assert main(["--synth", "m=30", "--stop-after", "init", "--svg-dir", str(svg)]) == 0
    assert not svg.exists() or not any(svg.iterdir())
    assert "empty trace" in caplog.text


def test_fifty_iteration_figure_count(tmp_path):
    svg = tmp_path / "svg"
    status, m = run(RunConfig(synth=(1000, 0.5), max_iters=50, stop_after="global",
                              svg_dir=str(svg), snapshot_iters=(1, 25, 50)))
    assert status == 0 and m["iterations"] == 50
    files = sorted(p.name for p in svg.iterdir())
    assert len(files) == 2 + 3 * 3
    assert {"overflow_energy.svg", "wirelength.svg", "rho_0025.svg", "psi_0050.svg",
            "field_0001.svg"} <= set(files)


def _embedded_png(svg_path):
    text = svg_path.read_text()
    data = re.search(r"data:image/png;base64,([A-Za-z0-9+/=\s]+)", text).group(1)
    return np.asarray(Image.open(io.BytesIO(base64.b64decode(data))).convert("RGB"))


def test_uniform_density_heatmap_is_one_color(tmp_path):
    flat = np.zeros((8, 8))
    snap = Snapshot(1, flat, flat, flat)
    rec = TraceRecord(1, 10.0, 9.0, 1.0, 0.5, 1.0, 1.0, 0.1)
    paths = emit_figures([rec], [snap], tmp_path)
    assert len(paths) == 5
    img = _embedded_png(tmp_path / "rho_0001.svg")
    assert len(np.unique(img.reshape(-1, 3), axis=0)) == 1
    ramp = Snapshot(2, np.arange(64.0).reshape(8, 8), flat, flat)
    emit_figures([rec], [ramp], tmp_path)
    assert len(np.unique(_embedded_png(tmp_path / "rho_0002.svg").reshape(-1, 3), axis=0)) > 1


def test_figures_are_reproducible(tmp_path):
    rec = [TraceRecord(k, 10.0 - k, 9.0 - k, 1.0 / k, 0.5 / k, 1.0, 1.0, 0.1) for k in range(1, 6)]
    snap = [Snapshot(1, np.eye(4), np.eye(4), np.eye(4))]
    a = [p.read_bytes() for p in emit_figures(rec, snap, tmp_path / "a")]
    b = [p.read_bytes() for p in emit_figures(rec, snap, tmp_path / "b")]
    assert a == b
