import hashlib

import numpy as np
import pytest

from felodm import (
    ExperimentError,
    build_channel_field,
    channel_layout,
    effective_config,
    fit_convergence_slope,
    list_experiments,
    run_experiment,
)
from felodm.cli import main
from felodm.experiments import parse_config_text, parse_number


def md5(path):
    return hashlib.md5(path.read_bytes()).hexdigest()


def tiny_custom(tmp_path, **extra):
    cfg = {"experiment": "custom", "H": "2^-2", "h": "2^-4",
           "omega1": "1/4,1/4,1/2,1/2"}
    cfg.update(extra)
    return run_experiment(cfg, outdir=tmp_path)


# -- config syntax -------------------------------------------------------------


def test_parse_number_forms():
    assert parse_number("2^-7") == 2.0 ** -7
    assert parse_number("2^3") == 8.0
    assert parse_number("1/5") == 0.2
    assert parse_number("-3/4") == -0.75
    assert parse_number("42") == 42.0
    assert parse_number(" 1e-5 ") == 1e-5


def test_parse_number_rejects_garbage():
    for bad in ("abc", "1/0", "2^^3", ""):
        with pytest.raises(ExperimentError):
            parse_number(bad)


def test_parse_config_text():
    cfg = parse_config_text(
        "# full-line comment\n"
        "a = 1\n"
        "\n"
        "b = 2^-5  # trailing comment\n"
        "c = x = y\n")
    assert cfg == {"a": "1", "b": "2^-5", "c": "x = y"}


def test_parse_config_text_errors():
    with pytest.raises(ExperimentError):
        parse_config_text("just words\n")
    with pytest.raises(ExperimentError):
        parse_config_text("a = 1\na = 2\n")
    with pytest.raises(ExperimentError):
        parse_config_text("= 1\n")


def test_effective_config_merges_defaults():
    eff = effective_config({"experiment": "ex1-Lsweep", "H": "2^-4"})
    assert eff["H"] == "2^-4"          # override wins
    assert eff["epsilon"] == "1/5"     # default preserved
    assert eff["experiment"] == "ex1-Lsweep"


def test_effective_config_rejections():
    with pytest.raises(ExperimentError):
        effective_config({})
    with pytest.raises(ExperimentError):
        effective_config({"experiment": "nope"})
    with pytest.raises(ExperimentError):
        effective_config({"experiment": "custom", "bogus": "1"})


def test_list_experiments_registry():
    ids = [k for k, _ in list_experiments()]
    assert "ex1-Lsweep" in ids and "custom" in ids
    assert all(desc for _, desc in list_experiments())


# -- channel layout ------------------------------------------------------------


def test_channel_layout_scales_with_resolution():
    base = channel_layout(128)
    big = channel_layout(256)
    assert big.n == 256
    for (a, b, c, d), (a2, b2, c2, d2) in zip(base.channels, big.channels):
        assert (a2, b2, c2, d2) == (2 * a, 2 * b, 2 * c, 2 * d)
    for (x, y, s), (x2, y2, s2) in zip(base.inclusions, big.inclusions):
        assert (x2, y2, s2) == (2 * x, 2 * y, 2 * s)
    field = build_channel_field(base)
    # both strips run nearly the whole width at the channel value
    assert np.all(field.values[44, 10:120] == 1.0e5)
    assert np.all(field.values[85, 10:120] == 1.0e5)
    assert field.values[0, 0] == 1.0


def test_channel_layout_rejects_off_multiples():
    with pytest.raises(ExperimentError):
        channel_layout(100)


# -- slope fitting ---------------------------------------------------------------


def test_fit_slope_recovers_exact_powers():
    hs = [0.5, 0.25, 0.125, 0.0625]
    s1, r1 = fit_convergence_slope([(h, 3.0 * h) for h in hs])
    assert s1 == pytest.approx(1.0, abs=1e-12)
    assert r1 == pytest.approx(1.0, abs=1e-12)
    s2, r2 = fit_convergence_slope([(h, 0.7 * h * h) for h in hs])
    assert s2 == pytest.approx(2.0, abs=1e-12)
    assert r2 == pytest.approx(1.0, abs=1e-12)


def test_fit_slope_validation():
    with pytest.raises(ExperimentError):
        fit_convergence_slope([(0.5, 1.0), (0.25, 0.5)])
    with pytest.raises(ExperimentError):
        fit_convergence_slope([(0.5, 1.0), (0.25, 0.5), (0.125, 0.0)])


# -- run_experiment -------------------------------------------------------------


def test_desk_scale_gate(tmp_path):
    cfg = {"experiment": "custom", "H": "2^-2", "h": "2^-8"}
    with pytest.raises(ExperimentError):
        run_experiment(cfg, outdir=tmp_path)


def test_custom_run_writes_outputs(tmp_path):
    report = tiny_custom(tmp_path)
    assert report.experiment == "custom"
    assert set(report.methods()) == {"fe-lodm", "lodm"}
    assert (tmp_path / "errors.csv").is_file()
    assert (tmp_path / "report.txt").is_file()
    header = (tmp_path / "errors.csv").read_text().splitlines()[0]
    assert header == "method,region,norm,value"
    assert "method reference:" in report.text
    assert report.value("fe-lodm", "omega", "energy") >= 0.0
    with pytest.raises(KeyError):
        report.value("fe-lodm", "omega", "h10")
    for m in report.residuals.values():
        assert m <= 1e-9


def test_rerun_is_byte_identical_and_reuses_cache(tmp_path):
    tiny_custom(tmp_path)
    csv1 = md5(tmp_path / "errors.csv")
    cache = sorted((tmp_path / "cache").glob("ref-*.npy"))
    assert len(cache) == 1
    stamp = cache[0].stat().st_mtime_ns
    tiny_custom(tmp_path)
    assert md5(tmp_path / "errors.csv") == csv1
    cache2 = sorted((tmp_path / "cache").glob("ref-*.npy"))
    assert cache2 == cache
    assert cache2[0].stat().st_mtime_ns == stamp


def test_cache_key_tracks_parameters(tmp_path):
    tiny_custom(tmp_path)
    tiny_custom(tmp_path, gamma0="100")
    assert len(list((tmp_path / "cache").glob("ref-*.npy"))) == 2


def test_lsweep_driver_tables(tmp_path):
    cfg = {"experiment": "ex1-Lsweep", "epsilon": "1/4", "H": "2^-3",
           "h": "2^-5", "omega1": "1/4,1/4,3/8,3/8", "levels": "1,2"}
    report = run_experiment(cfg, outdir=tmp_path)
    assert [m for m in report.methods()] == ["fe-lodm-L1", "fe-lodm-L2",
                                             "ideal"]
    assert (tmp_path / "lsweep.csv").is_file()
    lines = (tmp_path / "lsweep.csv").read_text().splitlines()
    assert lines[0] == "H,L,energy_rel,l2_rel,linf_rel"
    assert len(lines) == 3
    assert [row["L"] for row in report.sweep] == [1, 2]
    assert "method ideal:" in report.text


def test_convergence_driver_slopes(tmp_path):
    cfg = {"experiment": "ex1-convergence", "epsilon": "1/4",
           "H_list": "2^-2,2^-3,2^-4", "h": "2^-6",
           "omega1": "1/4,1/4,1/2,1/2"}
    report = run_experiment(cfg, outdir=tmp_path)
    assert set(report.slopes) == {"energy", "l2", "linf"}
    assert (tmp_path / "energy.csv").is_file()
    assert (tmp_path / "l2.csv").is_file()
    slope, r2 = report.slopes["energy"]
    assert slope > 0.0
    assert 0.0 < r2 <= 1.0
    assert "slope energy:" in report.text


def test_convergence_requires_decreasing_sizes(tmp_path):
    cfg = {"experiment": "ex1-convergence", "epsilon": "1/4",
           "H_list": "2^-3,2^-2", "h": "2^-5",
           "omega1": "1/4,1/4,1/2,1/2"}
    with pytest.raises(ExperimentError):
        run_experiment(cfg, outdir=tmp_path)


def test_parallel_convergence_matches_serial(tmp_path, monkeypatch):
    cfg = {"experiment": "ex1-convergence", "epsilon": "1/4",
           "H_list": "2^-2,2^-3,2^-4", "h": "2^-5",
           "omega1": "1/4,1/4,1/2,1/2"}
    run_experiment(cfg, outdir=tmp_path / "serial")
    monkeypatch.setenv("FELODM_WORKERS", "2")
    run_experiment(cfg, outdir=tmp_path / "parallel")
    assert (md5(tmp_path / "serial" / "errors.csv")
            == md5(tmp_path / "parallel" / "errors.csv"))
    assert (md5(tmp_path / "serial" / "energy.csv")
            == md5(tmp_path / "parallel" / "energy.csv"))


def test_wells_run_writes_wbp_table(tmp_path):
    report = tiny_custom(tmp_path, h="2^-5",
                         wells="5/16,5/16,-1,1e-4; 7/16,7/16,1,1e-4")
    assert set(report.wbp) == {"reference", "fe-lodm", "lodm"}
    assert all(len(v) == 2 for v in report.wbp.values())
    lines = (tmp_path / "wbp.csv").read_text().splitlines()
    assert lines[0] == "method,well,wbp"
    assert len(lines) == 7
    assert "well 1: wbp" in report.text


def test_unknown_method_rejected(tmp_path):
    with pytest.raises(ExperimentError):
        tiny_custom(tmp_path, methods="bogus")


def test_default_outdir_under_results(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = {"experiment": "custom", "H": "2^-2", "h": "2^-4"}
    report = run_experiment(cfg)
    assert report.outdir.resolve() == tmp_path / "results" / "custom"
    assert (report.outdir / "report.txt").is_file()
    # with an empty refined region only the baseline runs
    assert report.methods() == ["lodm"]


# -- command line ----------------------------------------------------------------


def test_cli_list_experiments(capsys):
    assert main(["list-experiments"]) == 0
    out = capsys.readouterr().out
    assert "ex1-Lsweep:" in out and "custom:" in out


def test_cli_run_and_fit(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("experiment = ex1-convergence\n"
                   "epsilon = 1/4\n"
                   "H_list = 2^-2,2^-3,2^-4\n"
                   "h = 2^-5\n"
                   "omega1 = 1/4,1/4,1/2,1/2\n")
    outdir = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--outdir", str(outdir)]) == 0
    out = capsys.readouterr().out
    assert "slope energy:" in out
    assert f"wrote {outdir}" in out

    assert main(["fit", "--csv", str(outdir / "energy.csv")]) == 0
    out = capsys.readouterr().out
    assert "energy_rel: slope" in out


def test_cli_failure_exit_codes(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert "error:" in capsys.readouterr().err
    assert main(["fit", "--csv", str(tmp_path / "missing.csv")]) == 2
    assert "error:" in capsys.readouterr().err


def test_cli_gate_message(tmp_path, capsys):
    cfg = tmp_path / "deep.cfg"
    cfg.write_text("experiment = custom\nH = 2^-2\nh = 2^-9\n")
    assert main(["run", "--config", str(cfg),
                 "--outdir", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "--full-scale" in err
