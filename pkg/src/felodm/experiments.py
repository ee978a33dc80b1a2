"""Config-driven experiment harness.

Experiments are described by flat ``key = value`` text files.  Each
experiment id bundles a problem family (domain, coefficient, refined
region, load) with desk-scale defaults; a config overrides any subset of
them.  ``run_experiment`` executes the configured solves, measures errors
against a fine reference solution, and writes a plain-text report plus
CSV tables.  CSV outputs are deterministic: rerunning the same config
with the same seed reproduces them byte for byte (the report keeps wall
times and so differs between runs).
"""

import hashlib
import math
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import DEFAULT_PENALTY, error_report
from .coefficients import (
    ChannelLayout,
    Constant,
    RandomFieldParams,
    build_channel_field,
    generate_lognormal_field,
    periodic_ratio_field,
    periodic_well_field,
)
from .correctors import MultiscaleSetup, choose_L
from .mesh import L_SHAPE, UNIT_SQUARE, partition_domain
from .methods import (
    IDEAL_DOF_LIMIT,
    SolveResult,
    VolumeLoad,
    WellSpec,
    compute_wbp,
    solve_fe_lodm,
    solve_ideal,
    solve_lodm_baseline,
    solve_reference,
    transfer_fine_values,
)

__all__ = [
    "DESK_FINEST",
    "ExperimentError",
    "ExperimentReport",
    "channel_layout",
    "effective_config",
    "fit_convergence_slope",
    "list_experiments",
    "load_config",
    "parse_config_text",
    "parse_number",
    "run_experiment",
]

# Finest h the harness runs without the explicit full-scale opt-in.
DESK_FINEST = 2.0 ** -7

_NORMS = ("energy", "l2", "linf")


class ExperimentError(ValueError):
    """Invalid experiment configuration, or a harness-level failure."""


# ---------------------------------------------------------------------------
# config syntax


def parse_number(text):
    """A number in config syntax: plain int or float, a fraction like
    1/5, or a dyadic size like 2^-7."""
    s = str(text).strip()
    m = re.fullmatch(r"2\^(-?\d+)", s)
    if m:
        return 2.0 ** int(m.group(1))
    m = re.fullmatch(r"(-?\d+)\s*/\s*(-?\d+)", s)
    if m:
        if int(m.group(2)) == 0:
            raise ExperimentError(f"zero denominator in {s!r}")
        return int(m.group(1)) / int(m.group(2))
    try:
        return float(s)
    except ValueError:
        raise ExperimentError(f"not a number: {s!r}") from None


def parse_config_text(text):
    """Parse ``key = value`` lines into a string-to-string dict.  Blank
    lines and ``#`` comments (whole-line or trailing) are ignored."""
    out = {}
    for ln, raw in enumerate(str(text).splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ExperimentError(f"config line {ln}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ExperimentError(f"config line {ln}: empty key")
        if key in out:
            raise ExperimentError(f"config line {ln}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(path):
    p = Path(path)
    if not p.is_file():
        raise ExperimentError(f"config file not found: {p}")
    return parse_config_text(p.read_text())


def _tuples(text, width, what):
    """Semicolon-separated tuples of comma-separated numbers."""
    out = []
    for part in str(text).split(";"):
        part = part.strip()
        if not part:
            continue
        fields = [parse_number(f) for f in part.split(",")]
        if len(fields) != width:
            raise ExperimentError(
                f"{what} entry {part!r} needs {width} fields")
        out.append(tuple(fields))
    return out


def _num(cfg, key, default=None):
    if key not in cfg or cfg[key] == "":
        if default is None:
            raise ExperimentError(f"missing config key {key!r}")
        return default
    return parse_number(cfg[key])


def _intval(cfg, key, default=None):
    v = _num(cfg, key, default)
    if v != int(v):
        raise ExperimentError(f"config key {key!r} must be an integer")
    return int(v)


def _int_list(cfg, key):
    vals = [parse_number(s) for s in str(cfg.get(key, "")).split(",") if s.strip()]
    if not vals:
        raise ExperimentError(f"missing config key {key!r}")
    out = []
    for v in vals:
        if v != int(v) or v < 1:
            raise ExperimentError(f"{key!r} entries must be positive integers")
        out.append(int(v))
    return out


def _num_list(cfg, key):
    vals = [parse_number(s) for s in str(cfg.get(key, "")).split(",") if s.strip()]
    if not vals:
        raise ExperimentError(f"missing config key {key!r}")
    return vals


# ---------------------------------------------------------------------------
# experiment registry

_WELL_RECTS = "7/32,23/32,9/32,25/32; 23/32,7/32,25/32,9/32"
_WELL_LIST = "1/4,3/4,-1,1e-5; 3/4,1/4,1,1e-5"

EXPERIMENTS = {
    "ex1-Lsweep": {
        "describe": "patch-size sweep for the oscillatory-ratio coefficient",
        "defaults": {
            "domain": "unit-square",
            "coefficient": "ratio-periodic",
            "epsilon": "1/5",
            "H": "2^-3",
            "h": "2^-7",
            "gamma0": "10",
            "omega1": "1/4,1/4,3/8,3/8",
            "levels": "1,2,3,6,10",
            "load": "one",
        },
    },
    "ex1-convergence": {
        "describe": "coarse-mesh convergence study with rule-chosen patches",
        "defaults": {
            "domain": "unit-square",
            "coefficient": "ratio-periodic",
            "epsilon": "1/20",
            "H_list": "2^-2,2^-3,2^-4,2^-5",
            "h": "2^-7",
            "gamma0": "10",
            "omega1": "1/4,1/4,1/2,1/2",
            "L0": "1",
            "load": "one",
        },
    },
    "ex2-Lshape": {
        "describe": "reentrant-corner singularity with a lognormal field",
        "defaults": {
            "domain": "l-shape",
            "coefficient": "lognormal",
            "sigma2": "1.5",
            "corr_x": "0.01",
            "corr_y": "0.01",
            "seed": "20260817",
            "H": "2^-4",
            "h": "2^-7",
            "gamma0": "10",
            "omega1": "3/8,3/8,1/2,5/8; 1/2,1/2,5/8,5/8",
            "L0": "1",
            "load": "one",
        },
    },
    "ex3-channels": {
        "describe": "high-contrast channels and inclusions",
        "defaults": {
            "domain": "unit-square",
            "coefficient": "channels",
            "field_n": "128",
            "H": "2^-5",
            "h": "2^-7",
            "gamma0": "10",
            "omega1": "0,11/32,1,12/32; 0,21/32,1,22/32",
            # one patch ring more than the generic rule: the contrast
            # slows the corrector decay, and L=3 restores the margin
            "L": "3",
            "load": "one",
        },
    },
    "ex4-well-periodic": {
        "describe": "extraction/injection well pair in a periodic field",
        "defaults": {
            "domain": "unit-square",
            "coefficient": "well-periodic",
            "epsilon": "1/64",
            "H": "2^-5",
            "h": "2^-7",
            "gamma0": "10",
            "omega1": _WELL_RECTS,
            "L": "3",
            "wells": _WELL_LIST,
        },
    },
    "ex5-well-random": {
        "describe": "extraction/injection well pair in a lognormal field",
        "defaults": {
            "domain": "unit-square",
            "coefficient": "lognormal",
            "sigma2": "1.5",
            "corr_x": "0.01",
            "corr_y": "0.01",
            "seed": "7041982",
            "H": "2^-5",
            "h": "2^-7",
            "gamma0": "10",
            "omega1": _WELL_RECTS,
            "L": "3",
            "wells": _WELL_LIST,
        },
    },
    "custom": {
        "describe": "user-defined problem; solves the configured methods",
        "defaults": {
            "domain": "unit-square",
            "coefficient": "constant",
            "value": "1",
            "gamma0": "10",
            "load": "one",
        },
    },
}

_ALLOWED_KEYS = {
    "experiment", "domain", "coefficient", "epsilon", "value",
    "sigma2", "corr_x", "corr_y", "seed", "field_n",
    "H", "h", "H_list", "gamma0", "omega1",
    "L", "L0", "levels", "load", "wells", "methods", "outdir",
}


def list_experiments():
    """(id, description) pairs in registry order."""
    return [(k, v["describe"]) for k, v in EXPERIMENTS.items()]


def effective_config(config):
    """Merge a user config over its experiment's defaults.  Values stay
    strings; typed accessors parse them on use."""
    cfg = dict(config)
    exp = cfg.get("experiment", "").strip()
    if not exp:
        raise ExperimentError("config needs an 'experiment' key")
    if exp not in EXPERIMENTS:
        known = ", ".join(EXPERIMENTS)
        raise ExperimentError(f"unknown experiment {exp!r} (known: {known})")
    unknown = sorted(set(cfg) - _ALLOWED_KEYS)
    if unknown:
        raise ExperimentError(f"unknown config keys: {', '.join(unknown)}")
    eff = dict(EXPERIMENTS[exp]["defaults"])
    eff.update(cfg)
    eff["experiment"] = exp
    return eff


# ---------------------------------------------------------------------------
# problem construction

_CHANNEL_BASE = 128
_CHANNEL_STRIPS = ((4, 124, 44, 46), (4, 124, 84, 86))
_CHANNEL_INCLUSIONS = (
    (10, 16, 4), (28, 100, 5), (40, 64, 4), (58, 22, 5), (72, 96, 4),
    (90, 30, 5), (104, 108, 4), (116, 56, 5), (20, 70, 4), (86, 14, 4),
)


def channel_layout(n):
    """The high-contrast layout: two long horizontal channels plus
    scattered square inclusions, defined on a 128 grid and scaled up to
    the requested resolution."""
    if n % _CHANNEL_BASE:
        raise ExperimentError(
            f"channel field resolution must be a multiple of {_CHANNEL_BASE}")
    s = n // _CHANNEL_BASE
    return ChannelLayout(
        n=n,
        channels=tuple((x0 * s, x1 * s, y0 * s, y1 * s)
                       for x0, x1, y0, y1 in _CHANNEL_STRIPS),
        inclusions=tuple((x * s, y * s, k * s)
                         for x, y, k in _CHANNEL_INCLUSIONS),
    )


def _domain_for(cfg):
    name = cfg.get("domain", "unit-square")
    if name == "unit-square":
        return UNIT_SQUARE
    if name == "l-shape":
        return L_SHAPE
    raise ExperimentError(f"unknown domain {name!r}")


def _coefficient_for(cfg, fine_n):
    kind = cfg.get("coefficient", "")
    if kind == "constant":
        return Constant(_num(cfg, "value", 1.0))
    if kind == "ratio-periodic":
        return periodic_ratio_field(_num(cfg, "epsilon"))
    if kind == "well-periodic":
        return periodic_well_field(_num(cfg, "epsilon"))
    if kind == "lognormal":
        params = RandomFieldParams(
            n=_intval(cfg, "field_n", fine_n),
            variance=_num(cfg, "sigma2"),
            corr_x=_num(cfg, "corr_x"),
            corr_y=_num(cfg, "corr_y"),
            seed=_intval(cfg, "seed"),
        )
        return generate_lognormal_field(params)
    if kind == "channels":
        return build_channel_field(channel_layout(_intval(cfg, "field_n", fine_n)))
    raise ExperimentError(f"unknown coefficient {kind!r}")


def _load_for(cfg):
    """(load, wells): point loads when wells are configured, otherwise
    the configured volume density."""
    wells_text = cfg.get("wells", "").strip()
    if wells_text:
        spec = WellSpec(_tuples(wells_text, 4, "wells"))
        return spec.load(), spec
    kind = cfg.get("load", "one")
    if kind == "one":
        return VolumeLoad(lambda x, y: np.ones_like(np.asarray(x, dtype=np.float64))), None
    if kind == "zero":
        return VolumeLoad(lambda x, y: np.zeros_like(np.asarray(x, dtype=np.float64))), None
    raise ExperimentError(f"unknown load {kind!r}")


def _level_for(cfg, H, h):
    if cfg.get("L", "").strip():
        lvl = _intval(cfg, "L")
        if lvl < 1:
            raise ExperimentError("L must be >= 1")
        return lvl
    return choose_L(H, h, _num(cfg, "L0", 1.0))


def _gate(h, full_scale):
    if h < DESK_FINEST and not full_scale:
        raise ExperimentError(
            f"fine mesh size {h:g} is below the desk-scale limit "
            f"{DESK_FINEST:g}; rerun with --full-scale to confirm")


def _partition_for(cfg, full_scale):
    H = _num(cfg, "H")
    h = _num(cfg, "h")
    _gate(h, full_scale)
    rects = _tuples(cfg.get("omega1", ""), 4, "omega1")
    return partition_domain(_domain_for(cfg), rects, H, h)


# ---------------------------------------------------------------------------
# reference cache

# Keys with no effect on the reference solve; everything else feeds the
# cache digest so parameter edits never reuse a stale solution.
_REF_IGNORED = {"experiment", "H", "H_list", "L", "L0", "levels",
                "methods", "outdir"}


def _reference_cached(cfg, setup, load, outdir):
    kh = int(round(-math.log2(_num(cfg, "h"))))
    seed = cfg.get("seed", "0")
    payload = ";".join(f"{k}={v}" for k, v in sorted(cfg.items())
                       if k not in _REF_IGNORED)
    digest = hashlib.sha256(payload.encode()).hexdigest()[:12]
    path = (Path(outdir) / "cache"
            / f"ref-{cfg['experiment']}-h{kh}-seed{seed}-{digest}.npy")
    lf = setup.layout_fine
    if path.is_file():
        t0 = time.perf_counter()
        try:
            u = np.load(path)
        except (OSError, ValueError):
            u = None
        if u is not None and u.shape == (lf.n,):
            b = load.assemble(setup.part, lf)
            op = setup.operator
            scale = max(float(np.linalg.norm(b))
                        + float(np.max(np.abs(op).sum(axis=0)))
                        * float(np.linalg.norm(u)), 1e-300)
            res = float(np.linalg.norm(op @ u - b))
            if res <= 1e-9 * scale:
                return SolveResult(
                    method="reference", part=setup.part, layout=lf, u=u,
                    system_size=lf.n, wall_time=time.perf_counter() - t0,
                    residual=res / scale)
    result = solve_reference(setup, load=load)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".npy.tmp")
    with open(tmp, "wb") as fh:
        np.save(fh, result.u)
    os.replace(tmp, path)
    return result


# ---------------------------------------------------------------------------
# report plumbing


@dataclass
class ExperimentReport:
    """Everything one run produced: relative-error rows, per-method solve
    stats, optional sweep table / slopes / well pressures, the rendered
    report text and the files written."""

    experiment: str
    outdir: Path
    rows: list                      # (method, region, norm, value)
    sizes: dict                     # method -> solved system size
    times: dict                     # method -> wall seconds
    residuals: dict                 # method -> verified relative residual
    sweep: list = field(default_factory=list)   # dicts: H, L, *_rel
    slopes: dict = field(default_factory=dict)  # norm -> (slope, r2)
    wbp: dict = field(default_factory=dict)     # method -> ndarray
    text: str = ""
    files: dict = field(default_factory=dict)   # name -> Path

    def value(self, method, region, norm):
        for m, r, n, v in self.rows:
            if (m, r, n) == (method, region, norm):
                return v
        raise KeyError((method, region, norm))

    def methods(self):
        seen = []
        for m, _, _, _ in self.rows:
            if m not in seen:
                seen.append(m)
        return seen


def _error_rows(tag, rep):
    rows = []
    for region in ("omega", "omega1", "omega2"):
        if region not in rep:
            continue
        for norm in _NORMS:
            rows.append((tag, region, norm, rep[region][norm]))
    return rows


def _record(out, tag, result):
    out["sizes"][tag] = result.system_size
    out["times"][tag] = result.wall_time
    out["residuals"][tag] = result.residual


def fit_convergence_slope(series):
    """Least-squares slope of log(error) against log(H).

    Needs at least three points with positive sizes and errors.  Returns
    (slope, r_squared); a clean c*H^p series fits p with r2 = 1.
    """
    pts = [(float(a), float(b)) for a, b in series]
    if len(pts) < 3:
        raise ExperimentError("slope fit needs at least 3 points")
    if any(a <= 0 or b <= 0 for a, b in pts):
        raise ExperimentError("slope fit needs positive sizes and errors")
    x = np.log([a for a, _ in pts])
    y = np.log([b for _, b in pts])
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, _, _, _ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    total = y - y.mean()
    sst = float(total @ total)
    r2 = 1.0 if sst == 0.0 else 1.0 - float(resid @ resid) / sst
    return float(coef[0]), r2


# ---------------------------------------------------------------------------
# drivers


def _new_out():
    return {"rows": [], "sizes": {}, "times": {}, "residuals": {},
            "sweep": [], "slopes": {}, "wbp": {}, "sweep_files": ()}


def _drive_lsweep(cfg, full_scale, outdir):
    part = _partition_for(cfg, full_scale)
    coeff = _coefficient_for(cfg, part.fine_n)
    setup = MultiscaleSetup(part, coeff, penalty=_num(cfg, "gamma0", DEFAULT_PENALTY))
    load, _ = _load_for(cfg)
    out = _new_out()

    ref = _reference_cached(cfg, setup, load, outdir)
    _record(out, "reference", ref)

    for lvl in _int_list(cfg, "levels"):
        r = solve_fe_lodm(setup, load=load, level=lvl)
        tag = f"fe-lodm-L{lvl}"
        rep = error_report(part, setup.a1, setup.a2, setup.layout_fine, ref.u, r.u)
        out["rows"] += _error_rows(tag, rep)
        _record(out, tag, r)
        out["sweep"].append({
            "H": part.H, "L": lvl,
            "energy_rel": rep["omega"]["energy"],
            "l2_rel": rep["omega"]["l2"],
            "linf_rel": rep["omega"]["linf"],
        })
    if setup.layout_fine.n <= IDEAL_DOF_LIMIT:
        r = solve_ideal(setup, load=load)
        rep = error_report(part, setup.a1, setup.a2, setup.layout_fine, ref.u, r.u)
        out["rows"] += _error_rows("ideal", rep)
        _record(out, "ideal", r)
    out["sweep_files"] = ("lsweep.csv",)
    return out


def _convergence_point(args):
    """One coarse size of the convergence sweep; shaped for pool workers,
    so it rebuilds its own problem from the plain config dict."""
    cfg, h_text, u_ref = args
    cfg = dict(cfg)
    cfg["H"] = h_text
    part = _partition_for(cfg, True)
    coeff = _coefficient_for(cfg, part.fine_n)
    setup = MultiscaleSetup(part, coeff, penalty=_num(cfg, "gamma0", DEFAULT_PENALTY))
    if setup.layout_fine.n != len(u_ref):
        raise ExperimentError(
            "fine layouts disagree across the sweep; the refined region "
            "must align with every coarse size")
    load, _ = _load_for(cfg)
    lvl = _level_for(cfg, part.H, part.h)
    r = solve_fe_lodm(setup, load=load, level=lvl)
    rep = error_report(part, setup.a1, setup.a2, setup.layout_fine, u_ref, r.u)
    return {"H": part.H, "L": lvl, "rep": rep,
            "size": r.system_size, "wall": r.wall_time, "res": r.residual}


def _worker_count():
    raw = os.environ.get("FELODM_WORKERS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ExperimentError(f"FELODM_WORKERS must be an integer, got {raw!r}")


def _map_points(fn, points):
    workers = _worker_count()
    if workers <= 1 or len(points) <= 1:
        return [fn(p) for p in points]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, points))


def _drive_convergence(cfg, full_scale, outdir):
    h = _num(cfg, "h")
    _gate(h, full_scale)
    sizes = _num_list(cfg, "H_list")
    if not all(a > b for a, b in zip(sizes, sizes[1:])):
        raise ExperimentError("H_list must be strictly decreasing")

    # Reference once: the fine spaces coincide across the sweep.
    first = dict(cfg)
    first["H"] = str(cfg.get("H_list").split(",")[0].strip())
    part = _partition_for(first, True)
    coeff = _coefficient_for(first, part.fine_n)
    setup = MultiscaleSetup(part, coeff, penalty=_num(cfg, "gamma0", DEFAULT_PENALTY))
    load, _ = _load_for(cfg)
    out = _new_out()
    ref = _reference_cached(cfg, setup, load, outdir)
    _record(out, "reference", ref)

    h_texts = [s.strip() for s in cfg["H_list"].split(",") if s.strip()]
    results = _map_points(_convergence_point,
                          [(dict(cfg), t, ref.u) for t in h_texts])
    for point in results:
        tag = f"fe-lodm-H{1.0 / point['H']:.0f}"
        out["rows"] += _error_rows(tag, point["rep"])
        out["sizes"][tag] = point["size"]
        out["times"][tag] = point["wall"]
        out["residuals"][tag] = point["res"]
        out["sweep"].append({
            "H": point["H"], "L": point["L"],
            "energy_rel": point["rep"]["omega"]["energy"],
            "l2_rel": point["rep"]["omega"]["l2"],
            "linf_rel": point["rep"]["omega"]["linf"],
        })
    for norm in _NORMS:
        col = f"{norm}_rel" if norm != "linf" else "linf_rel"
        series = [(row["H"], row[col]) for row in out["sweep"]]
        out["slopes"][norm] = fit_convergence_slope(series)
    out["sweep_files"] = ("energy.csv", "l2.csv")
    return out


def _drive_compare(cfg, full_scale, outdir, methods=None):
    """Reference plus the requested methods on one fixed pair of mesh
    sizes; the backbone of the singularity and well experiments."""
    part = _partition_for(cfg, full_scale)
    coeff = _coefficient_for(cfg, part.fine_n)
    penalty = _num(cfg, "gamma0", DEFAULT_PENALTY)
    setup = MultiscaleSetup(part, coeff, penalty=penalty)
    load, wells = _load_for(cfg)
    lvl = _level_for(cfg, part.H, part.h)

    if methods is None:
        methods_text = cfg.get("methods", "").strip()
        if methods_text:
            methods = [m.strip() for m in methods_text.split(",") if m.strip()]
        elif part.mesh1.num_triangles == 0:
            methods = ["lodm"]
        else:
            methods = ["fe-lodm", "lodm"]

    out = _new_out()
    ref = _reference_cached(cfg, setup, load, outdir)
    _record(out, "reference", ref)
    if wells is not None:
        out["wbp"]["reference"] = compute_wbp(ref, part, coeff, wells)

    for m in methods:
        if m == "fe-lodm":
            r = solve_fe_lodm(setup, load=load, level=lvl)
        elif m == "ideal":
            r = solve_ideal(setup, load=load)
        elif m == "lodm":
            r = solve_lodm_baseline(part.domain, part.H, part.h, coeff=coeff,
                                    load=load, level=lvl, penalty=penalty)
        elif m == "reference":
            continue
        else:
            raise ExperimentError(f"unknown method {m!r}")
        u_cmp = r.u if r.part is part else transfer_fine_values(
            r, part, setup.layout_fine)
        rep = error_report(part, setup.a1, setup.a2, setup.layout_fine,
                           ref.u, u_cmp)
        out["rows"] += _error_rows(m, rep)
        _record(out, m, r)
        if wells is not None:
            out["wbp"][m] = compute_wbp(r, part, coeff, wells)
    return out


def _drive_plain(cfg, full_scale, outdir):
    return _drive_compare(cfg, full_scale, outdir)


_DRIVERS = {
    "ex1-Lsweep": _drive_lsweep,
    "ex1-convergence": _drive_convergence,
    "ex2-Lshape": _drive_plain,
    "ex3-channels": _drive_plain,
    "ex4-well-periodic": _drive_plain,
    "ex5-well-random": _drive_plain,
    "custom": _drive_plain,
}


# ---------------------------------------------------------------------------
# output files


def _write_text_atomic(path, text):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _errors_csv(rows):
    lines = ["method,region,norm,value"]
    lines += [f"{m},{r},{n},{v:.10e}" for m, r, n, v in rows]
    return "\n".join(lines) + "\n"


def _sweep_csv(sweep):
    lines = ["H,L,energy_rel,l2_rel,linf_rel"]
    for row in sweep:
        lines.append(f"{row['H']:.10g},{row['L']},{row['energy_rel']:.10e},"
                     f"{row['l2_rel']:.10e},{row['linf_rel']:.10e}")
    return "\n".join(lines) + "\n"


def _wbp_csv(wbp):
    lines = ["method,well,wbp"]
    for m, vals in wbp.items():
        for j, v in enumerate(vals, start=1):
            lines.append(f"{m},{j},{v:.10e}")
    return "\n".join(lines) + "\n"


def _render_report(cfg, out):
    lines = [f"experiment: {cfg['experiment']}"]
    for k in sorted(cfg):
        if k != "experiment":
            lines.append(f"  {k} = {cfg[k]}")
    lines.append("")

    rows_by_method = {}
    for m, region, norm, v in out["rows"]:
        rows_by_method.setdefault(m, {}).setdefault(region, {})[norm] = v

    for m in out["sizes"]:
        lines.append(f"method {m}: unknowns {out['sizes'][m]}, "
                     f"wall {out['times'][m]:.2f} s, "
                     f"residual {out['residuals'][m]:.3e}")
        for region, vals in rows_by_method.get(m, {}).items():
            lines.append(f"  {region}: energy {vals['energy']:.6e}, "
                         f"l2 {vals['l2']:.6e}, linf {vals['linf']:.6e}")
        if m in out["wbp"]:
            for j, v in enumerate(out["wbp"][m], start=1):
                lines.append(f"  well {j}: wbp {v:.17g}")
    if out["slopes"]:
        lines.append("")
        for norm in _NORMS:
            if norm in out["slopes"]:
                slope, r2 = out["slopes"][norm]
                lines.append(f"slope {norm}: {slope:.4f} (r2 {r2:.4f})")
    return "\n".join(lines) + "\n"


def run_experiment(config, outdir=None, full_scale=False):
    """Run one configured experiment end to end.

    ``config`` is a path to a key=value file or an equivalent dict.  The
    output directory resolves CLI argument over config key over
    ``results/<experiment>``.  Writes report.txt and errors.csv, plus the
    experiment's sweep or well tables, and returns the ExperimentReport.
    """
    if isinstance(config, (str, Path)):
        config = load_config(config)
    cfg = effective_config(config)
    exp = cfg["experiment"]
    out_path = Path(outdir or cfg.get("outdir") or Path("results") / exp)
    out_path.mkdir(parents=True, exist_ok=True)

    out = _DRIVERS[exp](cfg, full_scale, out_path)

    files = {}
    files["errors.csv"] = out_path / "errors.csv"
    _write_text_atomic(files["errors.csv"], _errors_csv(out["rows"]))
    for name in out["sweep_files"]:
        files[name] = out_path / name
        _write_text_atomic(files[name], _sweep_csv(out["sweep"]))
    if out["wbp"]:
        files["wbp.csv"] = out_path / "wbp.csv"
        _write_text_atomic(files["wbp.csv"], _wbp_csv(out["wbp"]))
    text = _render_report(cfg, out)
    files["report.txt"] = out_path / "report.txt"
    _write_text_atomic(files["report.txt"], text)

    return ExperimentReport(
        experiment=exp, outdir=out_path, rows=out["rows"],
        sizes=out["sizes"], times=out["times"], residuals=out["residuals"],
        sweep=out["sweep"], slopes=out["slopes"], wbp=out["wbp"],
        text=text, files=files)
