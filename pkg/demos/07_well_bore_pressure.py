"""Well bore pressures via the Peaceman functional.

An extraction/injection well pair drives the flow; each well is a point
source.  The bore pressure combines the computed pressure at the well
with a logarithmic near-well model, using the geometric mean of the
coefficient around the well.  The mirrored geometry makes the two
pressures antisymmetric, a cheap correctness check.
"""

from felodm import run_experiment

report = run_experiment({
    "experiment": "ex4-well-periodic",
    "H": "2^-4",
    "h": "2^-6",
    "epsilon": "1/16",
    "omega1": "3/16,11/16,5/16,13/16; 11/16,3/16,13/16,5/16",
    "L": "2",
}, outdir="results/demo-wells")

for method, vals in report.wbp.items():
    anti = abs(vals[0] + vals[1]) / abs(vals[0])
    print(f"{method:9s} wbp1 {vals[0]:+.6f}  wbp2 {vals[1]:+.6f}  "
          f"antisymmetry {anti:.2e}")

ref = report.wbp["reference"]
for m in ("fe-lodm", "lodm"):
    err = abs(report.wbp[m][0] - ref[0])
    print(f"{m:8s} wbp error at well 1: {err:.3e}")
