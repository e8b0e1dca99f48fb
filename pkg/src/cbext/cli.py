"""Command line entry point.

Every flag mirrors a JSON config key (``--c-plus`` is ``c_plus``).  A
``--config`` file is read first and explicit flags override it.  Exit codes:
0 on success, 2 for invalid input, 3 for numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
from scipy import stats

from . import io as cbio
from .asymptotics import StatisticKind, simulate_scan
from .errors import GreyConditionFails, NumericalError, ValidationError
from .kernel import build_kernel, yaglom_check
from .lamperti import reflect_at_infimum, reverse_at_extinction, simulate_ensemble, time_change
from .mechanism import MechanismSpec, estimate_exponents, grey_condition, make_mechanism
from .paths import policy_from_dict, simulate_path, write_path_binary
from .scale import hypothesis_h_check, make_scale

MECH_KEYS = ("preset", "c_plus", "alpha", "beta", "a")


class UsageError(ValidationError):
    pass


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _add_common(p, seeded=False):
    g = p.add_argument_group("mechanism")
    g.add_argument("--preset")
    g.add_argument("--c-plus", dest="c_plus", type=float)
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--a", type=float)
    p.add_argument("--config", help="JSON config; explicit flags win")
    p.add_argument("--output", help="write here instead of stdout")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--seed", type=int)
    if seeded:
        p.add_argument("--workers", type=int)


def _add_policy(p):
    p.add_argument("--x0", type=float)
    p.add_argument("--policy", choices=("fixed", "adaptive", "relative"))
    p.add_argument("--eps", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--dt-min", dest="dt_min", type=float)
    p.add_argument("--dt-max", dest="dt_max", type=float)
    p.add_argument("--floor-ratio", dest="floor_ratio", type=float)


def build_parser():
    parser = argparse.ArgumentParser(prog="cbext", description="CB-process extinction toolkit")
    top = parser.add_subparsers(dest="group", required=True)

    mech = top.add_parser("mechanism").add_subparsers(dest="command", required=True)
    p = mech.add_parser("inspect", help="criticality, Grey condition, exponents")
    _add_common(p)

    kern = top.add_parser("kernel").add_subparsers(dest="command", required=True)
    p = kern.add_parser("table", help="t, phi(t), varphi(t)")
    _add_common(p)
    p.add_argument("--t", type=_floats, help="comma separated times")
    p.add_argument("--numeric", action="store_const", const=True)
    p = kern.add_parser("yaglom", help="conditional transform against the Yaglom limit")
    _add_common(p)
    p.add_argument("--x0", type=float)
    p.add_argument("--t", type=_floats)
    p.add_argument("--lambda", dest="lambda_", type=_floats)

    sc = top.add_parser("scale").add_subparsers(dest="command", required=True)
    p = sc.add_parser("table", help="x, W(x)")
    _add_common(p)
    p.add_argument("--x", type=_floats)
    p.add_argument("--numeric", action="store_const", const=True)
    p = sc.add_parser("check-h", help="limsup W(bx)/W(x) as x -> 0")
    _add_common(p)
    p.add_argument("--ratio", type=_floats)

    sim = top.add_parser("simulate").add_subparsers(dest="command", required=True)
    p = sim.add_parser("paths", help="one path reversed from extinction")
    _add_common(p)
    _add_policy(p)
    p.add_argument("--index", type=int)
    p.add_argument("--view", choices=("reversed", "reflected", "forward"))
    p.add_argument("--dump", help="also write the Levy path in binary form")
    p = sim.add_parser("extinction", help="Monte Carlo extinction times")
    _add_common(p, seeded=True)
    _add_policy(p)
    p.add_argument("--n-paths", dest="n_paths", type=int)

    scan = top.add_parser("scan").add_subparsers(dest="command", required=True)
    p = scan.add_parser("lil", help="iterated-log scan near extinction")
    _add_common(p, seeded=True)
    _add_policy(p)
    p.add_argument("--n-paths", dest="n_paths", type=int)
    p.add_argument("--kind", choices=[k.value for k in StatisticKind])
    p.add_argument("--r", type=float)
    p.add_argument("--n0", type=int)
    p.add_argument("--n1", type=int)
    p.add_argument("--window-start", dest="window_start", type=int)
    return parser


DEFAULTS = {
    "seed": 0,
    "workers": 1,
    "x0": 1.0,
    "n_paths": 1000,
    "index": 0,
    "view": "reversed",
    "floor_ratio": None,
    "eps": None,
    "r": 2.0,
    "n0": 3,
    "n1": 20,
    "kind": "reversed",
    "numeric": False,
}


def _merge(args):
    cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"--config: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("--config: top level must be an object")
        mech = cfg.pop("mechanism", None)
        if mech:
            cfg.update(mech)
        if "lambda" in cfg:
            cfg["lambda_"] = cfg.pop("lambda")
    flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("group", "command", "config")}
    merged = {**DEFAULTS, **cfg, **flags}
    for key in ("t", "x", "lambda_", "ratio"):
        if isinstance(merged.get(key), (int, float)):
            merged[key] = [merged[key]]
    return merged


def _mechanism(cfg):
    if not cfg.get("preset"):
        raise UsageError("--preset is required")
    spec = MechanismSpec.from_dict({k: cfg[k] for k in MECH_KEYS if cfg.get(k) is not None})
    return spec, make_mechanism(spec)


def _require(cfg, *keys):
    for k in keys:
        if cfg.get(k) in (None, []):
            raise UsageError(f"--{k.rstrip('_').replace('_', '-')} is required")


def _policy(cfg, default_kind, default_eps):
    kind = cfg.get("policy") or default_kind
    d = {"kind": kind}
    if kind == "fixed":
        _require(cfg, "dt")
        d["dt"] = cfg["dt"]
    else:
        d["eps"] = cfg["eps"] if cfg.get("eps") is not None else default_eps
        for k in ("dt_min", "dt_max"):
            if cfg.get(k) is not None:
                d[k] = cfg[k]
    return policy_from_dict(d)


def _meta(cfg, spec):
    return {"seed": cfg["seed"], "mechanism": spec.to_dict()}


def cmd_mechanism_inspect(cfg):
    spec, m = _mechanism(cfg)
    out = {
        **_meta(cfg, spec),
        "criticality": m.criticality.value,
        "psi_prime_zero": m.psi_prime_zero,
        "largest_root": m.largest_root,
        "grey_condition": grey_condition(m),
        **estimate_exponents(m).to_dict(),
    }
    if cfg.get("format") == "csv":
        keys = sorted(k for k in out if k not in ("seed", "mechanism"))
        return cbio.csv_text(("key", "value"), [(k, out[k]) for k in keys], _meta(cfg, spec))
    return cbio.json_text(out)


def _kernel(cfg, m):
    return build_kernel(m, numeric=bool(cfg.get("numeric")))


def cmd_kernel_table(cfg):
    _require(cfg, "t")
    spec, m = _mechanism(cfg)
    k = _kernel(cfg, m)
    t = np.asarray(cfg["t"], dtype=float)
    phi, vphi = np.atleast_1d(k.phi(t)), np.atleast_1d(k.varphi(t))
    rows = list(zip(t, phi, vphi))
    if cfg.get("format") == "json":
        return cbio.json_text({**_meta(cfg, spec), "rows": [dict(t=a, phi=b, varphi=c) for a, b, c in rows]})
    return cbio.csv_text(("t", "phi", "varphi"), rows, _meta(cfg, spec))


def cmd_kernel_yaglom(cfg):
    _require(cfg, "t", "lambda_")
    spec, m = _mechanism(cfg)
    k = _kernel(cfg, m)
    tab = yaglom_check(k, cfg["x0"], cfg["t"], cfg["lambda_"])
    rows = [
        (t, lam, tab.values[i, j], tab.limits[j], tab.errors[i, j])
        for i, t in enumerate(tab.t)
        for j, lam in enumerate(tab.lam)
    ]
    if cfg.get("format") == "json":
        return cbio.json_text({
            **_meta(cfg, spec),
            "x0": cfg["x0"],
            "rows": [dict(zip(("t", "lambda", "value", "limit", "error"), r)) for r in rows],
            "sup_error": dict(zip(map(repr, tab.t.tolist()), tab.sup_error)),
            "decreasing_in_t": tab.decreasing_in_t(),
        })
    return cbio.csv_text(("t", "lambda", "value", "limit", "error"), rows, _meta(cfg, spec))


def cmd_scale_table(cfg):
    _require(cfg, "x")
    spec, m = _mechanism(cfg)
    w = make_scale(m, numeric=bool(cfg.get("numeric")))
    x = np.asarray(cfg["x"], dtype=float)
    rows = list(zip(x, np.atleast_1d(w(x))))
    if cfg.get("format") == "json":
        return cbio.json_text({**_meta(cfg, spec), "rows": [dict(x=a, W=b) for a, b in rows]})
    return cbio.csv_text(("x", "W"), rows, _meta(cfg, spec))


def cmd_scale_check_h(cfg):
    _require(cfg, "ratio")
    spec, m = _mechanism(cfg)
    res = hypothesis_h_check(make_scale(m), cfg["ratio"])
    rows = [(r.ratio, r.estimate, r.verdict) for r in res]
    if cfg.get("format") == "json":
        return cbio.json_text({**_meta(cfg, spec), "checks": [dict(ratio=a, estimate=b, verdict=c) for a, b, c in rows]})
    return cbio.csv_text(("ratio", "estimate", "verdict"), rows, _meta(cfg, spec))


def _grey(m):
    if not grey_condition(m):
        raise GreyConditionFails(f"mechanism {m.describe()} does not die out in finite time")


def cmd_simulate_paths(cfg):
    spec, m = _mechanism(cfg)
    _grey(m)
    policy = _policy(cfg, "adaptive", 1e-3)
    floor = cfg["floor_ratio"] if cfg.get("floor_ratio") is not None else 1e-9
    p = simulate_path(m, cfg["x0"], policy, seed=cfg["seed"], index=cfg["index"], floor_ratio=floor)
    if cfg.get("dump"):
        with open(cfg["dump"], "wb") as fh:
            write_path_binary(p, fh, spec, [cfg["seed"], cfg["index"]])
    tc = time_change(p)
    view = cfg["view"]
    if view == "forward":
        header, xs, ys = ("t", "value"), tc.cb_times, tc.cb_values
    else:
        rp = reverse_at_extinction(tc) if view == "reversed" else reflect_at_infimum(tc)
        header, xs, ys = ("s", "value"), rp.s, rp.values
    meta = {**_meta(cfg, spec), "index": cfg["index"]}
    if cfg.get("format") == "json":
        return cbio.json_text({**meta, "view": view, "extinction_time": tc.extinction_time,
                               "stop_reason": p.stop_reason, header[0]: xs, "value": ys})
    return cbio.csv_text(header, zip(xs, ys), meta)


def cmd_simulate_extinction(cfg):
    spec, m = _mechanism(cfg)
    _grey(m)
    k = build_kernel(m)
    policy = _policy(cfg, "adaptive", 1e-3)
    floor = cfg["floor_ratio"] if cfg.get("floor_ratio") is not None else 1e-9
    ens = simulate_ensemble(m, cfg["x0"], cfg["n_paths"], policy, seed=cfg["seed"],
                            floor_ratio=floor, workers=cfg["workers"])
    if cfg.get("format") == "csv":
        rows = list(zip(range(ens.n_paths), ens.extinction_times))
        return cbio.csv_text(("path", "T0"), rows, _meta(cfg, spec))
    t0 = ens.extinction_times
    ks = stats.kstest(t0, lambda t: k.extinction_cdf(cfg["x0"], np.maximum(t, 1e-300)))
    return cbio.json_text({**_meta(cfg, spec), **ens.summary(), "x0": cfg["x0"],
                           "ks_statistic": float(ks.statistic), "ks_pvalue": float(ks.pvalue)})


def cmd_scan_lil(cfg):
    spec, m = _mechanism(cfg)
    _grey(m)
    k = build_kernel(m)
    policy = _policy(cfg, "relative", 1e-3)
    floor = cfg["floor_ratio"] if cfg.get("floor_ratio") is not None else 1e-12
    n1 = cfg["n1"]
    reports = simulate_scan(m, k, cfg["n_paths"], kinds=(cfg["kind"],), r=cfg["r"], n0=cfg["n0"], n1=n1,
                            window_start=cfg.get("window_start"), x0=cfg["x0"], policy=policy,
                            seed=cfg["seed"], floor_ratio=floor, workers=cfg["workers"])
    rep = reports[StatisticKind(cfg["kind"])]
    if cfg.get("format") == "csv":
        rows = rep.csv_rows()
        return cbio.csv_text(rows[0], rows[1:], {**_meta(cfg, spec), "kind": rep.kind.value})
    return cbio.json_text(rep.to_dict())


COMMANDS = {
    ("mechanism", "inspect"): cmd_mechanism_inspect,
    ("kernel", "table"): cmd_kernel_table,
    ("kernel", "yaglom"): cmd_kernel_yaglom,
    ("scale", "table"): cmd_scale_table,
    ("scale", "check-h"): cmd_scale_check_h,
    ("simulate", "paths"): cmd_simulate_paths,
    ("simulate", "extinction"): cmd_simulate_extinction,
    ("scan", "lil"): cmd_scan_lil,
}


def run(argv=None, stdout=None):
    """Run one subcommand; returns the exit code."""
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _merge(args)
        text = COMMANDS[(args.group, args.command)](cfg)
        if cfg.get("output"):
            with open(cfg["output"], "w") as fh:
                fh.write(text)
        else:
            stdout.write(text)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


def main():
    try:
        code = run()
        sys.stdout.flush()
    except BrokenPipeError:
        # downstream closed early (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        code = 0
    sys.exit(code)


if __name__ == "__main__":
    main()
