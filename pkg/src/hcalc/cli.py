"""Command-line front end: ``hcalc <command> --config run.toml``.

Reports are JSON with sorted keys and no timestamps, so fixed configs give
byte-identical output.  Exit codes: 0 success, 2 configuration error,
3 numerical failure.
"""
import argparse
import copy
import csv
import json
import os
import re
import sys

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from . import __version__, approx, hgroup, intrinsic, measure, split
from .errors import HCalcError, UnknownIdentifierError, ExprSyntaxError
from .expr import parse_expr

COMMANDS = ("area", "jacobian", "uid-check", "holder", "approx", "measure", "dist")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(Exception):
    def __init__(self, diagnostics):
        super().__init__("\n".join(diagnostics))
        self.diagnostics = diagnostics


# ------------------------------------------------------------- validation

def _line_of(text, section, key=None):
    """1-based line of ``key`` inside ``[section]`` (or of the header), else 0."""
    current = None
    header = re.compile(r"^\s*\[([^\]]+)\]\s*$")
    for no, line in enumerate(text.splitlines(), 1):
        m = header.match(line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return no
            continue
        if current == section and key is not None and re.match(rf"^\s*{re.escape(key)}\s*=", line):
            return no
    return 0


class _Checker:
    def __init__(self, path, text):
        self.path, self.text, self.out = path, text, []

    def error(self, section, key, message):
        line = _line_of(self.text, section, key) or _line_of(self.text, section)
        where = f"{section}.{key}" if key else section
        self.out.append(f"{self.path}:{line}: [{where}] {message}")


def _is_num_list(x, length=None):
    ok = isinstance(x, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x)
    return ok and (length is None or len(x) == length)


def check_config(cfg, path="<config>", text="", command=None):
    """Schema and variable-name checks; returns a list of diagnostics."""
    c = _Checker(path, text)
    sp = cfg.get("splitting")
    s = None
    if not isinstance(sp, dict):
        c.error("splitting", None, "missing [splitting] section with integer n and k")
    else:
        n, k = sp.get("n"), sp.get("k")
        if not isinstance(n, int) or not isinstance(k, int):
            c.error("splitting", "n" if not isinstance(n, int) else "k", "n and k must be integers")
        elif not (n >= 1 and 1 <= k <= n):
            c.error("splitting", "k", f"splitting constraint 1 <= k <= n violated (n={n}, k={k})")
        else:
            s = split.Splitting(n, k)

    needs_surface = command not in (None, "dist") or "surface" in cfg
    if command == "measure" and cfg.get("measure", {}).get("set", "graph") != "graph":
        needs_surface = "surface" in cfg
    if command == "dist" and cfg.get("dist", {}).get("metric", "dinf") != "dinf":
        needs_surface = True
    surf = cfg.get("surface")
    if needs_surface and s is not None:
        if not isinstance(surf, dict):
            c.error("surface", None, "missing [surface] section")
        else:
            kind = surf.get("kind", "graph")
            exprs = surf.get("exprs")
            if kind not in ("graph", "levelset"):
                c.error("surface", "kind", f"kind must be 'graph' or 'levelset', got {kind!r}")
            elif not isinstance(exprs, list) or len(exprs) != s.k or not all(isinstance(e, str) for e in exprs):
                c.error("surface", "exprs", f"exprs must be a list of {s.k} expression strings")
            else:
                names = s.base_variables() if kind == "graph" else s.group_variables()
                for i, e in enumerate(exprs):
                    try:
                        parse_expr(e, names)
                    except UnknownIdentifierError as exc:
                        c.error("surface", "exprs",
                                f"exprs[{i}]: unknown variable {exc.name!r} for a {kind} surface "
                                f"(allowed: {', '.join(names)})")
                    except ExprSyntaxError as exc:
                        c.error("surface", "exprs", f"exprs[{i}]: {exc}")
        dom = cfg.get("domain")
        if not isinstance(dom, dict):
            c.error("domain", None, "missing [domain] section with lo and hi")
        else:
            lo, hi = dom.get("lo"), dom.get("hi")
            if not _is_num_list(lo, s.base_dim) or not _is_num_list(hi, s.base_dim):
                c.error("domain", "lo" if not _is_num_list(lo, s.base_dim) else "hi",
                        f"lo and hi must be lists of {s.base_dim} numbers")
            elif any(b <= a for a, b in zip(lo, hi)):
                c.error("domain", "hi", "domain box is degenerate: need hi > lo on every axis")

    if s is not None:
        _check_sections(c, cfg, s)
    return c.out


def _check_sections(c, cfg, s):
    def lst(section, key, length=None, required=False):
        sec = cfg.get(section, {})
        if key not in sec:
            if required:
                c.error(section, key, "required key is missing")
            return
        if not _is_num_list(sec[key], length):
            c.error(section, key, "expected a list of numbers" +
                    (f" of length {length}" if length else ""))

    def decreasing(section, key):
        v = cfg.get(section, {}).get(key)
        if _is_num_list(v) and (not v or any(b >= a for a, b in zip(v, v[1:])) or min(v) <= 0):
            c.error(section, key, "schedule must be positive and strictly decreasing")

    if "jacobian" in cfg:
        lst("jacobian", "point", s.base_dim)
        m = cfg["jacobian"].get("method", "curves")
        if m not in ("curves", "analytic", "levelset"):
            c.error("jacobian", "method", f"unknown method {m!r}")
    if "uid" in cfg:
        lst("uid", "center", s.base_dim)
        lst("uid", "radii")
        decreasing("uid", "radii")
        if cfg["uid"].get("kind", "uid") not in ("uid", "id"):
            c.error("uid", "kind", "kind must be 'uid' or 'id'")
    if "holder" in cfg:
        lst("holder", "lo", s.base_dim)
        lst("holder", "hi", s.base_dim)
        lst("holder", "radii")
        decreasing("holder", "radii")
    if "approx" in cfg:
        lst("approx", "epsilons")
        decreasing("approx", "epsilons")
    if "measure" in cfg:
        sec = cfg["measure"]
        kind = sec.get("set", "graph")
        if kind not in ("graph", "box", "curve"):
            c.error("measure", "set", f"set must be graph, box or curve, got {kind!r}")
        if kind == "box":
            lst("measure", "box_lo", s.group_dim, True)
            lst("measure", "box_hi", s.group_dim, True)
            lo, hi = sec.get("box_lo"), sec.get("box_hi")
            if _is_num_list(lo, s.group_dim) and _is_num_list(hi, s.group_dim) and \
                    any(b < a for a, b in zip(lo, hi)):
                c.error("measure", "box_hi", "box is degenerate: need box_hi >= box_lo")
        if kind == "curve":
            curve = sec.get("curve")
            if not isinstance(curve, list) or len(curve) != s.group_dim:
                c.error("measure", "curve", f"curve must list {s.group_dim} expressions in u")
            else:
                for i, e in enumerate(curve):
                    try:
                        parse_expr(e, ["u"])
                    except (UnknownIdentifierError, ExprSyntaxError) as exc:
                        c.error("measure", "curve", f"curve[{i}]: {exc}")
        lst("measure", "deltas")
        decreasing("measure", "deltas")
        m = sec.get("m")
        if not isinstance(m, (int, float)) or isinstance(m, bool) or m < 0:
            c.error("measure", "m", "m must be a nonnegative number")
        for kd in sec.get("kinds", list(measure.KINDS)):
            if kd not in measure.KINDS:
                c.error("measure", "kinds", f"unknown measure kind {kd!r}")
    if "dist" in cfg:
        metric = cfg["dist"].get("metric", "dinf")
        size = s.group_dim if metric == "dinf" else s.base_dim
        lst("dist", "p", size, True)
        lst("dist", "q", size)
        if metric not in ("dinf", "dphi", "Dphi", "rho"):
            c.error("dist", "metric", f"unknown metric {metric!r}")


def load_config(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    text = raw.decode("utf-8", errors="replace")
    try:
        cfg = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: {exc}"])
    return cfg, text


def validate(path):
    """Diagnostics for a config file, without running any numerics."""
    try:
        cfg, text = load_config(path)
    except ConfigError as exc:
        return exc.diagnostics
    return check_config(cfg, str(path), text)


# ------------------------------------------------------------- building

def build_splitting(cfg):
    return split.Splitting(cfg["splitting"]["n"], cfg["splitting"]["k"])


def build_surface(cfg):
    """Returns ``(phi, levelset or None)``."""
    s = build_splitting(cfg)
    surf, dom = cfg["surface"], cfg["domain"]
    if surf.get("kind", "graph") == "graph":
        return split.GraphFunction.from_exprs(s, surf["exprs"], dom["lo"], dom["hi"]), None
    f = approx.LevelSetFunction.from_exprs(s, surf["exprs"])
    return approx.implicit_graph(f, dom["lo"], dom["hi"]), f


def _opts(cfg, section):
    sec = cfg.get(section, {})
    return intrinsic.IntrinsicOptions(probes=int(sec.get("probes", 256)), seed=int(cfg["run"]["seed"]))


def _tolist(x):
    return np.asarray(x, float).tolist()


def run_area(cfg, out):
    phi, f = build_surface(cfg)
    sec = cfg.get("area", {})
    region = None
    if "region" in sec:
        s = phi.splitting
        node = parse_expr(sec["region"], s.group_variables())
        region = lambda p: node.ev([p[..., i] for i in range(p.shape[-1])]) >= 0
    res = measure.graph_area(phi, region=region, nodes=int(sec.get("nodes", 33)),
                             qmc_points=int(sec.get("qmc_points", 2 ** 16)),
                             seed=int(sec.get("qmc_seed", 0xC0FFEE)), levelset=f,
                             jacobian=sec.get("jacobian", "auto"))
    d = res.to_dict()
    d["area"] = d.pop("value")
    return d


def run_jacobian(cfg, out):
    phi, f = build_surface(cfg)
    sec = cfg.get("jacobian", {})
    dom = cfg["domain"]
    point = np.asarray(sec.get("point", 0.5 * (np.asarray(dom["lo"]) + np.asarray(dom["hi"]))), float)
    method = sec.get("method", "curves")
    if method == "levelset":
        if f is None:
            f = approx.lift_graph(phi)
        J = intrinsic.jacobian_from_levelset(f, approx.graph_point(point, phi(point), phi.splitting))
        flags = None
    elif method == "analytic":
        J, flags = intrinsic.analytic_jacobian(phi, point), None
    else:
        J, flags = intrinsic.intrinsic_jacobian(phi, point, return_flags=True)
    rep = {"point": _tolist(point), "method": method, "jacobian": _tolist(J)}
    if flags is not None:
        rep["flagged"] = np.asarray(flags).tolist()
    return rep


def run_uid(cfg, out):
    phi, _ = build_surface(cfg)
    sec = cfg.get("uid", {})
    dom = cfg["domain"]
    center = np.asarray(sec.get("center", 0.5 * (np.asarray(dom["lo"]) + np.asarray(dom["hi"]))), float)
    radii = sec.get("radii", [0.2, 0.1, 0.05, 0.025])
    opts = _opts(cfg, "uid")
    J = intrinsic.intrinsic_jacobian(phi, center, opts)
    rep = intrinsic.residual_report(phi, center, J, radii, kind=sec.get("kind", "uid"), opts=opts,
                                    slack=float(sec.get("slack", 0.05)))
    _write_csv(out, "uid-check.csv", ["radius", "residual"], zip(rep.radii, rep.values))
    d = rep.to_dict()
    d["jacobian"] = _tolist(J)
    return d


def run_holder(cfg, out):
    phi, _ = build_surface(cfg)
    sec = cfg.get("holder", {})
    lo = sec.get("lo", cfg["domain"]["lo"])
    hi = sec.get("hi", cfg["domain"]["hi"])
    radii = sec.get("radii", [0.2, 0.1, 0.05, 0.025])
    seed = int(cfg["run"]["seed"])
    rep = intrinsic.holder_report(phi, lo, hi, radii, seed=seed).to_dict()
    _write_csv(out, "holder.csv", ["radius", "alpha", "upsilon"],
               zip(rep["radii"], rep["alpha"], rep["upsilon"]))
    if sec.get("characterize", False):
        ch = intrinsic.characterization_report(phi, lo, hi, radii, _opts(cfg, "holder"))
        rep["characterization"] = ch.to_dict()
    return rep


def run_approx(cfg, out):
    phi, f = build_surface(cfg)
    sec = cfg.get("approx", {})
    dom = cfg["domain"]
    source = phi if f is None else f
    fam = approx.approx_family(source, sec.get("epsilons", [0.2, 0.1, 0.05, 0.025]),
                               lo=sec.get("lo", dom["lo"]), hi=sec.get("hi", dom["hi"]),
                               nodes=sec.get("nodes"), jac_nodes=sec.get("jacobian_nodes"))
    d = fam.to_dict()
    _write_csv(out, "approx.csv", ["epsilon", "sup_phi_gap", "sup_jac_gap", "min_det"],
               zip(d["epsilons"], d["sup_phi_gap"], d["sup_jac_gap"], d["min_det"]))
    return d


def _measure_sampler(cfg):
    sec = cfg["measure"]
    kind = sec.get("set", "graph")
    if kind == "box":
        return measure.BoxSampler(sec["box_lo"], sec["box_hi"])
    if kind == "curve":
        nodes = [parse_expr(e, ["u"]) for e in sec["curve"]]
        u0, u1 = sec.get("u_range", [0.0, 1.0])

        def gamma(u):
            return np.stack([np.broadcast_to(nd.ev([u]), u.shape).astype(float) for nd in nodes], -1)
        return measure.CurveSampler(gamma, u0, u1)
    phi, _ = build_surface(cfg)
    return measure.GraphSampler(phi)


def run_measure(cfg, out):
    sec = cfg["measure"]
    sampler = _measure_sampler(cfg)
    m = float(sec["m"])
    kinds = sec.get("kinds", list(measure.KINDS))
    strategy = sec.get("strategy", "cells")
    rows, entries = [], []
    for delta in sec.get("deltas", [0.2, 0.1, 0.05]):
        pts = measure.PointSampler(sampler.points(delta))
        for kind in kinds:
            est = measure.premeasure_estimate(pts, kind, m, delta, strategy,
                                              float(sec.get("min_radius", 0.0)))
            entries.append(est.to_dict())
            rows.append((delta, kind, est.value, est.cover_size))
            if sec.get("covers", False) and out is not None:
                est.write_csv(os.path.join(out, f"cover-{kind}-{delta!r}.csv"))
    _write_csv(out, "measure.csv", ["delta", "kind", "value", "cover_size"], rows)
    return {"estimates": entries, "m": m, "beta": measure.beta_const(m)}


def run_dist(cfg, out):
    sec = cfg["dist"]
    metric = sec.get("metric", "dinf")
    p = np.asarray(sec["p"], float)
    if metric == "dinf":
        q = np.asarray(sec.get("q", np.zeros(len(p))), float)
        return {"metric": metric, "distance": float(hgroup.dist_inf(p, q))}
    phi, _ = build_surface(cfg)
    q = np.asarray(sec.get("q", phi.lo), float)
    fn = {"dphi": split.graph_dist, "Dphi": split.sym_graph_dist, "rho": split.rho_dist}[metric]
    return {"metric": metric, "distance": float(fn(phi, p, q))}


RUNNERS = {"area": run_area, "jacobian": run_jacobian, "uid-check": run_uid, "holder": run_holder,
           "approx": run_approx, "measure": run_measure, "dist": run_dist}


def _write_csv(out, name, header, rows):
    if out is None:
        return
    with open(os.path.join(out, name), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _clean(x):
    """JSON-safe copy: NaN/inf become null."""
    if isinstance(x, float):
        return x if np.isfinite(x) else None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.generic):
        return _clean(x.item())
    return x


def write_report(out, command, report):
    text = json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"
    if out is not None:
        with open(os.path.join(out, f"{command}.json"), "w") as fh:
            fh.write(text)
    return text


def run(command, config_path, out=None, seed=None, threads=None, quiet=True):
    """Run one subcommand; returns ``(exit_code, report_dict)``."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    try:
        cfg, text = load_config(config_path)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, command, None, out, exc.diagnostics, quiet)
    except OSError as exc:
        return _fail(EXIT_CONFIG, command, None, out, [str(exc)], quiet)
    cfg = copy.deepcopy(cfg)
    run_sec = cfg.setdefault("run", {})
    if seed is not None:
        run_sec["seed"] = int(seed)
    run_sec.setdefault("seed", 0)
    if threads is not None:
        run_sec["threads"] = int(threads)
    run_sec.setdefault("threads", int(os.environ.get("HCALC_THREADS", "1")))
    out = out if out is not None else run_sec.get("out")
    if out is not None:
        os.makedirs(out, exist_ok=True)
    diags = check_config(cfg, str(config_path), text, command)
    if command == "measure" and "measure" not in cfg:
        diags.append(f"{config_path}:0: [measure] section is required")
    if command == "dist" and "dist" not in cfg:
        diags.append(f"{config_path}:0: [dist] section is required")
    if diags:
        return _fail(EXIT_CONFIG, command, cfg, out, diags, quiet)
    try:
        result = RUNNERS[command](cfg, out)
    except HCalcError as exc:
        return _fail(EXIT_NUMERIC, command, cfg, out, [f"{type(exc).__name__}: {exc}"], quiet)
    report = {"command": command, "version": __version__, "config": cfg, "status": "ok", **result}
    text = write_report(out, command, report)
    if not quiet:
        sys.stdout.write(text)
    return EXIT_OK, report


def _fail(code, command, cfg, out, messages, quiet):
    report = {"command": command, "version": __version__, "config": cfg,
              "status": "config-error" if code == EXIT_CONFIG else "numerical-failure",
              "errors": messages}
    write_report(out, command, report)
    for m in messages:
        sys.stderr.write(m + "\n")
    return code, report


def main(argv=None):
    parser = argparse.ArgumentParser(prog="hcalc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hcalc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS + ("validate",):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)
    if args.command == "validate":
        if not os.path.exists(args.config):
            sys.stderr.write(f"{args.config}: no such file\n")
            return EXIT_CONFIG
        diags = validate(args.config)
        for d in diags:
            print(d)
        if not diags and not args.quiet:
            print(f"{args.config}: ok")
        return EXIT_CONFIG if diags else EXIT_OK
    code, _ = run(args.command, args.config, args.out, args.seed, args.threads, args.quiet)
    return code


if __name__ == "__main__":
    sys.exit(main())
