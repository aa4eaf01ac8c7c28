"""Batch front-end: JSON experiment configs in, CSV/JSON tables and verdicts out.

Exit status: 0 on success, 2 when a formula check fails beyond tolerance,
1 on usage or domain errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path as FsPath

import jsonschema
import numpy as np

from . import acceptance
from . import canonical as cn
from . import lagrangian as lg
from . import maslov as ms
from . import oscillatory as osc
from . import phase as ph
from . import symbols as sy
from .errors import FIOError

TASKS = ("validate-map", "indices", "maslov-path", "compose-symbols", "extract-symbol", "verify-suite")
OUT_ENV = "FIOCALC_OUT"
MAP_KEYS = ("n", "t", "f", "L", "metric", "steps")

EXIT_OK, EXIT_USAGE, EXIT_MISMATCH = 0, 1, 2


class UsageError(Exception):
    pass


def load_schema():
    return json.loads(resources.files("fiocalc").joinpath("data/experiment.schema.json").read_text())


def validate_config(config):
    """Raise :class:`UsageError` unless ``config`` matches the experiment schema."""
    try:
        jsonschema.validate(config, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise UsageError(f"invalid config at {where}: {exc.message}") from None


def fmt(v):
    """17 significant digits, '.' decimal, independent of locale."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(fmt(v) for v in row) for row in rows]
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_json(path, payload):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v).__name__)


def _cplx(z):
    z = complex(z)
    return [z.real, z.imag]


class Run:
    """One experiment: holds the config, the output directory and the mismatch log."""

    def __init__(self, config, out, echo=print):
        self.config = config
        self.out = FsPath(out)
        self.echo = echo
        self.mismatches = []
        self.files = []
        self.seed = config.get("seed", 0)

    def rng(self):
        return np.random.default_rng(self.seed)

    def mismatch(self, operation, anchor, message):
        line = f"MISMATCH {operation} check {anchor}: {message}"
        self.mismatches.append(line)
        self.echo(line)

    def path_for(self, name):
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        self.files.append(str(p))
        return p

    # -- config helpers -----------------------------------------------------

    def point(self):
        pt = self.config.get("point")
        if pt is None:
            raise UsageError(f"task {self.config['task']} needs a 'point'")
        return np.asarray(pt["y"], float), np.asarray(pt["eta"], float)

    def dim(self):
        for key in ("point", "probe"):
            if key in self.config:
                return len(self.config[key]["y"])
        if "path" in self.config:
            p = self.config["path"]
            return len(p["waypoints"][0]["y"]) if "waypoints" in p else len(p["circle"]["y"])
        return self.config.get("n")

    def map_from(self, entry):
        entry = {"map": entry} if isinstance(entry, str) else dict(entry)
        entry.setdefault("n", self.dim())
        return cn.build_map(entry)

    def single_map(self):
        if "map" not in self.config:
            raise UsageError(f"task {self.config['task']} needs a 'map'")
        entry = self.config["map"]
        entry = {"map": entry} if isinstance(entry, str) else dict(entry)
        for key in MAP_KEYS:
            if key in self.config and key not in entry:
                entry[key] = self.config[key]
        return self.map_from(entry)

    def two_maps(self):
        if "maps" not in self.config:
            raise UsageError(f"task {self.config['task']} needs 'maps' with two entries")
        return [self.map_from(m) for m in self.config["maps"]]

    def phase_config(self):
        cfg = self.config.get("phase", "real_chart")
        return {"phase": cfg} if isinstance(cfg, str) else dict(cfg)

    def path(self):
        p = self.config.get("path")
        if p is None:
            raise UsageError("task maslov-path needs a 'path'")
        if "waypoints" in p:
            pts = [(w["y"], w["eta"]) for w in p["waypoints"]]
            return ms.Path.from_waypoints(pts, per_segment=p.get("per_segment", 50))
        c = p["circle"]
        return ms.Path.eta_circle(c["y"], c.get("radius", 1.0), c.get("samples", 101), c.get("turns", 1.0),
                                  c.get("start", 0.0))

    def amplitude(self, text, n):
        return sy.Amplitude.from_expression(text, n) if text is not None else sy.Amplitude.constant()

    def probe(self, n, fast=False):
        p = self.config.get("probe")
        if p is None:
            raise UsageError(f"task {self.config['task']} needs a 'probe'")
        if len(p["y"]) != n or len(p["eta"]) != n:
            raise UsageError(f"probe point has the wrong dimension for n = {n}")
        lams = p.get("lambdas")
        if fast or p.get("fast", False):
            return osc.fast_probe(p["y"], p["eta"], lams or [30, 45, 60, 90, 120])
        kw = {} if lams is None else {"lambdas": lams}
        if "sigma" in p:
            kw["sigma"] = p["sigma"]
        return osc.ExtractionSpec(p["y"], p["eta"], **kw)


# -- tasks ------------------------------------------------------------------------


def task_validate_map(run):
    phi = run.single_map()
    tol = run.config.get("tol", 1e-6 if isinstance(phi, cn.FlowMap) else 1e-10)
    samples = cn.random_samples(phi.n, run.config.get("samples", 100), run.rng())
    rep = cn.validate_canonical(phi, samples, tol=tol)
    rows = [(name, val, tol, val < tol) for name, val in rep.residuals.items()]
    write_csv(run.path_for("validate-map.csv"), ["identity", "max_residual", "tol", "passed"], rows)
    for name, val in rep.failures.items():
        run.mismatch("canonical.validate_canonical", name.split("(")[0], f"{phi.name}: residual {val:.3e} >= {tol:.1e} ({name})")
    return {"map": phi.name, "residuals": rep.residuals, "tol": tol}


def task_indices(run):
    phi1, phi2 = run.two_maps()
    pts = run.config.get("points") or [run.config.get("point")]
    if pts[0] is None:
        raise UsageError("task indices needs a 'point' or 'points'")
    rows = []
    for p in pts:
        y, eta = np.asarray(p["y"], float), np.asarray(p["eta"], float)
        z, zeta = phi1(y, eta)
        w, omega = phi2.inverse()(z, zeta)
        L1 = sy._single(phi1.image_of_vertical(y, eta))
        L2 = sy._single(phi2.image_of_vertical(w, omega))
        g = lg.varkappa_graphs(L1, L2, run.rng())
        kd = lg.kashiwara_direct(L1, L2)
        rd = lg.r_index(L1, L2)
        rows.append([*y, *eta, g.kappa, g.r, g.varkappa, kd, rd])
        if g.kappa != kd:
            run.mismatch("symbols.composition_index", "kashiwara2", f"graph kappa {g.kappa} vs direct {kd} at y={list(y)}, eta={list(eta)}")
        if 2 * g.varkappa != kd + rd:
            run.mismatch("symbols.composition_index", "kashiwara3", f"graph varkappa {g.varkappa} vs (kappa + r)/2 = {(kd + rd) / 2} at y={list(y)}")
    n = phi1.n
    header = [f"y{i + 1}" for i in range(n)] + [f"eta{i + 1}" for i in range(n)] + \
             ["kappa", "r", "varkappa", "kappa_direct", "r_direct"]
    write_csv(run.path_for("indices.csv"), header, rows)
    return {"maps": [phi1.name, phi2.name], "rows": rows}


def task_maslov_path(run):
    phi = run.single_map()
    path = run.path()
    refine = run.config.get("refine", 2)
    kinds = [run.phase_config()["phase"]] if "phase" in run.config else ["gaussian", "real_chart"]
    eps = run.phase_config().get("eps", 1.0)
    results = {}
    for kind in kinds:
        for label, p in (("base", path), ("refined", path.refined(refine))):
            results[f"{kind}/{label}"] = ms.maslov_index_of_path(phi, p, kind, eps)
    state = ms.branch_state(ph.build_phase(run.phase_config() if "phase" in run.config else "gaussian", phi), path)
    write_csv(run.path_for("maslov-path.csv"), ["s", "theta_r", "theta_s", "theta_phi", "rank"], list(state.rows()))
    write_csv(run.path_for("maslov-events.csv"), ["s", "old_rank", "new_rank", "min_rank"],
              [(e.s, e.old_rank, e.new_rank, e.min_rank) for e in state.events])
    if len(set(results.values())) > 1:
        run.mismatch("maslov.maslov_index_of_path", "Theta-r",
                     "index differs across phase kinds or refinement: " + ", ".join(f"{k}={v}" for k, v in results.items()))
    return {"map": phi.name, "index": results, "events": [e.s for e in state.events]}


def task_compose_symbols(run):
    phi1, phi2 = run.two_maps()
    n = phi1.n
    amps = run.config.get("amplitudes", [None, None])
    kind = run.phase_config()["phase"]
    s1 = sy.PrincipalSymbol.from_amplitude(run.amplitude(amps[0], n), phi1, kind)
    s2 = sy.PrincipalSymbol.from_amplitude(run.amplitude(amps[1], n), phi2, kind)
    y, eta = run.point()
    comp = sy.composition_symbol(s1, s2, y, eta, run.rng())
    adj = sy.adjoint_symbol(s2, y, eta, run.rng())
    star, k_star = sy.star_composition(s1, s2, y, eta, run.rng())
    rows = [
        ("composition", "step5", comp.k_step5, comp.step5.real, comp.step5.imag),
        ("composition", "corollary", comp.k_corollary, comp.corollary.real, comp.corollary.imag),
        ("adjoint", "step5", adj.k_step5, adj.step5.real, adj.step5.imag),
        ("adjoint", "corollary", adj.k_corollary, adj.corollary.real, adj.corollary.imag),
        ("star", "step5", k_star, star.real, star.imag),
    ]
    summary = {"composition": {"step5": _cplx(comp.step5), "corollary": _cplx(comp.corollary),
                               "k_step5": comp.k_step5, "k_corollary": comp.k_corollary},
               "adjoint": {"step5": _cplx(adj.step5), "corollary": _cplx(adj.corollary),
                           "k_step5": adj.k_step5, "k_corollary": adj.k_corollary}}
    if run.config.get("oracle", False):
        tol = run.config.get("tol", 0.03)
        probe = run.probe(n, fast=n == 2)
        spec1 = osc.KernelSpec.build(phi1, amplitude=run.amplitude(amps[0], n))
        spec2 = osc.KernelSpec.build(phi2, amplitude=run.amplitude(amps[1], n))
        ext = osc.compose_numeric(spec1, spec2, probe, mode="product")
        py, peta = np.asarray(probe.y0, float), np.asarray(probe.eta0, float)
        at = sy.composition_symbol(s1, s2, py, peta, run.rng())
        verdict = [r for r, v in (("step5", at.step5), ("corollary", at.corollary)) if abs(ext.value - v) <= tol * max(abs(v), 1e-300)]
        rows.append(("composition", "oracle", "", ext.value.real, ext.value.imag))
        summary["oracle"] = {"value": _cplx(ext.value), "error": ext.error, "matches": verdict}
        run.echo(f"oracle {ext.value:.6f} (error {ext.error:.1e}); matches: {', '.join(verdict) or 'none'}")
        if not verdict:
            run.mismatch("oscillatory.compose_numeric", "composition",
                         f"extracted {ext.value:.5f} matches neither step5 {at.step5:.5f} nor corollary {at.corollary:.5f}")
    write_csv(run.path_for("compose-symbols.csv"), ["operation", "route", "k", "re", "im"], rows)
    return summary


def task_extract_symbol(run):
    phi = run.single_map()
    n = phi.n
    pc = run.phase_config()
    amp = run.amplitude(run.config.get("amplitude"), n)
    spec = osc.KernelSpec.build(phi, pc["phase"], amplitude=amp, eps=pc.get("eps", 1.0))
    kernel = run.config.get("kernel")
    if kernel is not None:
        vals = osc.synthesize_kernel(spec, np.asarray(kernel["x"], float), np.asarray(kernel["y"], float))
        osc.dump_array(run.path_for(kernel.get("file", "kernel.bin")), vals)
    summary = {"map": phi.name}
    if "probe" in run.config:
        probe = run.probe(n)
        ext = osc.extract_symbol(spec, probe)
        osc.write_probe_csv(run.path_for("extract-symbol.csv"), ext)
        want = sy.PrincipalSymbol.from_amplitude(amp, phi, pc["phase"], pc.get("eps", 1.0))(probe.y0, probe.eta0)
        tol = run.config.get("tol", 0.03)
        summary.update(value=_cplx(ext.value), error=ext.error, slope=ext.slope, low_confidence=ext.low_confidence,
                       predicted=_cplx(want))
        run.echo(f"extracted {ext.value:.6f} (error {ext.error:.1e}, exponent {ext.slope:+.3f}); predicted {want:.6f}")
        if abs(ext.value - want) > tol * max(abs(want), 1e-300):
            run.mismatch("oscillatory.extract_symbol", "asymp-1", f"extracted {ext.value:.5f} vs predicted {want:.5f} beyond {tol:g}")
    elif kernel is None:
        raise UsageError("task extract-symbol needs a 'probe' or a 'kernel' block")
    return summary


def task_verify_suite(run):
    names = run.config.get("criteria") or list(acceptance.CRITERIA)
    results = acceptance.run_suite(names, echo=run.echo)
    write_csv(run.path_for("verify-suite.csv"), ["criterion", "passed", "anchor", "detail"],
              [(r.name, r.passed, r.anchor.replace(",", ";"), r.detail.replace(",", ";")) for r in results])
    for r in results:
        if not r.passed:
            run.mismatch(f"acceptance.{r.name}", r.anchor, r.detail)
    out = {r.name: {"passed": r.passed, "detail": r.detail} for r in results}
    if "A5" in out:
        out["A5"]["winner"] = next(r for r in results if r.name == "A5").data.get("winner")
    return out


HANDLERS = {
    "validate-map": task_validate_map,
    "indices": task_indices,
    "maslov-path": task_maslov_path,
    "compose-symbols": task_compose_symbols,
    "extract-symbol": task_extract_symbol,
    "verify-suite": task_verify_suite,
}


def run_experiment(config, out=None, echo=print):
    """Run one validated config; returns ``(exit_status, summary)``."""
    validate_config(config)
    out = out or config.get("out") or os.environ.get(OUT_ENV) or "."
    run = Run(config, out, echo)
    summary = HANDLERS[config["task"]](run)
    write_json(run.path_for(f"{config['task']}.json"),
               {"config": config, "result": summary, "mismatches": run.mismatches})
    return (EXIT_MISMATCH if run.mismatches else EXIT_OK), summary


def build_parser():
    p = argparse.ArgumentParser(prog="fiocalc", description="Symbolic FIO calculus with numerical oracles.")
    sub = p.add_subparsers(dest="task", required=True)
    for task in TASKS:
        s = sub.add_parser(task)
        s.add_argument("config", nargs="?", help="JSON experiment config ('-' for stdin)")
        s.add_argument("--tol", type=float, help="override the tolerance")
        s.add_argument("--seed", type=int, help="override the random seed")
        s.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or '.')")
        if task == "verify-suite":
            s.add_argument("--criteria", nargs="+", help="subset of A1..A10")
    return p


def _read_config(arg):
    if arg is None:
        return {}
    text = sys.stdin.read() if arg == "-" else FsPath(arg).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = _read_config(args.config)
        if config.setdefault("task", args.task) != args.task:
            raise UsageError(f"config task {config['task']!r} does not match subcommand {args.task!r}")
        for key in ("tol", "seed", "out"):
            if getattr(args, key) is not None:
                config[key] = getattr(args, key)
        if getattr(args, "criteria", None):
            config["criteria"] = args.criteria
        status, _ = run_experiment(config)
    except (UsageError, FIOError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return status


if __name__ == "__main__":
    sys.exit(main())
