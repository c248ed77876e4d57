"""Command-line front end.

Every command prints one report (JSON by default, CSV with ``--format csv``)
and exits 0 on success, 1 on malformed input or usage, and 2 when a
mathematical check fails; the failing check is named in the report.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import shlex
import sys
from collections.abc import Mapping, Sequence

import numpy as np

from . import dyn, thermo, transfer, transverse, xy
from . import io as fio
from .errors import ConvergenceError, HaarError, InputError, ValidationError
from .groupoid import (
    STRUCTURAL_TOL,
    Kernel,
    Measure,
    Potential,
    TransverseFunction,
    random_transverse,
    saturation_check,
    validate_modular,
)

DEFAULT_SEED = 20160

CLOSED = "closed_form"
SAMPLED = "sampled_bound"
ITERATIVE = "iterative"


class Report:
    """Run report; numeric outputs carry a provenance tag and the tolerance used."""

    def __init__(self, command: str):
        self.command = command
        self.inputs: dict = {}
        self.value = None
        self.argmax_classes = None
        self.outputs: dict = {}
        self.certificates: dict = {}
        self.diagnostics: dict = {}

    def add_input(self, name: str, path) -> None:
        self.inputs[name] = {"path": str(path), "sha256": fio.file_digest(path)}

    def output(self, name: str, value, provenance: str, tolerance: float | None = None) -> None:
        self.outputs[name] = {"value": value, "provenance": provenance, "tolerance": tolerance}

    def as_dict(self) -> dict:
        out = {"command": self.command, "inputs": self.inputs}
        if self.value is not None:
            out["value"] = self.value
        if self.argmax_classes is not None:
            out["argmax_classes"] = list(self.argmax_classes)
        out["outputs"] = self.outputs
        out["certificates"] = self.certificates
        out["diagnostics"] = self.diagnostics
        return out


def _flatten(prefix: str, obj, rows: list, provenance="", tolerance=None) -> None:
    if isinstance(obj, Mapping):
        for k, v in obj.items():
            _flatten(f"{prefix}.{fio._key(k)}" if prefix else fio._key(k), v, rows, provenance, tolerance)
    elif isinstance(obj, (list, tuple)) and any(isinstance(v, (Mapping, list, tuple)) for v in obj):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}.{i}", v, rows, provenance, tolerance)
    else:
        if isinstance(obj, (list, tuple)):
            obj = ";".join(fio.format_float(v) if isinstance(v, float) else str(v) for v in obj)
        elif isinstance(obj, float):
            obj = fio.format_float(obj)
            obj = "" if obj == "null" else obj
        tol = "" if tolerance is None else fio.format_float(float(tolerance))
        rows.append((prefix, obj, provenance, tol))


def render(report: Report, fmt: str) -> str:
    data = fio.to_jsonable(report.as_dict())
    if fmt == "json":
        return fio.dumps(data) + "\n"
    rows: list = []
    _flatten("command", data["command"], rows)
    for name, meta in data["inputs"].items():
        rows.append((f"inputs.{name}", meta["sha256"], "", ""))
    if "value" in data:
        _flatten("value", data["value"], rows)
    if "argmax_classes" in data:
        _flatten("argmax_classes", data["argmax_classes"], rows)
    for name, meta in data["outputs"].items():
        _flatten(f"outputs.{name}", meta["value"], rows, meta["provenance"], meta["tolerance"])
    _flatten("certificates", data["certificates"], rows)
    _flatten("diagnostics", data["diagnostics"], rows)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("name", "value", "provenance", "tolerance"))
    w.writerows(rows)
    return buf.getvalue()


def _fail(check: str, message: str, witness=None, residual=None):
    raise ValidationError(message, check=check, witness=witness, residual=residual)


def _tol(args, default: float) -> float:
    return default if args.tol is None else args.tol


def _rng(args, rep: Report) -> np.random.Generator:
    rep.diagnostics["seed"] = args.seed
    return np.random.default_rng(args.seed)


def _groupoid(args, rep: Report):
    if not args.groupoid:
        raise InputError("--groupoid is required")
    rep.add_input("groupoid", args.groupoid)
    return fio.load_groupoid(args.groupoid)


def _need(args, name: str) -> str:
    path = getattr(args, name)
    if not path:
        raise InputError(f"--{name.replace('_', '-')} is required")
    return path


def _potential(args, rep: Report, G) -> Potential:
    path = _need(args, "potential")
    rep.add_input("potential", path)
    return fio.load_potential(path, G.space)


def _normalized(args, rep: Report, G, nu_hat) -> Potential:
    U = _potential(args, rep, G)
    was = transfer.is_normalized(U, nu_hat, G)
    rep.diagnostics["input_was_normalized"] = was
    return U if was else transfer.normalize(U, nu_hat, G)


def _measure(args, rep: Report, space, name="measure") -> Measure:
    path = _need(args, name)
    rep.add_input(name, path)
    return fio.load_measure(path, space)


def _lambda(args, rep: Report):
    """Transverse measure from ``--potential`` (normalized on the fly) and
    ``--measure`` or ``--seed-measure`` (default: uniform seed)."""
    G, nu_hat = _groupoid(args, rep)
    V = _normalized(args, rep, G, nu_hat)
    if args.measure:
        M = _measure(args, rep, G.space)
    else:
        seed = args.seed_measure or "uniform"
        if seed not in ("uniform",) and not seed.startswith("delta:"):
            rep.add_input("seed_measure", seed)
        rep.diagnostics["seed_measure"] = seed
        M = transfer.invariant_from_seed(V, fio.seed_measure(seed, G.space), nu_hat, G)
    return G, nu_hat, transverse.TransverseMeasure(V, M, nu_hat)


def _transverse_arg(args, rep: Report, G, nu_hat) -> TransverseFunction:
    if not args.transverse:
        return nu_hat
    rep.add_input("transverse", args.transverse)
    return fio.load_transverse(args.transverse, G)


# groupoid-level commands

def cmd_normalize(args, rep: Report) -> None:
    G, nu_hat = _groupoid(args, rep)
    U = _potential(args, rep, G)
    V = transfer.normalize(U, nu_hat, G)
    res = float(np.max(transfer.normalization_residual(V, nu_hat, G)))
    rep.output("potential", {"values": V.as_dict()}, CLOSED, STRUCTURAL_TOL)
    rep.output("u_tilde", transfer.u_tilde(U, nu_hat, G).as_dict(), CLOSED, STRUCTURAL_TOL)
    rep.certificates["normalization_residual"] = res


def cmd_invariant(args, rep: Report) -> None:
    G, nu_hat = _groupoid(args, rep)
    V = _normalized(args, rep, G, nu_hat)
    seed = args.seed_measure or "uniform"
    rep.diagnostics["seed_measure"] = seed
    M = transfer.invariant_from_seed(V, fio.seed_measure(seed, G.space), nu_hat, G)
    rep.output("measure", {"mass": M.as_dict()}, CLOSED, STRUCTURAL_TOL)
    rep.output("modulus", {"values": V.as_dict()}, CLOSED, STRUCTURAL_TOL)
    res = transfer.verify_haar_invariance(M, V, nu_hat, G)
    rep.certificates["haar_residual"] = res.residual


def _invariance_report(rep: Report, res: transfer.InvarianceResidual, check: str) -> None:
    rep.value = res.residual
    rep.certificates[check] = {"residual": res.residual, "worst_pair": res.worst, "tol": res.tol,
                               "passed": res.passed}
    if not res.passed:
        _fail(check, f"{check} check fails at pair {res.worst!r} (residual {res.residual:.3g})",
              res.worst, res.residual)


def cmd_verify_haar(args, rep: Report) -> None:
    G, nu_hat = _groupoid(args, rep)
    M = _measure(args, rep, G.space)
    V = _potential(args, rep, G)
    res = transfer.verify_haar_invariance(M, V, nu_hat, G, tol=_tol(args, transfer.HAAR_TOL))
    _invariance_report(rep, res, "haar_invariance")


def cmd_verify_quasi(args, rep: Report) -> None:
    G, nu_hat = _groupoid(args, rep)
    M = _measure(args, rep, G.space)
    path = _need(args, "modular")
    rep.add_input("modular", path)
    delta = fio.load_modular(path, G)
    cocycle = validate_modular(delta, G)
    if not cocycle:
        _fail(cocycle.check, cocycle.message, cocycle.witness, cocycle.max_discrepancy)
    res = transfer.verify_quasi_invariance(M, delta, nu_hat, G, tol=_tol(args, transfer.HAAR_TOL))
    _invariance_report(rep, res, "quasi_invariance")


def cmd_verify_saturation(args, rep: Report) -> None:
    G, _ = _groupoid(args, rep)
    M = _measure(args, rep, G.space)
    ok, cid = saturation_check(M, G)
    rep.value = ok
    rep.certificates["saturation"] = {"passed": ok, "class": cid}
    if not ok:
        _fail("saturation", f"class {cid!r} is charged only partially", cid)


# transverse measures

def cmd_lambda_eval(args, rep: Report) -> None:
    G, nu_hat, Lam = _lambda(args, rep)
    nu = _transverse_arg(args, rep, G, nu_hat)
    val = transverse.lambda_eval(Lam, nu)
    rep.value = val
    rep.output("lambda", val, CLOSED, STRUCTURAL_TOL)
    rep.certificates["modular_form_gap"] = abs(val - transverse.lambda_eval_modular(Lam, nu))


def cmd_lambda_roundtrip(args, rep: Report) -> None:
    G, nu_hat, Lam = _lambda(args, rep)
    M2 = transverse.measure_from_transverse(Lam, nu_hat, Lam.modulus)
    back = transverse.TransverseMeasure(Lam.modulus, M2, nu_hat)
    rng = _rng(args, rep)
    gap = 0.0
    for _ in range(args.samples):
        nu = random_transverse(G, rng, probability=False) * float(rng.uniform(0.5, 2.0))
        gap = max(gap, abs(transverse.lambda_eval(Lam, nu) - transverse.lambda_eval(back, nu)))
    drift = float(np.max(np.abs(M2.mass - Lam.base.mass)))
    rep.value = drift
    rep.output("measure", {"mass": M2.as_dict()}, CLOSED, STRUCTURAL_TOL)
    rep.certificates["measure_drift"] = drift
    rep.certificates["functional_gap"] = gap
    rep.diagnostics["samples"] = args.samples


def cmd_lambda_coco(args, rep: Report) -> None:
    G, nu_hat, Lam = _lambda(args, rep)
    nu1 = _transverse_arg(args, rep, G, nu_hat)
    tol = _tol(args, STRUCTURAL_TOL)
    rng = _rng(args, rep)
    w = Lam.modulus.exp * nu_hat.weights
    kernels = [("structured", Kernel(G, np.where(G.same_class, w[None, :], 0.0)))]
    kernels += [(f"random_{i}", transverse.random_unit_kernel(G, rng)) for i in range(args.samples)]
    worst, worst_name = 0.0, None
    for name, lam in kernels:
        r = transverse.coco_invariance_check(Lam, nu1, lam).residual
        if worst_name is None or r > worst:
            worst, worst_name = r, name
    rep.value = worst
    rep.certificates["coco"] = {"residual": worst, "worst_kernel": worst_name, "tol": tol,
                                "kernels": len(kernels)}
    if worst > tol:
        _fail("coco", f"Lambda changes under kernel {worst_name} (residual {worst:.3g})", worst_name, worst)


# thermodynamic formalism

def cmd_entropy(args, rep: Report) -> None:
    G, nu_hat, Lam = _lambda(args, rep)
    h = thermo.entropy(Lam)
    rep.value = h
    rep.output("entropy", h, CLOSED, STRUCTURAL_TOL)
    if args.samples > 0:
        fam = thermo.NormalizedFamily.sample(nu_hat, args.samples, args.seed, include=[("modulus", Lam.modulus)])
        rep.diagnostics["seed"] = args.seed
        est = thermo.entropy_sup_estimate(Lam, fam)
        rep.output("entropy_sup_estimate", est, SAMPLED, STRUCTURAL_TOL)
        rep.certificates["sup_gap"] = est - h
        rep.diagnostics["family_size"] = len(fam)


def cmd_pressure(args, rep: Report) -> None:
    G, nu_hat = _groupoid(args, rep)
    U = _potential(args, rep, G)
    p = thermo.pressure(U, nu_hat, G)
    rep.value = p.value
    rep.argmax_classes = p.argmax_classes
    rep.output("pressure", p.value, CLOSED, STRUCTURAL_TOL)
    rep.output("u_tilde", transfer.u_tilde(U, nu_hat, G).as_dict(), CLOSED, STRUCTURAL_TOL)
    rep.diagnostics["tie_set"] = list(p.argmax_classes)
    if args.samples > 0:
        rng = _rng(args, rep)
        eq = thermo.equilibrium_for(U, nu_hat, G)
        samples = [(eq.modulus, eq.base)] + [thermo.random_sample_pair(nu_hat, rng) for _ in range(args.samples)]
        est = thermo.pressure_variational_estimate(U, nu_hat, G, samples)
        rep.output("variational_estimate", est, SAMPLED, STRUCTURAL_TOL)
        rep.certificates["variational_gap"] = p.value - est


def cmd_equilibrium(args, rep: Report) -> None:
    G, nu_hat = _groupoid(args, rep)
    U = _potential(args, rep, G)
    p = thermo.pressure(U, nu_hat, G)
    Lam = thermo.equilibrium_for(U, nu_hat, G)
    attained = transverse.lambda_eval(Lam, TransverseFunction.from_density(U, nu_hat)) + thermo.entropy(Lam)
    rep.value = p.value
    rep.argmax_classes = p.argmax_classes
    rep.output("modulus", {"values": Lam.modulus.as_dict()}, CLOSED, STRUCTURAL_TOL)
    rep.output("measure", {"mass": Lam.base.as_dict()}, CLOSED, STRUCTURAL_TOL)
    rep.output("entropy", thermo.entropy(Lam), CLOSED, STRUCTURAL_TOL)
    rep.certificates["attainment_gap"] = abs(attained - p.value)
    rep.diagnostics["seed_point"] = G.space.label(int(np.flatnonzero(Lam.base.mass > 0)[0]))
    rep.diagnostics["tie_set"] = list(p.argmax_classes)


def cmd_involution(args, rep: Report) -> None:
    G, nu_hat, Lam = _lambda(args, rep)
    rng = _rng(args, rep)
    cands = [TransverseFunction.from_density(Lam.modulus, nu_hat)]
    cands += [TransverseFunction.from_density(2.0 * rng.standard_normal(G.n_points), nu_hat)
              for _ in range(args.samples)]
    res = thermo.involution_check(Lam, cands)
    tol = _tol(args, 1e-10)
    rep.value = res
    rep.output("involution_residual", res, SAMPLED, tol)
    rep.certificates["involution"] = {"residual": res, "tol": tol, "candidates": len(cands)}
    if not (-tol <= res <= tol):
        _fail("involution", f"involution residual {res:.3g} exceeds {tol:.3g}", residual=res)


def cmd_extremal(args, rep: Report) -> None:
    G, nu_hat = _groupoid(args, rep)
    U = _potential(args, rep, G)
    r = thermo.extremal_closed_forms(args.case, nu_hat, U)
    tol = _tol(args, STRUCTURAL_TOL)
    rep.value = r.closed_pressure
    rep.output("pressure", r.closed_pressure, CLOSED, tol)
    rep.output("entropy", r.closed_entropy, CLOSED, tol)
    rep.output("generic_pressure", r.generic_pressure, CLOSED, tol)
    rep.output("generic_entropy", r.generic_entropy, CLOSED, tol)
    if r.gibbs:
        rep.output("gibbs_density", dict(zip(G.space, r.gibbs)), CLOSED, tol)
    rep.certificates["cross_check"] = {"residual": r.residual, "tol": tol}
    rep.diagnostics["case"] = args.case
    if r.residual > tol:
        _fail("extremal", f"closed forms disagree with generic code by {r.residual:.3g}", residual=r.residual)


# XY model

def _xy(args, rep: Report) -> xy.XYSpec:
    path = _need(args, "xy")
    rep.add_input("xy", path)
    return fio.load_xy(path)


def _eigen(args, spec: xy.XYSpec, rep: Report) -> xy.XYEigen:
    tol = _tol(args, xy.EIGEN_TOL)
    e = xy.leading_eigen(spec, tol=tol, max_iter=args.iters or xy.MAX_ITER)
    rep.diagnostics["iterations"] = e.iterations
    rep.diagnostics["eigen_residuals"] = {"phi": e.residual_phi, "rho": e.residual_rho}
    return e


def cmd_xy_eigen(args, rep: Report) -> None:
    spec = _xy(args, rep)
    e = _eigen(args, spec, rep)
    rep.value = e.c
    rep.output("c", e.c, ITERATIVE, _tol(args, xy.EIGEN_TOL))
    rep.output("phi", {"table": e.phi.table}, ITERATIVE, _tol(args, xy.EIGEN_TOL))
    rep.output("rho", {"table": e.rho}, ITERATIVE, _tol(args, xy.EIGEN_TOL))
    if args.depth is not None:
        rep.output(f"rho_depth_{args.depth}", {"table": xy.eigenprob_table(spec, args.depth, e)},
                   ITERATIVE, _tol(args, xy.EIGEN_TOL))


def cmd_xy_limit(args, rep: Report) -> None:
    spec = _xy(args, rep)
    path = _need(args, "h")
    rep.add_input("h", path)
    h = fio.load_cylinder(path, spec)
    n = args.iters or 60
    q = xy.limit_quotient(spec, h, n)
    e = _eigen(args, spec, rep)
    integral = float(np.sum(xy.eigenprob_table(spec, h.depth, e) * h.table))
    rep.value = q
    rep.output("limit_quotient", q, ITERATIVE, None)
    rep.output("integral", integral, ITERATIVE, _tol(args, xy.EIGEN_TOL))
    rep.certificates["quotient_gap"] = abs(q - integral)
    rep.diagnostics["n"] = n


def cmd_xy_normalize(args, rep: Report) -> None:
    spec = _xy(args, rep)
    e = _eigen(args, spec, rep)
    U = xy.ruelle_normalize(spec, e.c, e.phi)
    res = float(np.max(np.abs(xy.ruelle_apply(U, xy.CylinderFunction.constant()).table - 1.0)))
    rep.output("spec", fio.xy_to_dict(U), ITERATIVE, 1e-10)
    rep.output("c", e.c, ITERATIVE, _tol(args, xy.EIGEN_TOL))
    rep.certificates["normalization_residual"] = res


def cmd_xy_quasi(args, rep: Report) -> None:
    spec = _xy(args, rep)
    e = _eigen(args, spec, rep)
    n = args.depth if args.depth is not None else spec.depth + 1
    N = max(n, spec.depth)
    r = xy.xy_quasi_invariance_check(spec, xy.eigenprob_table(spec, N, e), n)
    tol = 1e-9 if args.tol is None else args.tol
    rep.value = r.residual
    rep.certificates["quasi_invariance"] = {"residual": r.residual, "worst": r.worst, "tol": tol,
                                            "depth": n, "passed": r.residual <= tol}
    if r.residual > tol:
        _fail("quasi_invariance", f"eigenprobability fails quasi-invariance at {r.worst!r}", r.worst, r.residual)


# dynamically defined groupoids

def _dyn(args, rep: Report):
    path = _need(args, "dyn")
    rep.add_input("dyn", path)
    domain, T, codomain = fio.load_map(path)
    M = _measure(args, rep, domain)
    base = None
    if args.base_measure:
        if codomain is None:
            raise InputError("--base-measure needs a map file with a 'codomain'")
        base = _measure(args, rep, codomain, "base_measure")
    return T, M, codomain, base


def cmd_dyn_disintegrate(args, rep: Report) -> None:
    T, M, codomain, base = _dyn(args, rep)
    dis = dyn.disintegrate(T, M, codomain, base)
    G = dis.groupoid
    conds = {}
    for c, cid in enumerate(G.class_ids):
        conds[cid] = {"mass": {G.space.label(i): float(dis.conditionals[c, i]) for i in G.members[c]}}
    rep.output("conditionals", conds, CLOSED, STRUCTURAL_TOL)
    rep.certificates["recomposition_residual"] = dis.recomposition_residual
    rep.diagnostics["uniform_conditionals"] = list(dis.uniform_classes)


def cmd_dyn_jacobian(args, rep: Report) -> None:
    if args.markov:
        rep.add_input("markov", args.markov)
        spec = fio.load_markov(args.markov)
        J = dyn.markov_jacobian(spec)
        rep.output("jacobian", J, CLOSED, STRUCTURAL_TOL)
        rep.certificates["column_sum_residual"] = float(np.max(np.abs(J.sum(axis=0) - 1.0)))
        n = args.depth or 6
        ratio = dyn.cylinder_ratio_jacobian(spec, n)
        gap = np.abs(ratio - J[(...,) + (None,) * (n - 1)])
        rep.certificates["cylinder_ratio_gap"] = float(np.nanmax(gap))
        rep.certificates["haar_invariance_residual"] = dyn.markov_haar_invariance_residual(spec, max(n, 2))
        rep.diagnostics["cylinder_depth"] = n
        return
    T, M, codomain, base = _dyn(args, rep)
    J = dyn.haar_jacobian(T, M, codomain, base)
    rep.output("jacobian", J.as_dict(), CLOSED, STRUCTURAL_TOL)
    rep.certificates["fiber_sum_residual"] = float(np.max(np.abs(J.fiber_sums() - 1.0)))
    rep.diagnostics["uniform_conditionals"] = list(J.uniform_classes)


def cmd_dyn_ks(args, rep: Report) -> None:
    path = _need(args, "markov")
    rep.add_input("markov", path)
    spec = fio.load_markov(path)
    h = dyn.ks_entropy_via_jacobian(spec)
    rate = dyn.markov_entropy_rate(spec)
    rep.value = h
    rep.output("entropy", h, CLOSED, 1e-10)
    rep.output("entropy_rate", rate, CLOSED, 1e-10)
    rep.output("stationary", spec.stationary, ITERATIVE, STRUCTURAL_TOL)
    rep.certificates["rate_gap"] = abs(h - rate)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--groupoid", help="groupoid JSON file")
    p.add_argument("--potential", help="potential JSON file")
    p.add_argument("--measure", help="measure JSON file")
    p.add_argument("--seed-measure", help="seed for invariant measures: delta:<point>, uniform, or a file")
    p.add_argument("--modular", help="modular function JSON file")
    p.add_argument("--transverse", help="transverse function JSON file")
    p.add_argument("--xy", help="XY model JSON file")
    p.add_argument("--h", help="cylinder function JSON file")
    p.add_argument("--markov", help="Markov chain JSON file")
    p.add_argument("--dyn", help="finite map JSON file")
    p.add_argument("--base-measure", help="measure on the codomain of the map")
    p.add_argument("--depth", type=int, help="cylinder depth")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="seed for sampled families")
    p.add_argument("--tol", type=float, help="override the check tolerance")
    p.add_argument("--samples", type=int, default=100, help="size of sampled families")
    p.add_argument("--iters", type=int, help="iteration count or cap")
    return p


COMMANDS = {
    ("normalize",): cmd_normalize,
    ("invariant",): cmd_invariant,
    ("verify", "haar"): cmd_verify_haar,
    ("verify", "quasi"): cmd_verify_quasi,
    ("verify", "saturation"): cmd_verify_saturation,
    ("lambda", "eval"): cmd_lambda_eval,
    ("lambda", "roundtrip"): cmd_lambda_roundtrip,
    ("lambda", "coco-check"): cmd_lambda_coco,
    ("entropy",): cmd_entropy,
    ("pressure",): cmd_pressure,
    ("equilibrium",): cmd_equilibrium,
    ("involution-check",): cmd_involution,
    ("extremal",): cmd_extremal,
    ("xy", "eigen"): cmd_xy_eigen,
    ("xy", "limit-quotient"): cmd_xy_limit,
    ("xy", "normalize"): cmd_xy_normalize,
    ("xy", "verify-quasi"): cmd_xy_quasi,
    ("dyn", "disintegrate"): cmd_dyn_disintegrate,
    ("dyn", "jacobian"): cmd_dyn_jacobian,
    ("dyn", "ks-entropy"): cmd_dyn_ks,
}


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="haarthermo", description="Haar systems and thermodynamic formalism on finite groupoids.")
    verbs = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    groups: dict = {}
    for key, fn in COMMANDS.items():
        if len(key) == 1:
            sub = verbs.add_parser(key[0], parents=[common], help=fn.__name__[4:].replace("_", " "))
            sub.set_defaults(func=fn)
        else:
            if key[0] not in groups:
                g = verbs.add_parser(key[0])
                groups[key[0]] = g.add_subparsers(dest="action", required=True, parser_class=_Parser)
            sub = groups[key[0]].add_parser(key[1], parents=[common])
            sub.set_defaults(func=fn)
        if key == ("extremal",):
            sub.add_argument("--case", choices=("pair", "trivial"), required=True)
    return parser


def run(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    rep = Report(shlex.join(argv))
    code = 0
    try:
        args.func(args, rep)
    except ValidationError as exc:
        rep.diagnostics["failure"] = {"check": exc.check or "validation", "witness": exc.witness,
                                      "residual": exc.residual, "message": str(exc)}
        print(f"haarthermo: check failed [{exc.check or 'validation'}]: {exc}", file=stderr)
        code = 2
    except ConvergenceError as exc:
        rep.diagnostics["failure"] = {"check": "convergence", "residual": exc.residual,
                                      "iterations": exc.iterations, "message": str(exc)}
        print(f"haarthermo: check failed [convergence]: {exc}", file=stderr)
        code = 2
    except (InputError, HaarError) as exc:
        print(f"haarthermo: input error: {exc}", file=stderr)
        return 1
    stdout.write(render(rep, args.format))
    return code


def main() -> None:
    sys.exit(run())
