"""Command line front end: input parsing, command dispatch and reports."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .algebra import AlgebraError, GroupDatum, dot, vec
from .cone import ConeError, MomentCone, facet_meta, reeb_cone, solve_gamma0, validate_good_cone
from .kenergy import (
    KEnergyError,
    L_fano,
    bar_decomposition,
    build_guillemin,
    fano_data,
    mu,
    necessary_test_function,
    positivity_scan,
)
from .measure import QuadratureError, float_view, mc_oracle, pi_integrand, polytope_moments
from .polytope import PolytopeError, characteristic_polytope, iota_project, translate_fano
from .verdict import (
    CriterionError,
    NotOnFanoSlice,
    SolitonError,
    csc_properness,
    linspace_exact,
    reeb_sweep,
    se_criterion,
    solve_soliton,
)

COMMANDS = ("validate", "gamma0", "polytope", "criterion", "soliton", "sweep", "kenergy")
EXIT_OK, EXIT_ERROR, EXIT_FAILS = 0, 1, 2


class InputError(ValueError):
    """Schema violation; the message starts with the offending path."""


# ---------------------------------------------------------------------------
# Parsing


def parse_rational(x: Any, path: str) -> Fraction:
    if isinstance(x, bool):
        raise InputError(f"{path}: expected a rational number, got a boolean")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        if not x.is_integer():
            raise InputError(f"{path}: non-integer floats are not exact; write \"p/q\" instead of {x}")
        return Fraction(int(x))
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError):
            raise InputError(f"{path}: cannot parse {x!r} as a rational") from None
    raise InputError(f"{path}: expected a rational number, got {type(x).__name__}")


def _vector(x: Any, path: str, length: int | None = None) -> tuple:
    if not isinstance(x, list):
        raise InputError(f"{path}: expected a list")
    if length is not None and len(x) != length:
        raise InputError(f"{path}: expected length {length}, got {len(x)}")
    return tuple(parse_rational(y, f"{path}[{i}]") for i, y in enumerate(x))


def _vectors(x: Any, path: str, length: int, allow_empty: bool = True) -> tuple:
    if not isinstance(x, list):
        raise InputError(f"{path}: expected a list of vectors")
    if not x and not allow_empty:
        raise InputError(f"{path}: must not be empty")
    return tuple(_vector(v, f"{path}[{i}]", length) for i, v in enumerate(x))


@dataclass(frozen=True)
class InputSpec:
    name: str
    rank: int
    positive_roots: tuple
    center_basis: tuple | None
    simple_roots: tuple | None
    lattice_basis: tuple | None
    gram: tuple | None
    normals: tuple
    reeb: tuple | None
    sweep_coordinate: int | None = None

    def datum(self) -> GroupDatum:
        return GroupDatum.build(
            self.rank,
            self.positive_roots,
            center_basis=self.center_basis,
            simple_roots=self.simple_roots,
            lattice_basis=self.lattice_basis,
            gram=self.gram,
        )

    def cone(self) -> MomentCone:
        return MomentCone.build(self.datum(), self.normals)


def parse_input(text: str) -> InputSpec:
    """Parse and validate a JSON input document; every error names its path."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"$: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise InputError("$: expected an object")
    grp = doc.get("group")
    if not isinstance(grp, dict):
        raise InputError("$.group: missing or not an object")
    r = grp.get("rank")
    if not isinstance(r, int) or isinstance(r, bool) or r < 1:
        raise InputError("$.group.rank: expected a positive integer")
    roots = _vectors(grp.get("positive_roots", []), "$.group.positive_roots", r)
    opt = {}
    for key in ("center_basis", "simple_roots", "lattice_basis", "gram"):
        opt[key] = _vectors(grp[key], f"$.group.{key}", r) if grp.get(key) is not None else None
    if opt["gram"] is not None and len(opt["gram"]) != r:
        raise InputError(f"$.group.gram: expected {r} rows, got {len(opt['gram'])}")
    cone = doc.get("cone")
    if not isinstance(cone, dict):
        raise InputError("$.cone: missing or not an object")
    normals = _vectors(cone.get("normals"), "$.cone.normals", r, allow_empty=False)
    reeb = _vector(doc["reeb"], "$.reeb", r) if doc.get("reeb") is not None else None
    coord = None
    if doc.get("sweep") is not None:
        sw = doc["sweep"]
        if not isinstance(sw, dict) or not isinstance(sw.get("coordinate"), int) or not 0 <= sw["coordinate"] < r:
            raise InputError(f"$.sweep.coordinate: expected an integer in [0, {r})")
        coord = sw["coordinate"]
    return InputSpec(
        str(doc.get("name", "")), r, roots, opt["center_basis"], opt["simple_roots"], opt["lattice_basis"],
        opt["gram"], normals, reeb, coord,
    )


def bundled_names() -> list[str]:
    return sorted(p.name for p in resources.files("sasaki_cone").joinpath("data").iterdir() if p.name.endswith(".json"))


def read_input(path: str) -> str:
    """Read a file, falling back to the bundled example of the same base name (``.json`` optional)."""
    p = Path(path)
    if p.is_file():
        return p.read_text()
    for name in (p.name, p.name + ".json"):
        data = resources.files("sasaki_cone").joinpath("data").joinpath(name)
        if data.is_file():
            return data.read_text()
    raise InputError(f"{path}: no such file (bundled examples: {', '.join(bundled_names())})")


def load_example(name: str) -> InputSpec:
    if not name.endswith(".json"):
        name += ".json"
    return parse_input(read_input(name))


# ---------------------------------------------------------------------------
# Reports


def to_jsonable(x: Any) -> Any:
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, np.ndarray):
        return [to_jsonable(y) for y in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [to_jsonable(y) for y in x]
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    return x


@dataclass
class Report:
    command: str
    body: dict
    exit_code: int = EXIT_OK

    def as_dict(self) -> dict:
        return to_jsonable({"command": self.command, **self.body})

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=False)

    def to_text(self) -> str:
        lines: list[str] = []
        _render(self.as_dict(), lines, 0)
        return "\n".join(lines)


def _render(x: Any, lines: list, indent: int) -> None:
    pad = "  " * indent
    if isinstance(x, dict):
        for k, v in x.items():
            if isinstance(v, (dict,)) or (isinstance(v, list) and v and isinstance(v[0], dict)):
                lines.append(f"{pad}{k}:")
                _render(v, lines, indent + 1)
            else:
                lines.append(f"{pad}{k}: {_inline(v)}")
    elif isinstance(x, list) and x and isinstance(x[0], dict):
        keys = list(x[0].keys())
        rows = [[_inline(r.get(k)) for k in keys] for r in x]
        widths = [max(len(k), *(len(r[i]) for r in rows)) for i, k in enumerate(keys)]
        lines.append(pad + "  ".join(k.ljust(w) for k, w in zip(keys, widths)))
        for r in rows:
            lines.append(pad + "  ".join(c.ljust(w) for c, w in zip(r, widths)))
    else:
        lines.append(pad + _inline(x))


def _inline(v: Any) -> str:
    if isinstance(v, list):
        return "(" + ", ".join(_inline(y) for y in v) + ")"
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


# ---------------------------------------------------------------------------
# Commands


@dataclass(frozen=True)
class Options:
    tol: float = 1e-10
    quad_depth: int = 12
    mc_check: int | None = None
    chart: int | None = None
    xi2: Fraction | None = None
    xi2_range: tuple | None = None
    rescale: bool = False
    samples: int = 100
    seed: int = 0


def _reeb(spec: InputSpec, opts: Options) -> tuple:
    if spec.reeb is None:
        raise InputError("$.reeb: required for this command")
    xi = list(spec.reeb)
    if opts.xi2 is not None:
        xi[_sweep_coord(spec)] = opts.xi2
    return tuple(xi)


def _sweep_coord(spec: InputSpec) -> int:
    if spec.sweep_coordinate is not None:
        return spec.sweep_coordinate
    if spec.rank < 2:
        raise InputError("$.sweep.coordinate: --xi2 needs rank >= 2")
    return 1


def _char_polytope(spec: InputSpec, opts: Options, cone=None):
    cone = cone or spec.cone()
    xi = _reeb(spec, opts)
    if opts.rescale:
        g = solve_gamma0(cone)
        val = dot(g.gamma0, xi)
        if val < 0:
            xi = tuple(Fraction(-(cone.datum.n + 1)) / val * x for x in xi)
    return characteristic_polytope(cone, xi, opts.chart)


def _gamma0_block(cone, xi=None) -> dict:
    g = solve_gamma0(cone)
    out = {
        "gamma0": g.gamma0,
        "residuals": g.residuals,
        "outer_residuals": g.outer_residuals,
        "n": cone.datum.n,
    }
    if xi is not None:
        val = dot(g.gamma0, xi)
        n1 = cone.datum.n + 1
        out["gamma0_xi"] = val
        out["on_fano_slice"] = val == -n1
        if val != -n1 and val < 0:
            out["suggested_rescale"] = Fraction(-n1) / val
    return out


def _mc_block(poly, datum, samples: int, exact: dict, X=None) -> dict:
    """Quasi-Monte-Carlo check of int pi, int v pi (and int e^{X.v} pi) against exact values."""
    pi = pi_integrand(datum)
    if X is None:
        fn = lambda y: np.column_stack([pi(y), y * pi(y)[:, None]])  # noqa: E731
    else:
        Xv = np.asarray(X, dtype=float)
        fn = lambda y: np.column_stack([pi(y), y * pi(y)[:, None], np.exp(y @ Xv) * pi(y)])  # noqa: E731
    est = mc_oracle(poly, datum, fn, samples=samples)
    ref = np.array([float(exact["V"])] + [float(x) for x in exact["first"]] + ([exact["Z"]] if X is not None else []))
    z = np.abs(est.mean - ref) / np.maximum(est.stderr, 1e-300)
    return {
        "samples": est.samples,
        "estimate": est.mean,
        "stderr": est.stderr,
        "reference": ref,
        "max_z": float(np.max(np.where(est.stderr > 0, z, 0.0))),
        "within_3se": bool(np.all((z <= 3) | (np.abs(est.mean - ref) <= 1e-12 * np.maximum(1, np.abs(ref))))),
    }


def cmd_validate(spec: InputSpec, opts: Options) -> Report:
    rep = validate_good_cone(spec.cone())
    body = {"name": spec.name, "validation": rep.as_dict()}
    return Report("validate", body, EXIT_OK if rep.good else EXIT_FAILS)


def cmd_gamma0(spec: InputSpec, opts: Options) -> Report:
    cone = spec.cone()
    body = {"name": spec.name, **_gamma0_block(cone, _reeb(spec, opts) if spec.reeb else None)}
    if spec.reeb:
        rc = reeb_cone(cone)
        xi = _reeb(spec, opts)
        body["in_reeb_cone"] = rc.in_sigma(xi, cone.datum)
    return Report("gamma0", body)


def cmd_polytope(spec: InputSpec, opts: Options) -> Report:
    cone = spec.cone()
    cp = _char_polytope(spec, opts, cone)
    m = polytope_moments(cp.plus, cone.datum)
    g0 = cp.gamma0.gamma0
    proj = iota_project(cp, g0)
    body = {
        "name": spec.name,
        "xi": cp.xi,
        "chart": cp.plus.chart.k,
        "characteristic": {
            "vertices": cp.full.vertices,
            "positive_vertices": cp.plus.vertices,
            "volume": cp.plus.volume,
            "moments": m.as_dict(),
        },
        "projected": {
            "gamma": g0,
            "vertices": proj.plus.vertices,
            "forms": [{"normal": a, "offset": b} for a, b in proj.forms],
        },
    }
    try:
        meta = facet_meta(cone, g0, cp.xi)
        fano = translate_fano(proj, g0)
        fm = polytope_moments(fano.plus, cone.datum, {x.index: x.Lam for x in meta})
        body["facets"] = [
            {"index": x.index, "outer": x.outer, "sigma_A": x.sigma_a, "lambda": x.lam, "Lambda": x.Lam} for x in meta
        ]
        body["translated"] = {"vertices": fano.plus.vertices, "moments": fm.as_dict()}
    except (NotOnFanoSlice, PolytopeError, ConeError) as exc:
        body["translated"] = {"skipped": str(exc)}
    if opts.mc_check:
        body["mc_check"] = _mc_block(cp.plus, cone.datum, opts.mc_check, {"V": m.V, "first": m.first})
    return Report("polytope", body)


def cmd_criterion(spec: InputSpec, opts: Options) -> Report:
    cone = spec.cone()
    cp = _char_polytope(spec, opts, cone)
    v = se_criterion(cp)
    body = {"name": spec.name, "xi": cp.xi, "verdict": v.as_dict()}
    pr = csc_properness(cp, cp.gamma0.gamma0)
    body["properness"] = {
        "tildebar1": pr.tildebar1,
        "tildebar2": pr.tildebar2,
        "barS": pr.barS,
        "margins": pr.margins,
        "automatic": pr.automatic,
    }
    if opts.mc_check:
        m = polytope_moments(cp.plus, cone.datum)
        body["mc_check"] = _mc_block(cp.plus, cone.datum, opts.mc_check, {"V": m.V, "first": m.first})
    return Report("criterion", body, EXIT_OK if v.holds else EXIT_FAILS)


def cmd_soliton(spec: InputSpec, opts: Options) -> Report:
    cone = spec.cone()
    cp = _char_polytope(spec, opts, cone)
    res = solve_soliton(cp, tol=opts.tol, max_depth=opts.quad_depth)
    body = {
        "name": spec.name,
        "xi": cp.xi,
        "X": res.X,
        "bar_X": res.bar_X,
        "bar_X_characteristic": res.bar_X_char,
        "iterations": res.iterations,
        "newton_trace": res.trace,
        "verdict": res.verdict.as_dict(),
        "tolerance": opts.tol,
        "quad_depth": opts.quad_depth,
    }
    if opts.mc_check:
        from .measure import integrate_exp_weighted

        proj = iota_project(cp, cp.gamma0.gamma0)
        m = polytope_moments(proj.plus, cone.datum)
        q = integrate_exp_weighted(proj.plus, cone.datum, res.X, tol=opts.tol, max_depth=opts.quad_depth)
        Z = q.Z * float(np.exp(q.log_scale))
        body["mc_check"] = _mc_block(proj.plus, cone.datum, opts.mc_check, {"V": m.V, "first": m.first, "Z": Z}, res.X)
    return Report("soliton", body, EXIT_FAILS if res.verdict.holds is False else EXIT_OK)


def cmd_sweep(spec: InputSpec, opts: Options) -> Report:
    if opts.xi2_range is None:
        raise InputError("--xi2-range: required for sweep (a:b:steps)")
    a, b, steps = opts.xi2_range
    cone = spec.cone()
    k = _sweep_coord(spec)
    xi0 = list(_reeb(spec, Options()))
    xi0[k] = Fraction(0)
    direction = [Fraction(int(i == k)) for i in range(spec.rank)]
    sw = reeb_sweep(cone, xi0, direction, linspace_exact(a, b, steps), tol=opts.tol, max_depth=opts.quad_depth)
    rows = []
    for r in sw.records:
        v = r.verdict
        rows.append(
            {
                "xi2": r.t,
                "in_sigma_o": r.in_sigma_o,
                "holds": "skipped" if v is None else ("indeterminate" if v.holds is None else v.holds),
                "margin": None if v is None else v.margin,
                "bar_X": r.bar_X,
                "X": r.X,
            }
        )
    body = {
        "name": spec.name,
        "coordinate": k,
        "records": rows,
        "transitions": [
            {"lo": lo, "hi": hi, "holds_lo": hl, "holds_hi": hh} for lo, hi, hl, hh in sw.transitions
        ],
    }
    return Report("sweep", body)


def cmd_kenergy(spec: InputSpec, opts: Options) -> Report:
    cone = spec.cone()
    cp = _char_polytope(spec, opts, cone)
    fd = fano_data(cp)
    dec = bar_decomposition(fd)
    body: dict = {
        "name": spec.name,
        "xi": cp.xi,
        "V": fd.V,
        "barS": fd.moments.barS,
        "bar_translated": fd.moments.bar,
        "coefficients": dec.coeffs,
    }
    if cone.datum.positive_roots:
        tf = necessary_test_function(cone.datum, dec)
        direct = L_fano(tf.f, fd)
        body["test_function"] = {
            "root_index": tf.root_index,
            "gradient": tf.f.pieces[0][0],
            "coefficient": tf.coefficient,
            "predicted_sign": tf.predicted_sign,
            "L_direct": direct,
            "L_identity": tf.L_identity,
            "normalization": tf.L_identity / direct if direct else None,
            "note": tf.note,
        }
        scan = positivity_scan(fd, opts.samples, opts.seed)
        body["positivity_scan"] = {"samples": scan.samples, "minimum": scan.minimum, "ok": scan.ok}
    g = build_guillemin(fd)
    r = mu(g.u0_fn(), fd)
    body["u0"] = {"l_inf_min": g.l_inf_lower_bound(), "L": r.L, "N": r.N, "mu": r.mu, "error": r.error}
    return Report("kenergy", body)


HANDLERS = {
    "validate": cmd_validate,
    "gamma0": cmd_gamma0,
    "polytope": cmd_polytope,
    "criterion": cmd_criterion,
    "soliton": cmd_soliton,
    "sweep": cmd_sweep,
    "kenergy": cmd_kenergy,
}


def run(command: str, spec: InputSpec, opts: Options | None = None) -> Report:
    """Dispatch a command; mathematical negatives give exit code 2, errors 1."""
    if command not in HANDLERS:
        raise InputError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    opts = opts or Options()
    try:
        return HANDLERS[command](spec, opts)
    except NotOnFanoSlice as exc:
        body = {"name": spec.name, "error": str(exc), "gamma0_xi": exc.value}
        if exc.suggested is not None:
            body["rescale_factor"] = exc.factor
            body["suggested_xi"] = exc.suggested
        return Report(command, body, EXIT_ERROR)
    except SolitonError as exc:
        return Report(command, {"name": spec.name, "error": str(exc), "newton_trace": exc.trace}, EXIT_ERROR)
    except (AlgebraError, ConeError, PolytopeError, QuadratureError, CriterionError, KEnergyError, InputError) as exc:
        return Report(command, {"name": spec.name, "error": f"{type(exc).__name__}: {exc}"}, EXIT_ERROR)


# ---------------------------------------------------------------------------
# Entry point


def _range(text: str) -> tuple:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected a:b:steps")
    try:
        steps = int(parts[2])
        a, b = Fraction(parts[0]), Fraction(parts[1])
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"cannot parse range {text!r}") from None
    if steps < 1:
        raise argparse.ArgumentTypeError("steps must be positive")
    return a, b, steps


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"cannot parse {text!r} as a rational") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sasaki-cone", description="Barycenter criteria for G-Sasaki moment cones.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("input", help="JSON input file, or the name of a bundled example")
    p.add_argument("--tol", type=float, default=1e-10, help="quadrature relative tolerance")
    p.add_argument("--quad-depth", type=int, default=12, help="maximum dyadic subdivision depth")
    p.add_argument("--mc-check", type=int, nargs="?", const=2**20, default=None, metavar="N",
                   help="run the quasi-Monte-Carlo oracle with N samples")
    p.add_argument("--chart", type=int, default=None, help="eliminated coordinate of the hyperplane chart")
    p.add_argument("--output", choices=("json", "text"), default="json")
    p.add_argument("--xi2", type=_fraction, default=None, help="override the sweep coordinate of the Reeb vector")
    p.add_argument("--xi2-range", type=_range, default=None, metavar="A:B:STEPS")
    p.add_argument("--rescale", action="store_true", help="rescale the Reeb vector onto the Fano slice")
    p.add_argument("--samples", type=int, default=100, help="random PL functions in the positivity scan")
    p.add_argument("--seed", type=int, default=0)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    opts = Options(
        tol=args.tol,
        quad_depth=args.quad_depth,
        mc_check=args.mc_check,
        chart=args.chart,
        xi2=args.xi2,
        xi2_range=args.xi2_range,
        rescale=args.rescale,
        samples=args.samples,
        seed=args.seed,
    )
    try:
        spec = parse_input(read_input(args.input))
    except InputError as exc:
        print(json.dumps({"command": args.command, "error": f"InputError: {exc}"}, indent=2))
        return EXIT_ERROR
    report = run(args.command, spec, opts)
    report.body["provenance"] = {
        "input": Path(args.input).name,
        "input_sha256": hashlib.sha256(read_input(args.input).encode()).hexdigest(),
        "tol": opts.tol,
        "quad_depth": opts.quad_depth,
        "chart": opts.chart,
    }
    print(report.to_json() if args.output == "json" else report.to_text())
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
