"""Command-line interface.

Tool subcommands (gram, ma-solve, constraint, cone-fit, tangent-rank,
spectrum, invert) expose the library pieces on JSON/CSV files; experiment
subcommands run the end-to-end verifications and exit 0 when every case
passes, 3 when a case fails, and 4 when a hypothesis is not met.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import cone, constraints, experiments
from .geometry import Point, PolarizedModel, SectionFamily, monomial_basis
from .hilbert import HermitianForm, QuadratureRule, default_rule, hilb, hilb_refined
from .linearization import FunctionBasis, invert_hilbert, laplacian_spectrum, \
    tangent_rank
from .monge_ampere import bump_density, bump_grid, convex_combination_f, solve_ma
from .potentials import RadialFunction, RadialGrid, default_grid, \
    potential_from_json, potential_to_json, zero_potential


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _dump_json(obj, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_potential(path):
    return potential_from_json(_load_json(path))


def _write_csv(path, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# tool commands


def _cmd_gram(args) -> int:
    model = PolarizedModel(args.k)
    phi = _load_potential(args.phi) if args.phi else zero_potential()
    rule = default_rule(model, n_x=args.nx, n_theta=args.ntheta)
    if args.convergence_csv:
        gram, history = hilb_refined(phi, model, tol=args.refine_tol, rule=rule)
        rows = [(nx, nt, "" if delta == float("inf") else f"{delta:.3e}")
                for nx, nt, delta in history]
        _write_csv(args.convergence_csv, ["n_x", "n_theta", "max_entry_delta"], rows)
    else:
        gram = hilb(phi, model, rule)
    _dump_json(gram.to_json(), args.out)
    print(f"gram written to {args.out}")
    return 0


def _cmd_ma_solve(args) -> int:
    model = PolarizedModel(args.k)
    grid = default_grid(args.grid_n)
    if args.f:
        f = RadialFunction.from_json(_load_json(args.f))
    elif args.constant is not None:
        f = RadialFunction(grid, np.full(grid.n, args.constant))
    elif args.bump:
        spec, eps = args.bump.split(",")
        eps = float(eps)
        p = Point.infinity() if spec.strip() == "inf" else Point.finite(complex(spec))
        grid = bump_grid(eps, n=args.grid_n, pole="inf" if p.at_infinity else "zero")
        _, f = bump_density(p, eps, model, grid)
    elif args.phi0 and args.phi1:
        phi0, phi1 = _load_potential(args.phi0), _load_potential(args.phi1)
        f = convex_combination_f(phi0, phi1, model, args.t)
    else:
        print("ma-solve: provide --f, --constant, --bump, or --phi0/--phi1/--t",
              file=sys.stderr)
        return 2
    result = solve_ma(f, model, tol=args.tol)
    _dump_json(potential_to_json(result.phi), args.out + ".phi.json")
    _write_csv(args.out + ".residuals.csv", ["iteration", "sup_residual"],
               list(enumerate(result.residuals)))
    print(f"solved in {result.iterations} iterations, residual {result.residual:.3e}")
    return 0


def _cmd_constraint(args) -> int:
    model = PolarizedModel(args.k)
    if args.action == "bound":
        num = SectionFamily.from_json(_load_json(args.num))
        den = SectionFamily.from_json(_load_json(args.den))
        M, p0 = constraints.ratio_sup(num, den)
        payload = {"bound": M, "maximizer": p0.to_json()}
        if args.out:
            _dump_json(payload, args.out)
        print(json.dumps(payload))
        return 0
    if args.action == "check":
        H = HermitianForm.from_json(_load_json(args.form))
        c = constraints.HalfSpaceConstraint.from_json(_load_json(args.constraint))
        res = constraints.check_membership(H, c)
        print(json.dumps({"classification": res.classification,
                          "margin": res.margin}))
        return 0
    if args.action == "sample-acal":
        sampled = constraints.sample_outer_polytope(model, args.count, args.seed)
        _dump_json([c.to_json() for c in sampled], args.out)
        print(f"wrote {len(sampled)} constraints to {args.out}")
        return 0
    return 2


def _cmd_cone_fit(args) -> int:
    model = PolarizedModel(args.k)
    phi_ref = _load_potential(args.phi_ref) if args.phi_ref else None
    if args.target:
        G = HermitianForm.from_json(_load_json(args.target))
    else:
        G = hilb(_load_potential(args.from_phi), model)
    points = _parse_points(args.points, model)
    fit = cone.cone_fit(G, points, model, phi=phi_ref)
    rows = []
    for p, w in zip(fit.points, fit.weights):
        if p.at_infinity:
            rows.append((1.0, "inf", w))
        else:
            rows.append((p.x_coordinate(), p.angle(), w))
    _write_csv(args.out + ".weights.csv", ["x", "theta_or_inf", "weight"], rows)
    _dump_json({"residual": fit.residual, "total_weight": fit.total_weight},
               args.out + ".residual.json")
    print(f"residual {fit.residual:.3e}")
    return 0


def _parse_points(spec: str, model: PolarizedModel):
    if spec.startswith("grid:"):
        return cone.default_point_set(model, n_x=int(spec.split(":")[1]))
    if spec.startswith("circle:"):
        return cone.circle_points(int(spec.split(":")[1]))
    return [Point.from_json(p) for p in _load_json(spec)]


def _cmd_tangent_rank(args) -> int:
    model = PolarizedModel(args.k)
    phi = _load_potential(args.phi) if args.phi else zero_potential()
    basis = FunctionBasis.default(model, n_profiles=args.profiles,
                                  mu_max=args.mu_max)
    rank, sv = tangent_rank(phi, basis, model)
    print(json.dumps({"rank": rank, "expected": model.m ** 2,
                      "basis_size": basis.size,
                      "singular_values": [float(s) for s in sv]}))
    return 0


def _cmd_spectrum(args) -> int:
    model = PolarizedModel(args.k)
    phi = _load_potential(args.phi) if args.phi else zero_potential()
    spec = laplacian_spectrum(phi, model, ell_max=args.ell_max, mu_max=args.mu_max)
    _write_csv(args.out, ["mu", "index", "eigenvalue"],
               [(mu, idx, lam) for mu, idx, lam in spec.entries])
    print(f"distance of 1 to the spectrum: {spec.distance_to_one:.6f}")
    return 0


def _cmd_invert(args) -> int:
    model = PolarizedModel(args.k)
    target = HermitianForm.from_json(_load_json(args.target))
    if args.family:
        V = SectionFamily.from_json(_load_json(args.family))
    else:
        V = monomial_basis(model)
    result = invert_hilbert(target, V, model, tol=args.tol, max_iter=args.max_iter)
    _write_csv(args.out + ".residuals.csv", ["iteration", "residual"],
               list(enumerate(result.residual_norms)))
    if hasattr(result.phi, "to_json"):
        _dump_json(potential_to_json(result.phi), args.out + ".phi.json")
    else:
        _dump_json(potential_to_json(result.phi.parts[-1]), args.out + ".phi.json")
    print(f"converged={result.converged} iterations={result.iterations} "
          f"residual={result.residual:.3e}")
    return 0 if result.converged else 1


def _cmd_experiment(name: str, args) -> int:
    if args.config:
        config = experiments.ExperimentConfig.from_ini(args.config)
        if config.name != name:
            print(f"config is for {config.name!r}, not {name!r}", file=sys.stderr)
            return 2
    else:
        config = experiments.ExperimentConfig.default(name)
    if args.out:
        config.outdir = args.out
    report = experiments.run_experiment(config)
    report.write(config.outdir)
    print(f"{name}: verdict={report.verdict} "
          f"({sum(1 for c in report.cases if c.get('pass', True))}/{len(report.cases)} cases)")
    print(f"report written to {config.outdir}/report.json")
    return report.exit_code


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hilbmap",
        description="Numerical laboratory for the Hilbert map on (CP^1, O(k))")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gram", help="Gram matrix of a potential")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--phi", help="potential JSON (default: zero)")
    p.add_argument("--nx", type=int, default=256)
    p.add_argument("--ntheta", type=int, default=None)
    p.add_argument("--refine-tol", type=float, default=1e-10)
    p.add_argument("--convergence-csv", help="write a refinement study CSV")
    p.add_argument("--out", default="gram.json")

    p = sub.add_parser("ma-solve", help="solve log MA(phi) - phi = f")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--f", help="radial function JSON")
    p.add_argument("--constant", type=float, help="f = const")
    p.add_argument("--bump", help="'p,eps' with p a complex chart value or 'inf'")
    p.add_argument("--phi0")
    p.add_argument("--phi1")
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--grid-n", type=int, default=1025)
    p.add_argument("--out", default="ma")

    p = sub.add_parser("constraint", help="half-space constraint tools")
    p.add_argument("action", choices=["bound", "check", "sample-acal"])
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--num", help="numerator family JSON")
    p.add_argument("--den", help="denominator family JSON")
    p.add_argument("--form", help="hermitian form JSON (check)")
    p.add_argument("--constraint", help="constraint JSON (check)")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", default="constraints.json")

    p = sub.add_parser("cone-fit", help="nonnegative point-mass reconstruction")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--target", help="hermitian form JSON")
    p.add_argument("--from-phi", help="potential JSON whose Gram is the target")
    p.add_argument("--phi-ref", help="reference potential JSON")
    p.add_argument("--points", default="grid:32",
                   help="'grid:N', 'circle:N', or a JSON file of points")
    p.add_argument("--out", default="conefit")

    p = sub.add_parser("tangent-rank", help="rank of the tangent map")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--phi")
    p.add_argument("--profiles", type=int, default=8)
    p.add_argument("--mu-max", type=int, default=None)

    p = sub.add_parser("spectrum", help="Laplacian spectrum by angular mode")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--phi")
    p.add_argument("--ell-max", type=int, default=8)
    p.add_argument("--mu-max", type=int, default=None)
    p.add_argument("--out", default="spectrum.csv")

    p = sub.add_parser("invert", help="Gauss-Newton inversion of the Hilbert map")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--family", help="section family JSON (default: monomials)")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=30)
    p.add_argument("--out", default="invert")

    for name in experiments.EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="INI config file")
        p.add_argument("--out", help="output directory (overrides config)")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    command = args.command
    handlers = {
        "gram": _cmd_gram,
        "ma-solve": _cmd_ma_solve,
        "constraint": _cmd_constraint,
        "cone-fit": _cmd_cone_fit,
        "tangent-rank": _cmd_tangent_rank,
        "spectrum": _cmd_spectrum,
        "invert": _cmd_invert,
    }
    if command in handlers:
        return handlers[command](args)
    return _cmd_experiment(command, args)


if __name__ == "__main__":
    sys.exit(main())
