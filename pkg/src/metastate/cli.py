"""Command-line interface ``metastate``.

Exit codes: 0 success, 1 a check failed, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import formats
from .formats import FormatError, ResultRow, write_json, write_results
from .landscape import (LandscapeError, metastable_analysis, series_check, stability_level,
                        validate)

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    pass


def _ints(text: str) -> frozenset:
    try:
        vals = frozenset(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise UsageError(f"expected comma-separated state ids, got {text!r}") from None
    if not vals:
        raise UsageError("empty state set")
    return vals


def _betas(text: str) -> list:
    try:
        bs = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"bad beta list {text!r}") from None
    if not bs or any(b <= 0 for b in bs):
        raise UsageError("beta values must be positive")
    if any(b2 <= b1 for b1, b2 in zip(bs, bs[1:])):
        raise UsageError("beta list must be strictly increasing")
    return bs


def _roles(text):
    if text is None:
        return None
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError("--roles expects x2,x1,x0")
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise UsageError("--roles expects three integers") from None


def _emit(text: str, out):
    if out:
        with open(out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


# -- landscape commands ---------------------------------------------------------------

def cmd_validate(args) -> int:
    try:
        land = formats.load_landscape(args.file, check=False)
    except LandscapeError as e:
        raise FormatError(str(e), None, args.file) from None
    problems = validate(land)
    for p in problems:
        print(p)
    if not problems:
        print(f"{args.file}: ok ({land.n} states)")
    return EXIT_CHECK if problems else EXIT_OK


def analyze_report(land, roles=None) -> dict:
    rep = metastable_analysis(land)
    out = {"gamma_m": rep.gamma, "metastable": sorted(rep.metastable),
           "ground": sorted(rep.ground),
           "stability": {str(x): stability_level(land, x) for x in range(land.n)}}
    if roles is not None:
        sc = series_check(land, *roles)
        out["series"] = {"roles": list(roles), "passed": sc.passed,
                         "items": [{"name": i.name, "passed": i.passed, "detail": i.detail}
                                   for i in sc.items]}
    return out


def cmd_analyze(args) -> int:
    land = formats.load_landscape(args.file)
    roles = _roles(args.roles)
    if roles is not None and any(not 0 <= r < land.n for r in roles):
        raise UsageError("role ids out of range")
    rep = analyze_report(land, roles)
    if args.json:
        _emit(write_json(rep), args.out)
    else:
        lines = [f"Gamma_m = {rep['gamma_m']!r}",
                 f"X_m = {{{', '.join(map(str, rep['metastable']))}}}",
                 f"X_s = {{{', '.join(map(str, rep['ground']))}}}",
                 "state  H  V"]
        for x in range(land.n):
            v = rep["stability"][str(x)]
            lines.append(f"{land.label(x)}  {float(land.H[x])!r}  {'-' if v is None else repr(v)}")
        if roles is not None:
            s = rep["series"]
            lines.append(f"series roles x2,x1,x0 = {roles}: {'ok' if s['passed'] else 'FAILED'}")
            for i in s["items"]:
                lines.append(f"  [{'ok' if i['passed'] else 'FAIL'}] {i['name']} {i['detail']}".rstrip())
        _emit("\n".join(lines) + "\n", args.out)
    if roles is not None and not rep["series"]["passed"]:
        return EXIT_CHECK
    return EXIT_OK


def parse_query(q: str):
    parts = q.split(":")
    kind, rest = parts[0], parts[1:]
    arity = {"hit": 2, "cap": 2, "bounds": 2, "prob": 3, "add": 3, "pta": 1, "cond": 1}
    if kind not in arity or len(rest) != arity[kind]:
        raise UsageError(f"malformed query {q!r}; expected one of "
                         "hit:x:A cap:Y:Z bounds:Y:Z prob:y:Y1:Y2 add:y:w:z pta:M cond:x2,x1,x0")
    sets = [_ints(r) for r in rest]
    if kind in ("hit", "prob", "add"):
        if len(sets[0]) != 1:
            raise UsageError(f"query {q!r}: first argument must be a single state")
    if kind == "add" and any(len(s) != 1 for s in sets):
        raise UsageError("add query takes three single states")
    if kind == "cond" and len(sets[0]) != 3:
        raise UsageError("cond query takes x2,x1,x0")
    if kind == "cond":
        sets = [tuple(int(t) for t in rest[0].split(","))]
    return kind, sets


def _name(s):
    return "{" + ",".join(map(str, sorted(s))) + "}"


def exact_rows(land, betas, queries) -> list:
    from . import potential as pot

    parsed = [parse_query(q) for q in queries]
    rows = []
    for kind, sets in parsed:
        if kind == "cond":
            rep = pot.condition_checks(land, *sets[0], betas)
            for r in rep.rows:
                rows.append(ResultRow(r.beta, "P_x2[tau_x0<tau_x1]", r.p_wrong_order,
                                      _log(r.p_wrong_order), "potential"))
                rows.append(ResultRow(r.beta, "inv_k2_scaled", r.scaled_stage2,
                                      _log(r.scaled_stage2), "capacity"))
                rows.append(ResultRow(r.beta, "inv_k1_scaled", r.scaled_stage1,
                                      _log(r.scaled_stage1), "capacity"))
            if rep.inv_k1_fit is not None:
                for nm, fit, ait in (("inv_k1", rep.inv_k1_fit, rep.inv_k1_aitken),
                                     ("inv_k2", rep.inv_k2_fit, rep.inv_k2_aitken)):
                    rows.append(ResultRow(None, f"{nm}_fit", fit.prefactor, _log(fit.prefactor),
                                          "lsq", fit.residual))
                    rows.append(ResultRow(None, f"{nm}_aitken", ait, _log(ait), "aitken"))
            continue
        for b in betas:
            ch = pot.build_chain(land, b)
            if kind == "hit":
                (x,), A = sets
                t = pot.hitting_times(ch, A)[x]
                g = pot.green_hitting_time(ch, x, A)
                rows.append(ResultRow(b, f"E_{x}[tau_{_name(A)}]", t, _log(t), "direct",
                                      abs(g - t) / t))
            elif kind == "cap":
                r = pot.capacity_routes(ch, *sets)
                rows.append(ResultRow(b, f"cap({_name(sets[0])},{_name(sets[1])})", r.value,
                                      r.log_value, "dirichlet", r.residual))
            elif kind == "bounds":
                cb = pot.capacity_bounds(ch, land, *sets)
                tag = f"({_name(sets[0])},{_name(sets[1])})"
                rows.append(ResultRow(b, "cap_lower" + tag, cb.lower, _log(cb.lower), "path"))
                rows.append(ResultRow(b, "cap" + tag, cb.value, _log(cb.value), "dirichlet"))
                rows.append(ResultRow(b, "cap_upper" + tag, cb.upper, _log(cb.upper), "indicator"))
            elif kind == "prob":
                (y,), Y1, Y2 = sets
                p = pot.hitting_prob_before(ch, y, Y1, Y2)
                rows.append(ResultRow(b, f"P_{y}[tau_{_name(Y1)}<tau_{_name(Y2)}]", p, _log(p),
                                      "potential"))
            elif kind == "add":
                (y,), (w,), (z,) = sets
                d = pot.addition_decomposition(ch, y, w, z)
                rows.append(ResultRow(b, f"addition({y},{w},{z})", d.lhs, _log(d.lhs),
                                      "decomposition", d.residual, d.rhs))
            elif kind == "pta":
                lr = pot.pta_ratio(ch, sets[0])
                rows.append(ResultRow(b, f"pta_ratio{_name(sets[0])}", math.exp(lr), lr, "capacity"))
    return rows


def _log(v):
    if v is None:
        return None
    return math.log(v) if v > 0 else -math.inf


def cmd_exact(args) -> int:
    land = formats.load_landscape(args.file)
    betas = _betas(args.beta)
    if not args.query:
        raise UsageError("at least one --query is required")
    rows = exact_rows(land, betas, args.query)
    _emit(write_results(rows), args.out)
    return EXIT_OK


# -- Monte Carlo ------------------------------------------------------------------------

def _manifest_with_overrides(args):
    m = formats.load_manifest(args.manifest)
    if args.beta:
        m.betas = _betas(args.beta)
    if args.seed is not None:
        m.seed = args.seed
    if args.replicas is not None:
        m.replicas = args.replicas
    if args.max_steps is not None:
        m.max_steps = args.max_steps
    if not m.betas:
        raise UsageError("no beta values given")
    return m


def mc_rows(m) -> tuple[list, list]:
    from .montecarlo import ChainStepper, SimConfig, estimate_mean_exit, sample_hitting_time

    rows, dumps = [], []
    if m.model == "landscape":
        from .potential import build_chain, mean_hitting_time

        land = formats.load_landscape(m.path("landscape"))
        try:
            start = int(m.params["start"])
            target = _ints(m.params["target"])
        except KeyError as e:
            raise UsageError(f"manifest needs {e.args[0]!r}") from None
        for bi, b in enumerate(m.betas):
            ch = build_chain(land, b)
            exact = mean_hitting_time(ch, start, target)
            cfg = SimConfig(b, m.seed, m.replicas, m.max_steps)
            samples = sample_hitting_time(ChainStepper(ch), start, target, cfg, key=(bi,),
                                          prediction=exact)
            est = estimate_mean_exit(samples, seed=m.seed)
            rows.append(ResultRow(b, f"E_{start}[tau_{_name(target)}]", est.mean, _log(est.mean),
                                  "mc", None, exact, est.mean / exact, est.ci_low, est.ci_high,
                                  est.n_censored))
            dumps.append((b, samples))
    elif m.model == "pca":
        from .pca import PcaModel, pca_stationary_tv

        model = PcaModel.nearest_neighbor(int(m.params.get("L", 3)), float(m.params.get("h", 0.3)))
        sweeps = int(float(m.params.get("sweeps", 10 ** 6)))
        for b in m.betas:
            tv = pca_stationary_tv(model, b, sweeps, seed=m.seed)
            rows.append(ResultRow(b, "pca_stationary_tv", tv, _log(tv), "mc"))
    else:
        raise UsageError("mc supports landscape and pca manifests; use 'bc experiment'")
    return rows, dumps


def cmd_mc(args) -> int:
    m = _manifest_with_overrides(args)
    rows, dumps = mc_rows(m)
    _emit(write_results(rows), args.out)
    if args.samples:
        formats.write_samples(dumps, args.samples)
    return EXIT_OK


# -- Blume-Capel --------------------------------------------------------------------------

def _bc_params(args):
    from .blume_capel.model import ModelParams

    try:
        return ModelParams(args.L, args.h, getattr(args, "override_regime", False))
    except ValueError as e:
        raise UsageError(str(e)) from None


def cmd_bc_table(args) -> int:
    from .blume_capel.model import table_check

    rep = table_check()
    print(rep)
    return EXIT_OK if rep.passed else EXIT_CHECK


def _describe(zeta, sig):
    diff = np.argwhere(np.asarray(zeta) != np.asarray(sig))
    return " ".join(f"({i},{j})->{int(sig[i, j]):+d}" for i, j in diff)


def cmd_bc_droplet(args) -> int:
    from .blume_capel.droplets import DropletSpec, droplet_cycle_report

    params = _bc_params(args)
    corner = tuple(int(t) for t in args.corner.split(","))
    spec = DropletSpec(corner, args.l1, args.l2)
    try:
        spec.validate(params.L)
    except ValueError as e:
        raise UsageError(str(e)) from None
    res, rep = droplet_cycle_report(params, spec)
    print(f"droplet R_{args.l1},{args.l2} at {corner} on L={params.L}, h={params.h}")
    print(f"cycle size {res.size}{'' if res.complete else ' (stopped early)'}")
    if res.complete and res.boundary_energy is not None:
        from .blume_capel.model import hamiltonian
        rel = res.boundary_energy - hamiltonian(params, res.zeta)
        print(f"principal boundary: {len(res.principal_boundary)} configurations at H(zeta)+{rel}")
        for s in res.principal_boundary:
            print("  " + _describe(res.zeta, s))
    print(rep)
    return EXIT_OK if rep.passed else EXIT_CHECK


def structure_report(params):
    from .blume_capel.droplets import (DropletSpec, droplet_cycle_report,
                                       gate_prefactor_enumeration, strict_downhill_enumeration)
    from .blume_capel.model import critical_quantities
    from .landscape import CheckReport

    cq = critical_quantities(params)
    rep = CheckReport()
    g1 = gate_prefactor_enumeration(params, (-1, 0))
    g2 = gate_prefactor_enumeration(params, (0, 1))
    rep.add("k1 closed form equals gate enumeration", g1.k == cq.k1, f"{g1.k} vs {cq.k1}")
    rep.add("k2 closed form equals gate enumeration", g2.k == cq.k2, f"{g2.k} vs {cq.k2}")
    rep.add("critical configurations count 4 lc |Lambda|",
            g1.n_configs == 4 * cq.lc * params.n_sites, str(g1.n_configs))
    rep.add("no escapes from the gate", not g1.escapes and not g2.escapes)
    rep.add("gate energy is Gamma_c", g1.energy_offset == {cq.gamma} == g2.energy_offset)
    c = params.L // 2 - cq.lc // 2
    _, r = droplet_cycle_report(params, DropletSpec((c, c), cq.lc, cq.lc))
    for it in r.items:
        rep.add(f"R_lc,lc: {it.name}", it.passed, it.detail)
    others = 0
    for off in range(cq.lc):
        d = strict_downhill_enumeration(params, DropletSpec((c, c), cq.lc, cq.lc, 1, "E", off))
        others += d.counts["other"]
    rep.add("strict downhill paths are standard", others == 0, f"{others} non-standard")
    res, r = droplet_cycle_report(params, DropletSpec((c, 0), cq.lc, params.L))
    rep.add("stripe has no erosion", res.size == 1 and r.passed, f"cycle size {res.size}")
    return cq, rep


def cmd_bc_structure(args) -> int:
    params = _bc_params(args)
    cq, rep = structure_report(params)
    print(f"lc = {cq.lc}, Gamma_c = {cq.gamma} = {cq.gamma_value!r}, k1 = {cq.k1}, k2 = {cq.k2}")
    print(rep)
    return EXIT_OK if rep.passed else EXIT_CHECK


def experiment_rows(params, betas, cfg) -> list:
    from .blume_capel.dynamics import exit_time_experiment
    from .blume_capel.model import critical_quantities

    tab = exit_time_experiment(params, betas, cfg)
    rows = []
    for r in tab.rows:
        e = r.estimate
        rows.append(ResultRow(r.beta, r.quantity, None if e is None else e.mean,
                              None if e is None or e.mean <= 0 else math.log(e.mean), "mc", None,
                              r.prediction, r.ratio, None if e is None else e.ci_low,
                              None if e is None else e.ci_high, r.censored))
    for b in betas:
        t, z = tab.get(b, "E_d[tau_u]").estimate, tab.get(b, "E_0[tau_u]").estimate
        if t is not None and z is not None:
            rows.append(ResultRow(b, "E_d[tau_u]/E_0[tau_u]", t.mean / z.mean, None, "mc", None,
                                  2.0, t.mean / z.mean / 2.0))
    if tab.fit is not None:
        g = critical_quantities(params).gamma_value
        rows.append(ResultRow(None, "fit_gamma[E_d[tau_0u]]", tab.fit.gamma, None, "lsq",
                              tab.fit.residual, g, tab.fit.gamma / g))
        rows.append(ResultRow(None, "fit_prefactor[E_d[tau_0u]]", tab.fit.prefactor, None, "lsq",
                              tab.fit.residual))
    return rows


def _bc_manifest_params(m, override):
    from .blume_capel.model import ModelParams

    override = override or m.params.get("override_regime", "false").lower() == "true"
    try:
        params = ModelParams(int(m.params.get("L", 15)), float(m.params.get("h", 0.7)), override)
    except ValueError as e:
        raise UsageError(str(e)) from None
    if not params.regime_ok and not override:
        raise UsageError(f"L={params.L} is below the 49/h^4 regime; pass --override-regime")
    return params


def cmd_bc_experiment(args) -> int:
    from .montecarlo import SimConfig

    m = _manifest_with_overrides(args)
    if m.model != "blume-capel":
        raise UsageError("experiment needs a blume-capel manifest")
    params = _bc_manifest_params(m, args.override_regime)
    cfg = SimConfig(m.betas[0], m.seed, m.replicas, m.max_steps)
    _emit(write_results(experiment_rows(params, m.betas, cfg)), args.out)
    return EXIT_OK


# -- asymptotics --------------------------------------------------------------------------

def cmd_predict(args) -> int:
    from .asymptotics import sharp_predictions

    betas = _betas(args.beta)
    if args.bc_h is not None:
        from .blume_capel.model import ModelParams, critical_quantities

        try:
            cq = critical_quantities(ModelParams(args.L, args.bc_h))
        except ValueError as e:
            raise UsageError(str(e)) from None
        gamma, k1, k2 = cq.gamma_value, float(cq.k1), float(cq.k2)
    else:
        if None in (args.gamma, args.k1, args.k2):
            raise UsageError("give --gamma, --k1 and --k2, or --bc-h")
        gamma, k1, k2 = args.gamma, args.k1, args.k2
    rows = []
    for b in betas:
        p = sharp_predictions(gamma, k1, k2, b)
        for name, v in (("E_x2[tau_{x1,x0}]", p.first_stage), ("E_x1[tau_x0]", p.second_stage),
                        ("E_x2[tau_x0]", p.total)):
            rows.append(ResultRow(b, name, None, None, "leading-order", None, v))
    _emit(write_results(rows), args.out)
    return EXIT_OK


def cmd_fit(args) -> int:
    from .asymptotics import fit_exponential

    rows = formats.read_results(args.csv)
    pts = [(r.beta, r.value) for r in rows
           if r.quantity == args.quantity and r.beta is not None and r.value is not None]
    if len(pts) < 3:
        raise UsageError(f"need at least three rows of {args.quantity!r}, found {len(pts)}")
    fit = fit_exponential(pts, window=args.window)
    out = [ResultRow(None, f"fit_gamma[{args.quantity}]", fit.gamma, None, "lsq", fit.residual),
           ResultRow(None, f"fit_prefactor[{args.quantity}]", fit.prefactor,
                     math.log(fit.prefactor), "lsq", fit.residual)]
    _emit(write_results(out), args.out)
    return EXIT_OK


# -- manifest runner ------------------------------------------------------------------------

def cmd_run(args) -> int:
    """Run every analysis a manifest requests and write one combined CSV."""
    from .montecarlo import SimConfig

    m = _manifest_with_overrides(args)
    rows, status = [], EXIT_OK
    for a in m.analyses or ["mc"]:
        if a == "exact":
            land = formats.load_landscape(m.path("landscape"))
            qs = [q.strip() for q in m.params.get("queries", "").split(";") if q.strip()]
            rows += exact_rows(land, m.betas, qs)
        elif a == "mc":
            rows += mc_rows(m)[0]
        elif a == "experiment":
            params = _bc_manifest_params(m, args.override_regime)
            rows += experiment_rows(params, m.betas, SimConfig(m.betas[0], m.seed, m.replicas,
                                                               m.max_steps))
        elif a == "table-check":
            from .blume_capel.model import table_check

            rep = table_check()
            rows.append(ResultRow(None, "table_matches", rep.n_pass, None, "exact",
                                  None, len(rep.entries)))
            status = max(status, EXIT_OK if rep.passed else EXIT_CHECK)
        else:
            raise UsageError(f"analysis {a!r} is not available from 'run'; use its own command")
    _emit(write_results(rows), args.out)
    return status


# -- parser -----------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="metastate", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def out(sp):
        sp.add_argument("--out", help="write output here instead of stdout")

    def sim(sp):
        sp.add_argument("--beta", help="comma-separated, strictly increasing")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--replicas", type=int)
        sp.add_argument("--max-steps", type=int, dest="max_steps")
        sp.add_argument("--override-regime", action="store_true", dest="override_regime")
        out(sp)

    def lattice(sp, L=15, h=0.7):
        sp.add_argument("--L", type=int, default=L)
        sp.add_argument("--h", type=float, default=h)

    sp = sub.add_parser("validate", help="check landscape invariants")
    sp.add_argument("file")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("analyze", help="metastable structure of a landscape")
    sp.add_argument("file")
    sp.add_argument("--roles", help="x2,x1,x0 for the series check")
    sp.add_argument("--json", action="store_true")
    out(sp)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("exact", help="exact potential-theoretic quantities")
    sp.add_argument("file")
    sp.add_argument("--beta", required=True)
    sp.add_argument("--query", action="append",
                    help="hit:x:A cap:Y:Z bounds:Y:Z prob:y:Y1:Y2 add:y:w:z pta:M cond:x2,x1,x0")
    out(sp)
    sp.set_defaults(func=cmd_exact)

    sp = sub.add_parser("mc", help="Monte Carlo hitting times from a manifest")
    sp.add_argument("manifest")
    sp.add_argument("--samples", help="also dump per-replica samples here")
    sim(sp)
    sp.set_defaults(func=cmd_mc)

    bc = sub.add_parser("bc", help="Blume-Capel model").add_subparsers(dest="bc_command",
                                                                       required=True)
    sp = bc.add_parser("table-check")
    sp.set_defaults(func=cmd_bc_table)
    sp = bc.add_parser("droplet")
    sp.add_argument("--l1", type=int, required=True)
    sp.add_argument("--l2", type=int, required=True)
    sp.add_argument("--corner", default="5,5")
    lattice(sp)
    sp.set_defaults(func=cmd_bc_droplet)
    sp = bc.add_parser("structure")
    lattice(sp)
    sp.set_defaults(func=cmd_bc_structure)
    sp = bc.add_parser("experiment")
    sp.add_argument("manifest")
    sim(sp)
    sp.set_defaults(func=cmd_bc_experiment)

    sp = sub.add_parser("predict", help="leading-order exit-time predictions")
    sp.add_argument("--beta", required=True)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--k1", type=float)
    sp.add_argument("--k2", type=float)
    sp.add_argument("--bc-h", type=float, dest="bc_h")
    sp.add_argument("--L", type=int, default=15)
    out(sp)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("fit", help="exponential fit of a CSV quantity")
    sp.add_argument("csv")
    sp.add_argument("--quantity", required=True)
    sp.add_argument("--window", type=int, default=3)
    out(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("run", help="run the analyses a manifest requests")
    sp.add_argument("manifest")
    sim(sp)
    sp.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except LandscapeError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
