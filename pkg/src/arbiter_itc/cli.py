"""``arbiter-itc`` command-line interface.

Exit codes: 0 success, 1 analysis error, 2 usage or schema error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from . import __version__
from .arbitration import (ArbitrationConfig, ResultsPackage, WeightsPackage, arbitrate_ipd,
                          arbitrator_combine, sponsor_run, sponsor_run_selfservice, write_document)
from .data_model import fixture_dir, load_worked_example, read_agd_json, read_ipd_csv
from .errors import ArbiterError, SchemaError
from .estimators import classic_maic, weighted_contrast, weighted_logodds
from .propensity import exact_discrete_propensity, fit_logistic, predict, stratum_counts
from .schemas import SCHEMA_VERSION
from .simharness import ScenarioSpec, run_study
from .weighting import WeightVector, maic_weights, overlap_weights

SEED_ENV = "ARBITER_ITC_SEED"
BUNDLED_SCENARIOS = {"paradox": "scenario_paradox.json", "no-modification": "scenario_no_modification.json"}


class UsageError(Exception):
    pass


@dataclass
class CommandResult:
    command: str
    exit_code: int = 0
    text: str = ""
    report: dict | None = None
    errors: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"schema": SCHEMA_VERSION, "command": self.command, "exit_code": self.exit_code,
                "errors": list(self.errors), "report": self.report}


def fmt(x: float) -> str:
    """Four decimals; values that round to zero print as 0.0000 (never -0.0000)."""
    return "0.0000" if abs(x) < 5e-5 else f"{x:.4f}"


# -- reproduce-paper -------------------------------------------------------------

def cmd_reproduce_paper(fixtures=None) -> CommandResult:
    res = CommandResult("reproduce-paper")
    try:
        fx = load_worked_example(fixtures)
    except (OSError, SchemaError, ValueError) as exc:
        res.exit_code = 1
        res.errors.append(f"fixture error: {exc}")
        res.report = {"checks": [], "values": {}}
        return res
    ac, bc = fx["ac_ipd"], fx["bc_ipd"]
    checks, values, lines = [], {}, []

    def check(name, value, expected, tol):
        ok = abs(value - expected) <= tol
        checks.append({"name": name, "value": float(value), "expected": float(expected),
                       "tolerance": float(tol), "ok": bool(ok)})
        values[name] = float(value)
        return value

    try:
        lines.append("Classic MAIC (each sponsor targets the other trial's population)")
        wa = maic_weights(ac.covariates, fx["bc_agd"].covariate_means)
        black = ac.covariates[:, 0] == 1
        check("maic_weight_ac_black", wa.weights[black][0], 1 / 600, 1e-12)
        check("maic_weight_ac_nonblack", wa.weights[~black][0], 1 / 2400, 1e-12)
        ma = classic_maic(ac, fx["bc_agd"])
        mb = classic_maic(bc, fx["ac_agd"])
        check("unweighted_logor_ac", weighted_logodds(ac, [1.0] * ac.n).point, 1.12, 0.005)
        check("unweighted_logor_bc", weighted_logodds(bc, [1.0] * bc.n).point, 1.12, 0.005)
        check("maic_logor_ac", ma.ipd_effect.point, 1.54, 0.005)
        check("maic_logor_bc", mb.ipd_effect.point, 1.52, 0.005)
        check("maic_a_vs_b_sponsor_a", ma.estimate.point, 0.42, 0.005)
        check("maic_b_vs_a_sponsor_b", mb.estimate.point, 0.40, 0.005)
        lines += [
            f"  sponsor A weights: Black {wa.weights[black][0]:.6g} (1/600), "
            f"non-Black {wa.weights[~black][0]:.6g} (1/2400), ESS {fmt(wa.ess)}",
            f"  sponsor A: logOR(AC, weighted) {fmt(ma.ipd_effect.point)} - logOR(BC) {fmt(ma.agd_effect.point)}"
            f" = A vs B {fmt(ma.estimate.point)}",
            f"  sponsor B: logOR(BC, weighted) {fmt(mb.ipd_effect.point)} - logOR(AC) {fmt(mb.agd_effect.point)}"
            f" = B vs A {fmt(mb.estimate.point)}",
            "  -> each sponsor finds its own drug superior (the MAIC paradox)",
            "",
            "Trial-membership propensity (AC = T=1)",
        ]
        exact = exact_discrete_propensity(stratum_counts(ac.covariates, bc.covariates))
        e_black, e_non = exact[(1.0,)].eps, exact[(0.0,)].eps
        check("eps_black_exact", float(e_black - Fraction(1, 3)), 0.0, 0.0)
        check("eps_nonblack_exact", float(e_non - Fraction(2, 3)), 0.0, 0.0)
        model = fit_logistic(
            [[v] for v in list(ac.covariates[:, 0]) + list(bc.covariates[:, 0])],
            [1.0] * ac.n + [0.0] * bc.n, names=["black"])
        check("eps_black_irls", predict(model, [1.0]), 1 / 3, 1e-8)
        check("eps_nonblack_irls", predict(model, [0.0]), 2 / 3, 1e-8)
        lines += [
            f"  exact: eps(Black) = {e_black}, eps(non-Black) = {e_non}",
            f"  IRLS:  eps(Black) = {predict(model, [1.0]):.10f}, eps(non-Black) = {predict(model, [0.0]):.10f}",
            "",
            "Overlap weights",
        ]
        eps_ac = [float(exact[(x,)].eps) for x in ac.covariates[:, 0]]
        eps_bc = [float(exact[(x,)].eps) for x in bc.covariates[:, 0]]
        w1 = overlap_weights(eps_ac, "T1")
        w0 = overlap_weights(eps_bc, "T0")
        black_bc = bc.covariates[:, 0] == 1
        check("omega1_black", w1.weights[black][0], 2 / 3, 1e-12)
        check("omega1_nonblack", w1.weights[~black][0], 1 / 3, 1e-12)
        check("omega0_black", w0.weights[black_bc][0], 1 / 3, 1e-12)
        check("omega0_nonblack", w0.weights[~black_bc][0], 2 / 3, 1e-12)
        lines += [
            f"  AC (omega1 = 1 - eps): Black {fmt(w1.weights[black][0])}, non-Black {fmt(w1.weights[~black][0])}",
            f"  BC (omega0 = eps):     Black {fmt(w0.weights[black_bc][0])}, non-Black "
            f"{fmt(w0.weights[~black_bc][0])}",
            "",
            "Arbitrated comparison in the overlap population (ATO)",
        ]
        t_ac = weighted_contrast(ac, w1, estimand="ATO")
        t_bc = weighted_contrast(bc, w0, estimand="ATO")
        check("ato_logor_ac", t_ac.point, 1.2993, 1e-4)
        check("ato_logor_bc", t_bc.point, 1.2993, 1e-4)
        check("ato_logor_ac_vs_table2", t_ac.point, 1.30, 0.005)
        diff = check("ato_a_vs_b", t_ac.point - t_bc.point, 0.0, 1e-10)
        lines += [
            f"  logOR(AC, omega1) = {fmt(t_ac.point)}   (reported: 1.30)",
            f"  logOR(BC, omega0) = {fmt(t_bc.point)}   (reported: 1.30)",
            f"  A vs B (ATO) = {fmt(t_ac.point)} - {fmt(t_bc.point)} = {fmt(diff)}",
        ]
    except (ArbiterError, ValueError, KeyError, IndexError) as exc:
        res.errors.append(f"analysis error on fixtures: {type(exc).__name__}: {exc}")

    failed = [c["name"] for c in checks if not c["ok"]]
    if failed:
        res.errors.append(f"checks outside tolerance: {', '.join(failed)}")
    res.exit_code = 1 if res.errors else 0
    lines += ["", f"{sum(c['ok'] for c in checks)}/{len(checks)} checks passed"]
    res.text = "\n".join(lines)
    res.report = {"checks": checks, "values": values}
    return res


# -- maic -------------------------------------------------------------------------

def cmd_maic(ipd_path, agd_path, out=None) -> CommandResult:
    res = CommandResult("maic")
    ipd = read_ipd_csv(ipd_path)
    agd = read_agd_json(agd_path)
    r = classic_maic(ipd, agd)
    b = r.balance
    rows = [{"covariate": n, "target": t, "unweighted": u, "weighted": w}
            for n, t, u, w in zip(b["covariates"], b["target"], b["unweighted"], b["weighted"])]
    res.report = {"estimate": r.estimate.to_dict(), "ipd_effect": r.ipd_effect.to_dict(),
                  "agd_effect": r.agd_effect.to_dict(), "ess": r.weights.ess, "balance": rows}
    lo, hi = r.estimate.ci95
    lines = [
        f"MAIC: {ipd.trial_id} IPD reweighted to {agd.trial_id} aggregate covariate means",
        f"  {ipd.active} vs {agd.arm_labels[0]} (logOR): {fmt(r.estimate.point)}  SE {fmt(r.estimate.se)}"
        f"  95% CI ({fmt(lo)}, {fmt(hi)})",
        f"  own trial, weighted: {fmt(r.ipd_effect.point)}   counterpart (AgD): {fmt(r.agd_effect.point)}",
        f"  ESS {fmt(r.weights.ess)} of {ipd.n}",
        f"  {'covariate':<16}{'target':>10}{'before':>10}{'after':>10}",
    ]
    lines += [f"  {row['covariate']:<16}{fmt(row['target']):>10}{fmt(row['unweighted']):>10}"
              f"{fmt(row['weighted']):>10}" for row in rows]
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        write_document(r.weights.to_dict(), Path(out) / "maic-weights.json")
    res.text = "\n".join(lines)
    return res


# -- arbitrate ----------------------------------------------------------------------

ROLES = ("arbitrator-weights", "sponsor-run", "sponsor-selfservice", "arbitrator-combine")


def load_config(path, seed=None) -> ArbitrationConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    if doc.get("protocol") == "covariate-simulation":
        if seed is not None:
            doc["seed"] = seed
        elif doc.get("seed") is None and os.environ.get(SEED_ENV):
            try:
                doc["seed"] = int(os.environ[SEED_ENV])
            except ValueError:
                raise UsageError(f"{SEED_ENV} must be an integer") from None
    elif seed is not None:
        raise UsageError("--seed applies to the covariate-simulation protocol only")
    return ArbitrationConfig.from_dict(doc)


def cmd_arbitrate(role, config_path, ipd=(), agd=None, weights=None, results=(), seed=None, out=".") -> CommandResult:
    res = CommandResult("arbitrate")
    cfg = load_config(config_path, seed)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    outputs, lines, extra = [], [], {}
    if role == "arbitrator-weights":
        if len(ipd) != 2:
            raise UsageError("arbitrator-weights needs --ipd AC.csv --ipd BC.csv")
        cov_ac, cov_bc = read_ipd_csv(ipd[0], "AC"), read_ipd_csv(ipd[1], "BC")
        pa, pb = arbitrate_ipd(cov_ac, cov_bc, cfg)
        for pkg in (pa, pb):
            outputs.append(str(write_document(pkg.to_dict(), out / f"weights-package-{pkg.recipient}.json")))
        lines.append(f"propensity model: coefficients {[round(float(c), 6) for c in pa.propensity.coefficients]}, "
                     f"converged={pa.propensity.converged}")
        lines.append(f"ESS sponsor A {fmt(pa.weights.ess)}, sponsor B {fmt(pb.weights.ess)}")
    elif role in ("sponsor-run", "sponsor-selfservice"):
        if len(ipd) != 1:
            raise UsageError(f"{role} needs exactly one --ipd (the sponsor's own trial)")
        own = read_ipd_csv(ipd[0])
        if role == "sponsor-run":
            if weights is None:
                raise UsageError("sponsor-run needs --weights")
            rp = sponsor_run(own, WeightsPackage.load(weights), cfg)
        else:
            if agd is None:
                raise UsageError("sponsor-selfservice needs --agd (the counterpart's aggregate data)")
            rp = sponsor_run_selfservice(own, read_agd_json(agd), cfg)
        outputs.append(str(write_document(rp.to_dict(), out / f"results-package-{rp.sender}.json")))
        lines.append(f"{rp.sender}: ATO logOR {own.active} vs {own.anchor} = {fmt(rp.estimate.point)} "
                     f"(SE {fmt(rp.estimate.se)}), ESS {fmt(rp.ess)}")
    elif role == "arbitrator-combine":
        if len(results) != 2:
            raise UsageError("arbitrator-combine needs two --results files")
        est = arbitrator_combine(ResultsPackage.load(results[0]), ResultsPackage.load(results[1]), cfg)
        outputs.append(str(write_document(est.to_dict(), out / "arbitrated-estimate.json")))
        lo, hi = est.ci95 if est.ci95 else (float("nan"),) * 2
        lines.append(f"arbitrated ATO, A vs B (logOR): {fmt(est.point)}  SE {fmt(est.se or 0.0)}  "
                     f"95% CI ({fmt(lo)}, {fmt(hi)})")
        extra["estimate"] = est.to_dict()
    else:
        raise UsageError(f"unknown role {role!r}")
    lines += [f"wrote {p}" for p in outputs]
    res.text = "\n".join(lines)
    res.report = {"role": role, "outputs": outputs, **extra}
    return res


# -- simulate ---------------------------------------------------------------------

def resolve_scenario(name_or_path) -> Path:
    if name_or_path in BUNDLED_SCENARIOS:
        return fixture_dir() / BUNDLED_SCENARIOS[name_or_path]
    return Path(name_or_path)


def cmd_simulate(scenario, replicates=None, seed=None, threads=None, out=None) -> CommandResult:
    res = CommandResult("simulate")
    spec = ScenarioSpec.load(resolve_scenario(scenario))
    if replicates is not None:
        if replicates < 1:
            raise UsageError("replicate count must be positive")
        spec = spec.replace(replicates=replicates)
    if seed is not None:
        spec = spec.replace(seed=seed)
    threads = threads if threads is not None else (os.cpu_count() or 1)
    report = run_study(spec, threads=threads)
    res.report = report.to_dict()
    res.text = report.to_text()
    if report.failed:
        res.exit_code = 1
        res.errors.append(f"{report.aborted} of {report.replicates} replicates aborted")
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "study-report.json").write_text(json.dumps(res.report, indent=2, sort_keys=True) + "\n")
        (Path(out) / "study-report.txt").write_text(res.text + "\n")
    return res


# -- entry point ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="arbiter-itc", description="Arbitrated matching-adjusted indirect comparison")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--json", action="store_true", help="print a machine-readable report")

    sp = sub.add_parser("reproduce-paper", help="rerun the worked example end to end")
    sp.add_argument("--fixtures", help="directory with the worked-example files (default: bundled)")
    common(sp)

    sp = sub.add_parser("maic", help="classic MAIC: own IPD against the counterpart's AgD")
    sp.add_argument("--ipd", required=True)
    sp.add_argument("--agd", required=True)
    sp.add_argument("--out")
    common(sp)

    sp = sub.add_parser("arbitrate", help="one role's step of an arbitration protocol")
    sp.add_argument("role", choices=ROLES)
    sp.add_argument("--config", required=True)
    sp.add_argument("--ipd", action="append", default=[], help="IPD CSV (arbitrator-weights: AC then BC)")
    sp.add_argument("--agd", help="counterpart AgD JSON (sponsor-selfservice)")
    sp.add_argument("--weights", help="weights package (sponsor-run)")
    sp.add_argument("--results", action="append", default=[], help="results packages (arbitrator-combine)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", default=".")
    common(sp)

    sp = sub.add_parser("simulate", help="Monte Carlo study of a scenario")
    sp.add_argument("--scenario", required=True, help=f"scenario JSON or one of {sorted(BUNDLED_SCENARIOS)}")
    sp.add_argument("--replicates", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--threads", type=int)
    sp.add_argument("--out")
    common(sp)
    return p


def run(argv=None) -> CommandResult:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "reproduce-paper":
            return cmd_reproduce_paper(args.fixtures)
        if args.command == "maic":
            return cmd_maic(args.ipd, args.agd, args.out)
        if args.command == "arbitrate":
            return cmd_arbitrate(args.role, args.config, args.ipd, args.agd, args.weights, args.results,
                                 args.seed, args.out)
        return cmd_simulate(args.scenario, args.replicates, args.seed, args.threads, args.out)
    except (UsageError, SchemaError, FileNotFoundError) as exc:
        return CommandResult(args.command, 2, errors=[f"usage error: {exc}"])
    except (ArbiterError, ValueError) as exc:
        return CommandResult(args.command, 1, errors=[f"{type(exc).__name__}: {exc}"])


def main(argv=None) -> int:
    want_json = "--json" in (argv if argv is not None else sys.argv[1:])
    res = run(argv)
    if want_json:
        print(json.dumps(res.to_dict(), indent=2, sort_keys=True))
    else:
        if res.text:
            print(res.text)
        for e in res.errors:
            print(f"error: {e}", file=sys.stderr)
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
