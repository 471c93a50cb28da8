"""Command line front end: ``genrect {solve,check,lln,bench} --config FILE``.

Exit status 0 means every output was written; 1 means a check marked
``must_pass`` failed (outputs are still written); 2 means the configuration
was rejected.  Errors print one line ``error: CODE: message`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import consistency as cons
from .cequiv import PhiDescriptor, probe_properties, spec_from_dict
from .core import (
    LEAF_VALUES,
    AdaptedTree,
    DiscountedUtilityScale,
    Prior,
    ShockSpace,
    lifetime_utility,
    random_plan,
    random_tree,
    truncation_error_bound,
)
from .errors import ConfigurationError, GenrectError
from .lln import coverage_experiment
from .reporting import atomic_write, csv_text, fmt_human, to_json_text
from .solver import SolveConfig, cross_check, solve_nested, solve_value_iteration, worst_case_seed

COMMANDS = ("solve", "check", "lln", "bench")
RANDOMIZED = ("check", "lln", "bench")


# ---------------------------------------------------------------------------
# configuration


def load_schema() -> dict:
    return json.loads(resources.files("genrect").joinpath("config.schema.json").read_text(encoding="utf-8"))


def _validate(instance, schema: dict, ref: str | None = None) -> None:
    target = schema if ref is None else {"$ref": f"#/$defs/{ref}", "$defs": schema["$defs"]}
    validator = jsonschema.Draft202012Validator(target)
    errors = sorted(validator.iter_errors(instance), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigurationError(f"{where}: {err.message}", "SCHEMA")


def load_config(path: str | Path, command: str, seed_override: int | None = None) -> dict:
    path = Path(path)
    try:
        config = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"config file {path} not found", "CONFIG_READ") from None
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}", "CONFIG_READ") from None
    schema = load_schema()
    _validate(config, schema)
    if config.get("command", command) != command:
        raise ConfigurationError(f"config is for {config['command']!r}, not {command!r}", "COMMAND_MISMATCH")
    config.setdefault("options", {})
    _validate(config["options"], schema, f"{command}_options")
    if seed_override is not None:
        config["seed"] = int(seed_override)
    if command in RANDOMIZED and "seed" not in config:
        raise ConfigurationError(f"the {command} command needs a seed", "MISSING_SEED")
    config["_base"] = path.parent
    return config


def _require(config: dict, key: str):
    if key not in config:
        raise ConfigurationError(f"config needs {key!r}", "SCHEMA")
    return config[key]


def _space(config: dict) -> ShockSpace:
    return ShockSpace(tuple(_require(config, "states")))


def _scale(config: dict) -> DiscountedUtilityScale:
    return DiscountedUtilityScale(_require(config, "beta"))


def _load_input(item: dict, base: Path, space: ShockSpace, beta: float | None) -> AdaptedTree:
    if "path" in item:
        p = base / item["path"]
        try:
            item = json.loads(p.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigurationError(f"input file {p} not found", "INPUT_FILE") from None
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read input {p}: {exc}", "INPUT_FILE") from None
        _validate(item, load_schema(), "tree")
    return AdaptedTree.from_dict(item, space, beta)


# ---------------------------------------------------------------------------
# commands; each returns (exit status, {filename: text}, summary lines)


def run_solve(config: dict):
    space, scale = _space(config), _scale(config)
    spec = spec_from_dict(_require(config, "i_plus_one"), space)
    opts = config["options"]
    cfg = SolveConfig(spec, scale, opts.get("tol", 1e-10), opts.get("max_iter", 10_000))
    trees = [_load_input(item, config["_base"], space, scale.beta) for item in _require(config, "inputs")]
    if not trees:
        raise ConfigurationError("solve needs at least one input", "SCHEMA")
    plans = [t for t in trees if t.kind != LEAF_VALUES]
    report = None
    if plans:
        seed = worst_case_seed(space.n) if opts.get("seed_functional") == "worst_case" else None
        report = solve_value_iteration(cfg, plans, seed)
    rows, summary, k = [], [], 0
    for i, tree in enumerate(trees):
        if tree.kind == LEAF_VALUES:
            value = solve_nested(cfg, tree)
            rows.append({"index": i, "kind": tree.kind, "depth": tree.depth, "value": value})
        else:
            value = report.values[k]
            k += 1
            nested = solve_nested(cfg, lifetime_utility(tree, scale))
            rows.append({"index": i, "kind": tree.kind, "depth": tree.depth, "value": value, "nested_value": nested})
        summary.append(f"input {i}: value {fmt_human(value)}")
    out = {
        "i_plus_one": spec.kind,
        "beta": scale.beta,
        "inputs": rows,
        "truncation_bound": truncation_error_bound(max(t.depth for t in trees), scale),
        "value_iteration": report.to_dict() if report else None,
        "cross_check_discrepancy": cross_check(cfg, plans, report) if plans else None,
    }
    files = {"solve_report.json": to_json_text(out)}
    status = 0
    if report is not None:
        files["solve_residuals.csv"] = report.to_csv()
        summary.append(
            f"value iteration: {report.iterations} iterations, converged={report.converged}, "
            f"cross-check {fmt_human(out['cross_check_discrepancy'])}"
        )
        if opts.get("must_converge", spec.translation_invariant) and not report.converged:
            status = 1
    return status, files, summary


def _ex_ante(desc: dict, cfg: SolveConfig, space: ShockSpace, depth: int):
    kind = desc["kind"]
    if kind == "nested":
        return lambda xi: solve_nested(cfg, xi)
    if kind == "product_expectation":
        return cons.product_expectation(Prior(_field(desc, "prior")))
    if kind == "nogain_entropic":
        theta = _field(desc, "theta")
        ref = Prior(desc.get("reference", [1.0 / space.n] * space.n))
        table = cons.CostTable.relative_entropy(ref, 1.0 / (theta * cfg.beta), int(desc.get("mesh", 100)))
        return cons.NoGainExAnte(table, cfg.beta)
    mu0 = _field(desc, "mu0")
    prior = cons.SecondOrderPrior(space.n, mu0["support"], Prior(mu0["weights"]))
    return cons.SmoothExAnte(prior, PhiDescriptor.exponential(_field(desc, "theta")))


def _field(d: dict, key: str):
    if key not in d:
        raise ConfigurationError(f"check needs field {key!r}", "INVALID_SPEC")
    return d[key]


def _second_order(d: dict, n: int) -> cons.SecondOrderPrior:
    return cons.SecondOrderPrior(n, d["support"], Prior(d["weights"]))


def run_check(config: dict):
    space = _space(config)
    seed = config["seed"]
    reports, summary, status = [], [], 0
    for j, item in enumerate(config["options"]["checks"]):
        kind = item["kind"]
        depth = item.get("depth", 2)
        samples = item.get("samples", 100)
        name = item.get("name", f"{kind}_{j}")
        if kind in ("rectangularity", "probe", "hull"):
            spec = spec_from_dict(_require(config, "i_plus_one"), space)
            cfg = SolveConfig(spec, _scale(config))
        if kind == "rectangularity":
            extra = [_load_input(t, config["_base"], space, None) for t in item.get("extra_trees", [])]
            rep = cons.check_generalized_rectangularity(
                _ex_ante(item.get("ex_ante", {"kind": "nested"}), cfg, space, depth),
                spec, cfg.beta, depth, samples, seed, space, extra, item.get("tolerance", 1e-10),
            )
        elif kind == "probe":
            pr = probe_properties(spec, item.get("samples", 1000), seed)
            required = item.get("properties", [])
            expected_fail = item.get("expect_fail", [])
            ok = all(pr.passes(p) for p in required) and not any(pr.passes(p) for p in expected_fail)
            rep = {
                "check": "properties",
                "residual": max([pr.violations[p] for p in required] or [0.0]),
                "violations": pr.violations,
                "worst_case_input": pr.worst_inputs,
                "tolerance": pr.tolerance,
                "pass": ok,
            }
        elif kind == "hull":
            if spec.kind != "maxmin":
                raise ConfigurationError("the hull check needs a maxmin one-step functional", "INVALID_SPEC")
            rng = np.random.default_rng(seed)
            worst, worst_tree = 0.0, None
            for _ in range(samples):
                xi = random_tree(space, depth, rng)
                gap = abs(solve_nested(cfg, xi) - cons.hull_minimum(spec.priors, xi))
                if worst_tree is None or gap > worst:
                    worst, worst_tree = gap, xi
            tol = item.get("tolerance", 1e-10)
            rep = {
                "check": "rectangular_hull",
                "residual": worst,
                "worst_case_input": worst_tree.to_dict(),
                "tolerance": tol,
                "pass": worst <= tol,
            }
        elif kind == "exponential_form":
            phi = PhiDescriptor.from_dict(_field(item, "phi"))
            rep = cons.check_exponential_form(phi, _field(item, "support"), Prior(_field(item, "weights")))
            tol = item.get("tolerance", 1e-10)
            if rep["inconclusive"]:
                rep["pass"] = True
            elif rep["is_exponential_or_linear"]:
                rep["pass"] = rep["ti_violation"] <= tol
            else:
                rep["pass"] = rep["ti_violation"] > 1e-4
            rep["residual"], rep["tolerance"] = rep["ti_violation"], tol
        elif kind == "smooth_entropy":
            mu1 = _second_order(_field(item, "mu_plus_one"), space.n)
            mu0 = _second_order(item["mu0"], space.n) if "mu0" in item else cons.product_second_order_prior(mu1, depth)
            rep = cons.check_smooth_entropy_condition(
                mu0, mu1, _field(item, "theta"), _require(config, "beta"), depth, samples, seed,
                item.get("tolerance", 1e-6),
            )
        else:
            phi = PhiDescriptor.from_dict(_field(item, "phi"))
            gap = cons.sequential_example_check(phi, Prior(_field(item, "mu")), _field(item, "partition"), _field(item, "payoff"))
            tol = item.get("tolerance", 1e-12)
            rep = {"check": "sequential_recursivity", "residual": gap, "worst_case_input": None, "tolerance": tol, "pass": gap <= tol}
        rep = {"name": name, **rep, "must_pass": item.get("must_pass", True)}
        rep["pass"] = bool(rep["pass"])
        reports.append(rep)
        summary.append(f"{name}: residual {fmt_human(rep['residual'])} {'pass' if rep['pass'] else 'FAIL'}")
        if rep["must_pass"] and not rep["pass"]:
            status = 1
    out = {"seed": seed, "checks": reports, "all_pass": all(r["pass"] for r in reports)}
    return status, {"check_report.json": to_json_text(out)}, summary


def run_lln(config: dict):
    opts, seed = config["options"], config["seed"]
    priors = [Prior(p) for p in opts["priors"]]
    xi = opts["xi"]
    if any(p.n != len(xi) for p in priors):
        raise ConfigurationError("xi and the priors disagree on the number of states", "INVALID_SPEC")
    table = coverage_experiment(priors, xi, opts["epsilon"], opts["horizons"], opts["trials"], seed)
    worst = {str(h): f for h, f in sorted(table.worst.items())}
    summary = [f"horizon {h}: worst coverage {fmt_human(f)}" for h, f in worst.items()]
    status = 0
    if "min_frequency" in opts and min(table.worst.values()) < opts["min_frequency"]:
        status = 1
    files = {
        "coverage.csv": table.to_csv(),
        "coverage_summary.json": to_json_text(
            {"seed": seed, "lower": table.rows[0]["lower"], "upper": table.rows[0]["upper"], "worst_frequency": worst}
        ),
    }
    return status, files, summary


def run_bench(config: dict):
    opts, seed = config["options"], config["seed"]
    scale = _scale(config)
    timing = opts.get("record_timing", True)
    rows, summary = [], []
    for j, item in enumerate(opts["grid"]):
        space = ShockSpace(tuple(item["states"])) if "states" in item else _space(config)
        spec = spec_from_dict(item["spec"], space)
        cfg = SolveConfig(spec, scale, opts.get("tol", 1e-10), opts.get("max_iter", 10_000))
        rng = np.random.default_rng([seed, j])
        plans = [random_plan(space, item["depth"], scale, rng) for _ in range(opts.get("plans", 10))]
        start = time.perf_counter()
        report = solve_value_iteration(cfg, plans)
        elapsed = time.perf_counter() - start
        ratio = max(report.contraction_ratios) if report.contraction_ratios else None
        rows.append([item["depth"], space.n, spec.kind, report.iterations, elapsed if timing else None, ratio])
        summary.append(f"depth {item['depth']} |S|={space.n} {spec.kind}: {report.iterations} iterations")
    header = ["depth", "n_states", "spec_kind", "iterations", "wall_time", "contraction_ratio"]
    return 0, {"bench.csv": csv_text(header, rows)}, summary


RUNNERS = {"solve": run_solve, "check": run_check, "lln": run_lln, "bench": run_bench}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="genrect", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default="./out", help="output directory (default ./out)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--quiet", action="store_true", help="suppress the summary on stdout")
    return parser


def run(command: str, config_path: str | Path, out: str | Path = "./out", seed: int | None = None, quiet: bool = True) -> int:
    """Run one command; returns the exit status and writes outputs under ``out``."""
    try:
        config = load_config(config_path, command, seed)
        status, files, summary = RUNNERS[command](config)
    except GenrectError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 2
    out = Path(out)
    for name, text in files.items():
        atomic_write(out / name, text)
    if not quiet:
        for line in summary:
            print(line)
    if status == 1:
        print("error: CHECK_FAILED: a must-pass check failed", file=sys.stderr)
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args.out, args.seed, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
