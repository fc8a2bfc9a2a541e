"""Command-line front end.

Every command reads an optional JSON run configuration, applies the
command-line overrides, computes all outputs in memory and only then writes
them.  Exit codes: 0 success, 2 configuration error, 3 runtime or data error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

from .channel import fmt, read_calibration_csv, read_samples_csv, write_calibration_csv, write_samples_csv
from .errors import ConfigurationError, FuzzyLocError
from .evaluation import (
    CONFIDENCE_LEVELS,
    DEFAULT_TRAINING_POSITIONS,
    PSO_ALGORITHM,
    beacon_sweep,
    cdf_csv,
    compare_algorithms,
    compute_stats,
    empirical_cdf,
    quantile,
    stats_json,
    sweep_csv,
    tuned_controllers,
)
from .fuzzy import FlcSpec, default_flc1, default_flc2, dumps_flc, loads_flc
from .localization import Anchor, GridMap, locate, offline_calibrate, with_reliability
from .pso import PsoConfig, mean_output, run_pso, decode_chromosome
from .simulator import (
    ALGORITHMS,
    NoiseModel,
    Scenario,
    calibrate_scenario,
    generate_scenario,
    sample_rssi,
    simulate_calibration,
    with_anchor_count,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


# --------------------------------------------------------------------------
# configuration

@dataclass
class PsoBlock:
    k: int = 50
    iterations: int = 20
    w: float = 0.74
    c1: float = 1.47
    c2: float = 1.47
    epsilon: float = 1e-6
    fitness: str = "F2"  # F1 mean controller output, F2 negative mean localization error
    target: str = "both"  # flc1, flc2 or both (F2 only)
    training_positions: int = DEFAULT_TRAINING_POSITIONS

    def config(self, seed: int) -> PsoConfig:
        return PsoConfig(self.k, self.iterations, self.w, self.c1, self.c2, seed, self.epsilon)


@dataclass
class SweepBlock:
    counts: list = field(default_factory=lambda: list(range(4, 11)))
    seeds: Any = 30  # a count (seeds 0..n-1) or an explicit list
    placement: str = "grid"
    algorithms: list = field(default_factory=lambda: ["fuzzy"])

    def seed_list(self, base: int) -> list[int]:
        if isinstance(self.seeds, int):
            return [base + i for i in range(self.seeds)]
        return [int(s) for s in self.seeds]


@dataclass
class RunConfig:
    scenario: Any = None  # path, or generation parameters
    flc1: str | None = None
    flc2: str | None = None
    grid_s: float = 0.25
    algorithms: list = field(default_factory=lambda: list(ALGORITHMS))
    pso: PsoBlock = field(default_factory=PsoBlock)
    sweep: SweepBlock = field(default_factory=SweepBlock)
    output_dir: str = "out"
    seed: int = 0
    anchors_file: str | None = None
    samples_file: str | None = None
    # set from the command line only
    anchor_count: int | None = field(default=None, repr=False)
    base_dir: Path = field(default_factory=Path.cwd, repr=False)

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigurationError("run configuration must be a JSON object")
        d = dict(d)
        try:
            pso = _block(PsoBlock, d.pop("pso", {}), "pso")
            sweep = _block(SweepBlock, d.pop("sweep", {}), "sweep")
            cfg = _block(cls, d, "run configuration")
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc
        cfg.pso, cfg.sweep, cfg.base_dir = pso, sweep, base_dir
        cfg.validate()
        return cfg

    def validate(self):
        if not (isinstance(self.grid_s, (int, float)) and self.grid_s > 0):
            raise ConfigurationError(f"grid_s must be > 0, got {self.grid_s!r}")
        for alg in self.algorithms:
            if alg not in ALGORITHMS and alg != PSO_ALGORITHM:
                raise ConfigurationError(f"unknown algorithm {alg!r}")
        if self.pso.fitness not in ("F1", "F2"):
            raise ConfigurationError(f"pso.fitness must be F1 or F2, got {self.pso.fitness!r}")
        if self.pso.target not in ("flc1", "flc2", "both"):
            raise ConfigurationError(f"pso.target must be flc1, flc2 or both, got {self.pso.target!r}")
        if self.pso.fitness == "F1" and self.pso.target == "both":
            raise ConfigurationError("F1 tunes a single controller; set pso.target to flc1 or flc2")

    def path(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else self.base_dir / q


def _block(cls, d, name):
    if not isinstance(d, dict):
        raise ConfigurationError(f"{name} must be a JSON object")
    known = {f.name for f in fields(cls)} - {"base_dir", "anchor_count"}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigurationError(f"unknown key(s) in {name}: {', '.join(unknown)}")
    return cls(**d)


def _read_text(path: Path, what: str) -> str:
    try:
        return path.read_text()
    except FileNotFoundError:
        raise ConfigurationError(f"{what} not found: {path}") from None
    except OSError as exc:
        raise ConfigurationError(f"cannot read {what} {path}: {exc}") from exc


def _read_json(path: Path, what: str):
    try:
        return json.loads(_read_text(path, what))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{what} {path}: invalid JSON: {exc}") from exc


def load_config(args) -> RunConfig:
    if args.config is not None:
        path = Path(args.config)
        cfg = RunConfig.from_dict(_read_json(path, "config file"), path.parent)
    else:
        cfg = RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.particles is not None:
        cfg.pso.k = args.particles
    if args.iterations is not None:
        cfg.pso.iterations = args.iterations
    if args.out_dir is not None:
        cfg.output_dir = str(Path(args.out_dir).resolve())
    if args.anchors is not None:
        if args.anchors < 1:
            raise ConfigurationError("--anchors must be >= 1")
        cfg.anchor_count = args.anchors
    cfg.validate()
    return cfg


def build_scenario(cfg: RunConfig) -> Scenario:
    sc = cfg.scenario
    count = cfg.anchor_count
    if isinstance(sc, str):
        scenario = Scenario.from_dict(_read_json(cfg.path(sc), "scenario file"))
        if count is not None:
            scenario = with_anchor_count(scenario, count)
        return scenario
    params = dict(sc or {})
    known = {"room", "n_anchors", "n_positions", "noise", "samples_per_position", "placement"}
    unknown = sorted(set(params) - known)
    if unknown:
        raise ConfigurationError(f"unknown key(s) in scenario: {', '.join(unknown)}")
    try:
        noise = params.get("noise")
        if noise is not None:
            noise = NoiseModel(float(noise.get("sigma_db", 1.0)), float(noise.get("p_multipath", 0.2)),
                               tuple(noise.get("attenuation", (2.0, 10.0))))
        return generate_scenario(
            tuple(float(v) for v in params.get("room", (10.0, 10.0))),
            int(count if count is not None else params.get("n_anchors", 8)),
            int(params.get("n_positions", 20)),
            noise,
            cfg.seed,
            int(params.get("samples_per_position", 30)),
            params.get("placement", "grid"),
        )
    except (AttributeError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad scenario parameters: {exc}") from exc


def load_flcs(cfg: RunConfig) -> tuple[FlcSpec, FlcSpec]:
    flc1 = loads_flc(_read_text(cfg.path(cfg.flc1), "flc1 file")) if cfg.flc1 else default_flc1()
    flc2 = loads_flc(_read_text(cfg.path(cfg.flc2), "flc2 file")) if cfg.flc2 else default_flc2()
    return flc1, flc2


# --------------------------------------------------------------------------
# output handling

def write_outputs(out_dir: Path, files: dict[str, str]) -> list[Path]:
    """Write all files or none: stage to temporaries, then rename."""
    out_dir.mkdir(parents=True, exist_ok=True)
    staged, done = [], []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out_dir)
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            staged.append((Path(tmp), out_dir / name))
        for tmp, final in staged:
            os.replace(tmp, final)
            done.append(final)
    except BaseException:
        for tmp, _ in staged:
            tmp.unlink(missing_ok=True)
        for final in done:
            final.unlink(missing_ok=True)
        raise
    return done


def _trace_csv(trace) -> str:
    return "iteration,gbest_fitness\n" + "".join(f"{i},{fmt(v)}\n" for i, v in enumerate(trace))


def _anchors_json(anchors: Sequence[Anchor]) -> str:
    return json.dumps([a.to_dict() for a in anchors], indent=2) + "\n"


# --------------------------------------------------------------------------
# commands

def cmd_calibrate(args) -> dict[str, str]:
    calibration = read_calibration_csv(_read_text(Path(args.csv), "calibration CSV"))
    positions = None
    if args.scenario:
        positions = Scenario.from_dict(_read_json(Path(args.scenario), "scenario file")).anchor_positions
        missing = [aid for aid in calibration if aid not in positions]
        if missing:
            raise ConfigurationError(f"anchors missing from scenario: {', '.join(missing)}")
    flc1 = loads_flc(_read_text(Path(args.flc1), "flc1 file")) if args.flc1 else None
    anchors = offline_calibrate(calibration, positions, flc1)
    return {Path(args.out).name: _anchors_json(anchors)}


def cmd_simulate(cfg: RunConfig) -> dict[str, str]:
    scenario = build_scenario(cfg)
    rows = []
    for idx, pos in enumerate(scenario.test_positions):
        rows.extend((idx, s) for s in sample_rssi(scenario, pos, stream=idx))
    return {
        "scenario.json": scenario.dumps(),
        "samples.csv": write_samples_csv(rows),
        "calibration.csv": write_calibration_csv(simulate_calibration(scenario)),
    }


def cmd_localize(cfg: RunConfig) -> dict[str, str]:
    flc1, flc2 = load_flcs(cfg)
    scenario = build_scenario(cfg)
    if cfg.anchors_file:
        raw = _read_json(cfg.path(cfg.anchors_file), "anchors file")
        try:
            anchors = [Anchor.from_dict(a) for a in raw]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad anchors file: {exc}") from exc
        if cfg.flc1:
            anchors = with_reliability(anchors, flc1)
    else:
        anchors = calibrate_scenario(scenario, flc1)
    if cfg.samples_file:
        dwells = read_samples_csv(_read_text(cfg.path(cfg.samples_file), "samples CSV"))
    else:
        dwells = {idx: sample_rssi(scenario, pos, stream=idx) for idx, pos in enumerate(scenario.test_positions)}
    grid = GridMap.for_room(*scenario.room, cfg.grid_s)
    fixes = [{"position_index": idx, **locate(grid, anchors, samples, flc2).to_dict()}
             for idx, samples in dwells.items()]
    return {"fixes.json": json.dumps(fixes, indent=2) + "\n"}


def cmd_optimize(cfg: RunConfig) -> dict[str, str]:
    flc1, flc2 = load_flcs(cfg)
    block = cfg.pso
    if block.fitness == "F1":
        template = flc1 if block.target == "flc1" else flc2
        result = run_pso(block.config(cfg.seed), template, mean_output(template))
        tuned = decode_chromosome(result.best, template)
        return {f"{block.target}.json": dumps_flc(tuned), f"trace_{block.target}.csv": _trace_csv(result.trace)}
    scenario = build_scenario(cfg)
    anchors = calibrate_scenario(scenario, flc1)
    grid = GridMap.for_room(*scenario.room, cfg.grid_s)
    if block.target == "both":
        tuned = tuned_controllers(scenario, anchors, grid, block.config(cfg.seed), block.training_positions,
                                  flc1, flc2)
        return {
            "flc1.json": dumps_flc(tuned.flc1),
            "flc2.json": dumps_flc(tuned.flc2),
            "trace_flc1.csv": _trace_csv(tuned.flc1_result.trace),
            "trace_flc2.csv": _trace_csv(tuned.flc2_result.trace),
        }
    from .fitness import LocalizationProblem, neg_mean_error
    from .simulator import observe_training

    problem = LocalizationProblem.from_observations(grid, observe_training(scenario, anchors,
                                                                           block.training_positions))
    template = flc1 if block.target == "flc1" else flc2
    result = run_pso(block.config(cfg.seed), template, neg_mean_error(problem, block.target, flc1, flc2))
    tuned = decode_chromosome(result.best, template)
    return {f"{block.target}.json": dumps_flc(tuned), f"trace_{block.target}.csv": _trace_csv(result.trace)}


def cmd_evaluate(cfg: RunConfig) -> dict[str, str]:
    flc1, flc2 = load_flcs(cfg)
    scenario = build_scenario(cfg)
    errors = compare_algorithms(scenario, cfg.algorithms, cfg.grid_s, flc1, flc2,
                                cfg.pso.config(cfg.seed), cfg.pso.training_positions)
    out = {}
    stats = []
    lines = ["algorithm,probability,error\n"]
    for alg in cfg.algorithms:
        stats.append((alg, compute_stats(errors[alg])))
        cdf = empirical_cdf(errors[alg])
        out[f"cdf_{alg}.csv"] = cdf_csv(cdf)
        lines.extend(f"{alg},{fmt(p)},{fmt(quantile(cdf, p))}\n" for p in CONFIDENCE_LEVELS)
    out["stats.json"] = stats_json(stats)
    out["quantiles.csv"] = "".join(lines)
    return out


def cmd_sweep(cfg: RunConfig) -> dict[str, str]:
    flc1, flc2 = load_flcs(cfg)
    template = build_scenario(cfg)
    sw = cfg.sweep
    for alg in sw.algorithms:
        if alg not in ALGORITHMS and alg != PSO_ALGORITHM:
            raise ConfigurationError(f"unknown algorithm {alg!r}")
    rows = beacon_sweep(template, sw.counts, sw.algorithms, sw.seed_list(cfg.seed), cfg.grid_s, sw.placement,
                        flc1, flc2, cfg.pso.config(0), cfg.pso.training_positions)
    return {"sweep.csv": sweep_csv(rows)}


PIPELINE = {
    "simulate": cmd_simulate,
    "localize": cmd_localize,
    "optimize": cmd_optimize,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fuzzyloc", description="Fuzzy RSSI indoor localization pipeline.")
    sub = p.add_subparsers(dest="command", required=True)

    cal = sub.add_parser("calibrate", help="fit path-loss models and reliabilities from a calibration CSV")
    cal.add_argument("csv", help="calibration CSV (anchor_id,distance_m,rssi_db)")
    cal.add_argument("--out", required=True, help="anchors JSON to write")
    cal.add_argument("--scenario", help="scenario JSON supplying anchor positions")
    cal.add_argument("--flc1", help="first-stage controller JSON (default built-in)")

    helps = {
        "simulate": "write scenario.json, samples.csv and calibration.csv",
        "localize": "write fixes.json for every dwell",
        "optimize": "tune controllers with PSO; write tuned controller JSON and trace CSV",
        "evaluate": "write stats.json, quantiles.csv and one CDF CSV per algorithm",
        "sweep": "write sweep.csv of mean error per anchor count",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out-dir", help="output directory (overrides output_dir)")
        sp.add_argument("--seed", type=int, help="random seed")
        sp.add_argument("--particles", type=int, help="PSO swarm size")
        sp.add_argument("--iterations", type=int, help="PSO iteration count")
        sp.add_argument("--anchors", type=int, help="anchor count (regenerates the layout)")
    return p


def _fail(exc: BaseException, code: int) -> int:
    kind = type(exc).__name__
    print(json.dumps({"error": kind, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "calibrate":
            files = cmd_calibrate(args)
            out_dir = Path(args.out).parent
        else:
            cfg = load_config(args)
            files = PIPELINE[args.command](cfg)
            out_dir = cfg.path(cfg.output_dir)
        for path in write_outputs(out_dir, files):
            print(path)
    except ConfigurationError as exc:
        return _fail(exc, EXIT_CONFIG)
    except (FuzzyLocError, OSError) as exc:
        return _fail(exc, EXIT_RUNTIME)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
