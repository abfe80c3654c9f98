"""Batch experiment driver.

Verbs
-----
run        simulate one scenario for a list of seeds and write trace/report CSVs
calibrate  estimate the NLL threshold for the configured detector, write tau.csv
demo       the four-run vehicle experiment (wind model x attack)

Settings come from built-in scenario defaults, then an optional INI file
(``--config``), then command-line flags.  The effective configuration is
written to ``<out>/config.ini`` and can be fed back with ``--config``.
"""

import argparse
import configparser
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import scenarios
from .attack import AttackSpec
from .detect import build_report, calibrate_threshold, default_window
from .errors import ConfigError, WatermarkError
from .model import PlantModel
from .simulate import SimulationConfig, run_simulation

log = logging.getLogger("dynwatermark")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

SCENARIOS = ("double-integrator", "vehicle", "vehicle-wind", "custom")
ATTACKS = ("none", "replay", "vehicle-preset", "custom")
SUMMARY_COLUMNS = ["seed", "final_d1", "final_d2", "reject_rate", "tau", "ell", "N"]
TAU_COLUMNS = ["ell", "alpha_fa", "runs", "tau", "seed"]


@dataclass
class RunConfig:
    scenario: str = "vehicle"
    # inline plant, only for scenario "custom"
    a: str = None
    b: str = None
    c: str = None
    sigma_w: str = None
    sigma_z: str = None
    world_wind: bool = True
    q_scale: float = None
    r_scale: float = None
    w_scale: float = None
    z_scale: float = None
    watermark_variance: str = None
    attack: str = "none"
    attack_alpha: float = None
    attack_sigma_o: float = None
    attack_sigma_s: float = None
    detector_wind: bool = False
    horizon: int = 20_000
    seeds: list = field(default_factory=lambda: [0])
    ell: int = None
    alpha_fa: float = 0.05
    calibration_runs: int = 500
    calibration_seed: int = 2017
    output_dir: str = "out"
    traces: bool = True

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if self.attack not in ATTACKS:
            raise ConfigError(f"unknown attack {self.attack!r}; choose from {', '.join(ATTACKS)}")
        if self.scenario == "custom" and None in (self.a, self.b, self.c):
            raise ConfigError("scenario 'custom' needs matrices a, b and c")
        if self.attack == "vehicle-preset" and not self.scenario.startswith("vehicle"):
            raise ConfigError("attack 'vehicle-preset' needs a vehicle scenario")
        if self.attack == "custom" and self.attack_alpha is None:
            raise ConfigError("attack 'custom' needs attack_alpha")
        if not 0.0 < self.alpha_fa < 1.0:
            raise ConfigError(f"alpha_fa must lie in (0, 1), got {self.alpha_fa}")
        if self.horizon < 1 or not self.seeds:
            raise ConfigError("horizon must be positive and at least one seed given")
        if self.calibration_runs < 100:
            raise ConfigError("calibration_runs must be at least 100")
        if self.ell is not None and self.ell < 1:
            raise ConfigError("ell must be positive")


# INI layout: section -> [(key, RunConfig field)]
_SECTIONS = {
    "scenario": [("name", "scenario"), ("a", "a"), ("b", "b"), ("c", "c"),
                 ("sigma_w", "sigma_w"), ("sigma_z", "sigma_z"), ("world_wind", "world_wind")],
    "controller": [("q_scale", "q_scale"), ("r_scale", "r_scale"),
                   ("w_scale", "w_scale"), ("z_scale", "z_scale")],
    "watermark": [("variance", "watermark_variance")],
    "attack": [("preset", "attack"), ("alpha", "attack_alpha"),
               ("sigma_o", "attack_sigma_o"), ("sigma_s", "attack_sigma_s")],
    "detector": [("wind", "detector_wind"), ("ell", "ell"), ("alpha_fa", "alpha_fa"),
                 ("calibration_runs", "calibration_runs"), ("calibration_seed", "calibration_seed")],
    "sim": [("horizon", "horizon"), ("seeds", "seeds"), ("traces", "traces")],
}
_BOOL_FIELDS = {"world_wind", "detector_wind", "traces"}
_INT_FIELDS = {"horizon", "ell", "calibration_runs", "calibration_seed"}
_FLOAT_FIELDS = {"q_scale", "r_scale", "w_scale", "z_scale", "attack_alpha",
                 "attack_sigma_o", "attack_sigma_s", "alpha_fa"}


def _parse_seeds(text):
    try:
        return [int(s) for s in str(text).replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"bad seed list {text!r}") from exc


def _coerce(name, raw):
    if raw is None or raw == "":
        return None
    try:
        if name in _BOOL_FIELDS:
            value = str(raw).strip().lower()
            if value not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return value in ("true", "1", "yes")
        if name in _INT_FIELDS:
            return int(raw)
        if name in _FLOAT_FIELDS:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    if name == "seeds":
        return _parse_seeds(raw)
    return str(raw)


def load_config_file(path, base=None):
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path}")
    cfg = base if base is not None else RunConfig()
    updates = {}
    for section, keys in _SECTIONS.items():
        if not parser.has_section(section):
            continue
        known = {k for k, _ in keys}
        unknown = set(parser[section]) - known
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {', '.join(sorted(unknown))}")
        for key, attr in keys:
            if key in parser[section]:
                updates[attr] = _coerce(attr, parser[section][key])
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
    return replace(cfg, **updates)


def dump_config(cfg, path):
    parser = configparser.ConfigParser()
    for section, keys in _SECTIONS.items():
        parser[section] = {}
        for key, attr in keys:
            value = getattr(cfg, attr)
            if value is None:
                continue
            if attr == "seeds":
                value = ",".join(str(s) for s in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            parser[section][key] = str(value)
    with open(path, "w", newline="") as fh:
        parser.write(fh)


def parse_matrix(text):
    """``"1 1; 0 1"`` -> 2x2 array (rows separated by ``;``)."""
    try:
        rows = [[float(tok) for tok in row.replace(",", " ").split()] for row in str(text).split(";")]
        return np.array(rows, dtype=float)
    except ValueError as exc:
        raise ConfigError(f"cannot parse matrix {text!r}") from exc


def _cov(text, dim):
    if text is None:
        return None
    m = parse_matrix(text)
    return float(m[0, 0]) * np.eye(dim) if m.size == 1 else m


@dataclass(frozen=True)
class Setup:
    """Everything a run needs once the configuration is resolved."""

    world: PlantModel
    detector: object
    attack: object
    attacker_a: object
    attacker_c: object
    ell: int


def _design_defaults(cfg):
    base = scenarios.DOUBLE_INTEGRATOR_DESIGN if cfg.scenario == "double-integrator" else scenarios.VEHICLE_DESIGN
    overrides = {k: getattr(cfg, k) for k in ("q_scale", "r_scale", "w_scale", "z_scale") if getattr(cfg, k) is not None}
    return replace(base, **overrides)


def resolve(cfg):
    """Fill scenario defaults into `cfg` and build models; returns (cfg, Setup)."""
    cfg.validate()
    defaults = _design_defaults(cfg)
    cfg = replace(
        cfg,
        q_scale=defaults.q_scale, r_scale=defaults.r_scale,
        w_scale=defaults.w_scale, z_scale=defaults.z_scale,
        detector_wind=cfg.detector_wind or cfg.scenario == "vehicle-wind",
    )
    if cfg.scenario == "double-integrator":
        kwargs = {}
        if cfg.sigma_w is not None:
            kwargs["sigma_w"] = _cov(cfg.sigma_w, 2)
        if cfg.sigma_z is not None:
            kwargs["sigma_z"] = _cov(cfg.sigma_z, 1)
        world = det_plant = scenarios.build_double_integrator(**kwargs)
    elif cfg.scenario == "custom":
        a, b, c = parse_matrix(cfg.a), parse_matrix(cfg.b), parse_matrix(cfg.c)
        sw = _cov(cfg.sigma_w, a.shape[0])
        sz = _cov(cfg.sigma_z, c.shape[0])
        world = det_plant = PlantModel(
            a, b, c,
            np.eye(a.shape[0]) if sw is None else sw,
            np.eye(c.shape[0]) if sz is None else sz,
        )
    else:
        world = scenarios.build_vehicle(include_wind=cfg.world_wind)
        det_plant = scenarios.build_vehicle(include_wind=cfg.detector_wind)

    if cfg.watermark_variance is None:
        cfg = replace(cfg, watermark_variance=repr(float(defaults.sigma_e)))
    sigma_e = _cov(cfg.watermark_variance, det_plant.q)
    detector = defaults.design(det_plant, sigma_e)

    attacker_a = attacker_c = None
    if cfg.attack == "none":
        attack = None
    elif cfg.attack == "replay":
        attack = scenarios.replay_attack_preset(det_plant)
    elif cfg.attack == "vehicle-preset":
        attack = scenarios.vehicle_attack_preset()
        attacker_a, attacker_c = scenarios.vehicle_attacker_dynamics(detector)
    else:
        attack = AttackSpec.isotropic(
            cfg.attack_alpha, det_plant.p, det_plant.m,
            cfg.attack_sigma_o or 0.0, cfg.attack_sigma_s or 0.0,
        )
    ell = cfg.ell if cfg.ell is not None else default_window(detector)
    cfg = replace(cfg, ell=ell)
    if cfg.horizon < ell + detector.lag:
        raise ConfigError(f"horizon {cfg.horizon} shorter than ell + k' + 1 = {ell + detector.lag}")
    return cfg, Setup(world, detector, attack, attacker_a, attacker_c, ell)


def _workers(n_jobs):
    cap = os.environ.get("WMS_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            raise ConfigError(f"WMS_THREADS must be an integer, got {cap!r}") from None
    return max(1, min(limit, n_jobs))


def _map(func, jobs):
    n = _workers(len(jobs))
    if n == 1:
        return [func(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(func, jobs))


def _fmt(x):
    return repr(float(x))


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _read_cached_tau(out, cfg):
    path = Path(out) / "tau.csv"
    if not path.exists():
        return None
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                match = (
                    int(row["ell"]) == cfg.ell
                    and float(row["alpha_fa"]) == cfg.alpha_fa
                    and int(row["runs"]) == cfg.calibration_runs
                    and int(row["seed"]) == cfg.calibration_seed
                )
            except (KeyError, ValueError):
                continue
            if match:
                return float(row["tau"])
    return None


def _simulate_one(job):
    """Worker: simulate one seed, write its CSVs, return the summary row."""
    sim_config, tau, ell, alpha_fa, out, stem, traces = job
    trace = run_simulation(sim_config)
    report = build_report(trace, sim_config.detector, tau, ell=ell, alpha_fa=alpha_fa)
    if traces:
        trace.to_csv(Path(out) / f"trace_{stem}.csv")
    report.to_csv(Path(out) / f"report_{stem}.csv")
    return [
        sim_config.seed, _fmt(report.d1[-1]), _fmt(report.d2[-1]),
        _fmt(report.reject_rate), _fmt(tau), ell, len(trace),
    ]


def cmd_calibrate(cfg):
    cfg, setup = resolve(cfg)
    if cfg.attack != "none":
        raise ConfigError("calibrate runs without an attack; drop --attack")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    tau = calibrate_threshold(setup.detector, setup.ell, cfg.alpha_fa, cfg.calibration_runs, cfg.calibration_seed)
    _write_rows(out / "tau.csv", TAU_COLUMNS,
                [[setup.ell, _fmt(cfg.alpha_fa), cfg.calibration_runs, _fmt(tau), cfg.calibration_seed]])
    dump_config(cfg, out / "config.ini")
    print(f"tau={tau!r} ell={setup.ell} alpha_fa={cfg.alpha_fa} runs={cfg.calibration_runs}")
    return tau


def cmd_run(cfg):
    cfg, setup = resolve(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    tau = _read_cached_tau(out, cfg)
    if tau is None:
        log.info("calibrating threshold with %d windows", cfg.calibration_runs)
        tau = calibrate_threshold(setup.detector, setup.ell, cfg.alpha_fa, cfg.calibration_runs, cfg.calibration_seed)
        _write_rows(out / "tau.csv", TAU_COLUMNS,
                    [[setup.ell, _fmt(cfg.alpha_fa), cfg.calibration_runs, _fmt(tau), cfg.calibration_seed]])
    else:
        log.info("reusing threshold from tau.csv")
    jobs = []
    for seed in cfg.seeds:
        sim = SimulationConfig(
            world=setup.world, detector=setup.detector, attack=setup.attack,
            horizon=cfg.horizon, seed=seed,
            attacker_a=setup.attacker_a, attacker_c=setup.attacker_c,
        )
        jobs.append((sim, tau, setup.ell, cfg.alpha_fa, out, str(seed), cfg.traces))
    rows = _map(_simulate_one, jobs)
    _write_rows(out / "summary.csv", SUMMARY_COLUMNS, rows)
    dump_config(cfg, out / "config.ini")
    _print_table(SUMMARY_COLUMNS, rows)
    return rows


def cmd_demo(cfg, name="vehicle"):
    if name != "vehicle":
        raise ConfigError(f"no demo named {name!r}; only 'vehicle' exists")
    cfg = replace(cfg, scenario="vehicle", attack="none", world_wind=True)
    cfg, _ = resolve(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    design = _design_defaults(cfg)
    design = replace(design, sigma_e=_cov(cfg.watermark_variance, 2))

    taus = {}
    jobs, cases = [], []
    for seed in cfg.seeds:
        for sim in scenarios.experiment_matrix(seed=seed, horizon=cfg.horizon, design=design):
            model_name = sim.label.split("/")[0]
            if model_name not in taus:
                ell = cfg.ell
                taus[model_name] = calibrate_threshold(
                    sim.detector, ell, cfg.alpha_fa, cfg.calibration_runs, cfg.calibration_seed
                )
            stem = f"{sim.label.replace('/', '_')}_{seed}"
            jobs.append((sim, taus[model_name], cfg.ell, cfg.alpha_fa, out, stem, cfg.traces))
            cases.append(sim.label)
    rows = _map(_simulate_one, jobs)
    order = sorted(range(len(rows)), key=lambda i: (cases[i], rows[i][0]))
    table = [[cases[i], *rows[i]] for i in order]
    header = ["case", *SUMMARY_COLUMNS]
    _write_rows(out / "summary.csv", header, table)
    dump_config(cfg, out / "config.ini")

    grouped = {}
    for case, row in zip(cases, rows):
        grouped.setdefault(case, []).append(float(row[3]))
    print("case                      mean_reject_rate")
    for case in sorted(grouped):
        print(f"{case:<26}{np.mean(grouped[case]):.3f}")
    return table


def _print_table(header, rows):
    print(",".join(header))
    for row in rows:
        print(",".join(str(x) for x in row))


def build_parser():
    parser = argparse.ArgumentParser(prog="dynwatermark", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--config", help="INI file with [scenario], [controller], ... sections")
        p.add_argument("--scenario", choices=SCENARIOS)
        p.add_argument("--detector-wind", action="store_true", default=None,
                       help="use the wind-augmented detector model")
        p.add_argument("--calm-world", action="store_true", default=None,
                       help="vehicle world without wind")
        p.add_argument("--watermark-variance")
        p.add_argument("--q-scale", type=float)
        p.add_argument("--r-scale", type=float)
        p.add_argument("--horizon", type=int)
        p.add_argument("--seeds", type=_parse_seeds, help="comma-separated list")
        p.add_argument("--ell", type=int, help="window length (default 20*(m+q))")
        p.add_argument("--alpha-fa", type=float, help="target false-alarm rate")
        p.add_argument("--calibration-runs", type=int)
        p.add_argument("--calibration-seed", type=int)
        p.add_argument("--out", dest="output_dir")
        p.add_argument("--no-traces", dest="traces", action="store_false", default=None)

    run = sub.add_parser("run", help="simulate and detect")
    common(run)
    run.add_argument("--attack", choices=ATTACKS)
    run.add_argument("--attack-alpha", type=float)
    run.add_argument("--attack-sigma-o", type=float)
    run.add_argument("--attack-sigma-s", type=float)

    cal = sub.add_parser("calibrate", help="estimate the NLL threshold")
    common(cal)

    demo = sub.add_parser("demo", help="four-run vehicle experiment")
    demo.add_argument("name", choices=["vehicle"])
    common(demo)
    demo.add_argument("--traces", dest="traces", action="store_true", default=None)
    return parser


def config_from_args(args):
    cfg = RunConfig()
    if args.verb == "demo":
        cfg = replace(cfg, seeds=list(range(10)), traces=False)
    if args.config:
        cfg = load_config_file(args.config, cfg)
    updates = {}
    names = {f.name for f in fields(RunConfig)}
    for key, value in vars(args).items():
        if value is None or key not in names:
            continue
        updates[key] = value
    if getattr(args, "calm_world", None):
        updates["world_wind"] = False
    return replace(cfg, **updates)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = config_from_args(args)
        if args.verb == "run":
            cmd_run(cfg)
        elif args.verb == "calibrate":
            cmd_calibrate(cfg)
        else:
            cmd_demo(cfg, args.name)
    except ConfigError as exc:
        print(f"ConfigError: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except WatermarkError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
