"""Command-line experiment runner emitting CSV.

Usage::

    gridsec <subcommand> [--config FILE] [--case PATH] [--rho X] [--snr-db X]
                         [--tau X] [--seed N] [--out DIR]

The config file is flat ``key = value`` text; command-line flags win.
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
import hashlib
import io
import math
from pathlib import Path
import sys
import warnings

import numpy as np

from . import detattack, detection, ergodic, game, stealth
from .estimation import build_model
from .grid import CaseError, build_jacobian, load_case
from .prior import sigma2_from_snr, toeplitz_prior

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2
SUBCOMMANDS = ("stealth-sweep", "pd-bound", "detattack", "brd", "ergodic", "jacobian")


class ConfigError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    case_path: str = "ieee30"
    rho: float = 0.1
    snr_db: float = 10.0
    tau: float = 2.0
    lambda_grid: str = "geom:1:1000:20"
    k_grid: str = "50,100,500,1000"
    mc_trials: int | None = None
    seed: int = 0
    output_dir: str | None = None
    workers: int = 1
    d0: float | None = None
    l0_prime: float | None = None
    partition: str | None = None
    budgets: str = "1"
    max_rounds: int = 1000
    ne_probes: int = 1000

    def validate(self):
        if not 0 <= self.rho < 1:
            raise ConfigError(f"rho must lie in [0, 1), got {self.rho}")
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.mc_trials is not None and self.mc_trials < 1:
            raise ConfigError("mc_trials must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    def digest(self):
        # output location and parallelism do not change results
        items = {k: v for k, v in asdict(self).items() if k not in ("output_dir", "workers")}
        text = "\n".join(f"{k}={items[k]!r}" for k in sorted(items))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _coerce(key, value):
    kind = _FIELDS[key].type
    if value in ("", "none", "None") and "None" in str(kind):
        return None
    try:
        if "int" in str(kind):
            return int(value)
        if "float" in str(kind):
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r}") from None
    return value


def parse_config_text(text):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def parse_grid(text, integer=False):
    """``"1,2,4"``, ``"geom:lo:hi:n"`` or ``"lin:lo:hi:n"``."""
    text = str(text).strip()
    try:
        if text.startswith(("geom:", "lin:")):
            kind, lo, hi, n = text.split(":")
            n = int(n)
            if n < 1:
                raise ConfigError(f"grid {text!r} is empty")
            maker = np.geomspace if kind == "geom" else np.linspace
            values = maker(float(lo), float(hi), n)
        else:
            values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"malformed grid {text!r}") from None
    if len(values) == 0:
        raise ConfigError("grid is empty")
    if integer:
        return [int(round(v)) for v in values]
    return [float(v) for v in values]


def parse_partition(text, budgets, m):
    """``"0-3;4,5,6-9"``: sensor index ranges per attacker, separated by ``;``."""
    if not text:
        raise ConfigError("brd needs a partition")
    sets = []
    try:
        for group in text.split(";"):
            idx = []
            for item in group.split(","):
                item = item.strip()
                if not item:
                    continue
                if "-" in item:
                    lo, hi = (int(v) for v in item.split("-"))
                    idx.extend(range(lo, hi + 1))
                else:
                    idx.append(int(item))
            sets.append(tuple(idx))
        energy = [float(v) for v in str(budgets).replace(",", ";").split(";") if v.strip()]
    except ValueError:
        raise ConfigError(f"malformed partition {text!r}") from None
    if len(energy) == 1:
        energy = energy * len(sets)
    try:
        part = game.AttackPartition(tuple(sets), tuple(energy))
        part.check_covers(m)
    except ValueError as exc:
        raise ConfigError(f"partition: {exc}") from None
    return part


def fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _model(cfg):
    try:
        case = load_case(cfg.case_path)
    except (OSError, CaseError) as exc:
        raise ConfigError(f"case {cfg.case_path!r}: {exc}") from None
    H = build_jacobian(case)
    prior = toeplitz_prior(H.shape[1], cfg.rho)
    return build_model(H, prior, sigma2_from_snr(H, prior, cfg.snr_db)), H


def _point_seed(cfg, index):
    return np.random.SeedSequence([cfg.seed, index])


def _map(cfg, fn, args):
    if cfg.workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            return list(pool.map(fn, args))
    return [fn(a) for a in args]


def _sweep_point(job):
    cfg, model, index, lam = job
    trials = cfg.mc_trials or 10**5
    attack = stealth.optimal_attack(model, lam)
    mi = stealth.mutual_information(model, attack.sigma_aa)
    weights = detection.stealth_weights(model, lam).weights
    thr = detection.stealth_threshold(weights, lam, cfg.tau)
    pd_cf = detection.imhof_sf(weights, thr).value
    pd_mc = detection.mc_sf(weights, thr, trials, seed=_point_seed(cfg, index)).value
    bound = stealth.detection_upper_bound(model, lam, cfg.tau)[1] if cfg.tau > 1 else 1.0
    return [lam, mi, pd_cf, pd_mc, bound]


def cmd_stealth_sweep(cfg):
    model, _ = _model(cfg)
    lams = parse_grid(cfg.lambda_grid)
    if min(lams) < 1:
        raise ConfigError("lambda grid values must be >= 1")
    rows = _map(cfg, _sweep_point, [(cfg, model, i, lam) for i, lam in enumerate(lams)])
    return ["lambda", "mi_nats", "pd_cf", "pd_mc", "pd_upper_bound"], rows, []


def _bound_point(job):
    cfg, model, index, lam = job
    trials = cfg.mc_trials or 10**5
    t, bound = stealth.detection_upper_bound(model, lam, cfg.tau)
    weights = detection.stealth_weights(model, lam).weights
    thr = detection.stealth_threshold(weights, lam, cfg.tau)
    mc = detection.mc_sf(weights, thr, trials, seed=_point_seed(cfg, index))
    return [lam, t, bound, mc.value, mc.error]


def cmd_pd_bound(cfg):
    if cfg.tau <= 1:
        raise ConfigError("pd-bound needs tau > 1")
    model, _ = _model(cfg)
    lams = parse_grid(cfg.lambda_grid)
    if min(lams) < 1:
        raise ConfigError("lambda grid values must be >= 1")
    rows = _map(cfg, _bound_point, [(cfg, model, i, lam) for i, lam in enumerate(lams)])
    return ["lambda", "t", "bound", "pd_mc", "pd_mc_se"], rows, []


def cmd_detattack(cfg):
    if (cfg.d0 is None) == (cfg.l0_prime is None):
        raise ConfigError("detattack needs exactly one of d0 or l0_prime")
    model, _ = _model(cfg)
    header = ["construction", "sign", "status", "pnd", "distortion"] + \
        [f"a{i}" for i in range(model.m)]
    if cfg.d0 is not None:
        if cfg.tau <= 1:
            name, vec = "min_detect_small_tau", detattack.min_detect_attack_small_tau(
                model, cfg.d0, cfg.tau)
        else:
            name, vec = "min_detect_large_tau", detattack.min_detect_attack_large_tau(
                model, cfg.d0, cfg.tau)
    else:
        name = "max_distortion"
        try:
            vec = detattack.max_distortion_attack(model, cfg.l0_prime, cfg.tau)
        except detattack.NoSolutionError:
            return header, [[name, "", "no solution exists", None, None] + [None] * model.m], []
    pairs = [("+", vec)] if not np.any(vec.a) else [("+", vec), ("-", -vec)]
    rows = [[name, s, "ok", v.info["pnd"], v.info["distortion"], *v.a] for s, v in pairs]
    return header, rows, []


def cmd_brd(cfg):
    model, _ = _model(cfg)
    part = parse_partition(cfg.partition, cfg.budgets, model.m)
    solver = game.SolverConfig(seed=cfg.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", game.SolverWarning)
        states, trace = game.run_brd(model, part, cfg.tau, max_rounds=cfg.max_rounds,
                                     solver_cfg=solver)
        report = game.verify_ne(model, part, states[-1], cfg.tau, n_probes=cfg.ne_probes,
                                seed=cfg.seed)
    stalled = any("still moving" in str(w.message) for w in caught)
    notes = [f"verify_ne passed={report.passed} max_gain={fmt(report.max_gain)} "
             f"rounds={states[-1].round} converged={not stalled}"]
    notes += [f"attacker {k} gain={fmt(g)} residual={fmt(r)}"
              for k, (g, r) in enumerate(zip(report.gains, report.residuals))]
    return ["round", "attacker", "phi", "norm_a"], [list(r) for r in trace], notes


def _ergodic_point(job):
    cfg, model, index, k = job
    trials = cfg.mc_trials or 1000
    report = ergodic.ergodic_upper_bound(model, k)
    mc = ergodic.ergodic_cost_mc(model, k, trials, seed=_point_seed(cfg, index))
    return [k, mc.mean, mc.se, report.bound_value]


def cmd_ergodic(cfg):
    model, _ = _model(cfg)
    ks = parse_grid(cfg.k_grid, integer=True)
    p = np.linalg.matrix_rank(model.signal_cov)
    if min(ks) - 1 < p:
        raise ConfigError(f"every k must exceed the signal rank {p}; got {min(ks)}")
    rows = _map(cfg, _ergodic_point, [(cfg, model, i, k) for i, k in enumerate(ks)])
    return ["k", "mc_cost", "mc_se", "upper_bound"], rows, []


def cmd_jacobian(cfg):
    try:
        H = build_jacobian(load_case(cfg.case_path))
    except (OSError, CaseError) as exc:
        raise ConfigError(f"case {cfg.case_path!r}: {exc}") from None
    header = ["row"] + [f"theta{b}" for b in H.state_labels]
    return header, [[lab, *row] for lab, row in zip(H.row_labels, H.matrix)], []


COMMANDS = {
    "stealth-sweep": cmd_stealth_sweep,
    "pd-bound": cmd_pd_bound,
    "detattack": cmd_detattack,
    "brd": cmd_brd,
    "ergodic": cmd_ergodic,
    "jacobian": cmd_jacobian,
}


def render_csv(command, cfg, header, rows, notes=()):
    buf = io.StringIO()
    buf.write(f"# gridsec {command} config_hash={cfg.digest()} seed={cfg.seed}\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    for note in notes:
        buf.write(f"# {note}\n")
    return buf.getvalue()


def run(command, cfg):
    """Run one subcommand and return the CSV text."""
    cfg.validate()
    with np.errstate(invalid="raise", divide="raise", over="raise"):
        header, rows, notes = COMMANDS[command](cfg)
    for row in rows:
        for v in row:
            if isinstance(v, (float, np.floating)) and math.isnan(v):
                raise NumericalFailure(f"NaN in {command} output")
    return render_csv(command, cfg, header, rows, notes)


def build_parser():
    parser = argparse.ArgumentParser(prog="gridsec", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="key = value file")
    parser.add_argument("--case", dest="case_path", help="bundled case name or case file")
    parser.add_argument("--rho", type=float)
    parser.add_argument("--snr-db", dest="snr_db", type=float)
    parser.add_argument("--tau", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", dest="output_dir", help="directory for <subcommand>.csv")
    return parser


def load_config(args):
    values = {}
    if args.config:
        try:
            values.update(parse_config_text(Path(args.config).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    for key in ("case_path", "rho", "snr_db", "tau", "seed", "output_dir"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    return ExperimentConfig(**values)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        text = run(args.command, cfg)
    except ConfigError as exc:
        print(f"gridsec: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"gridsec: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"gridsec: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / f"{args.command}.csv").write_text(text)
        except OSError as exc:
            print(f"gridsec: cannot write output: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
