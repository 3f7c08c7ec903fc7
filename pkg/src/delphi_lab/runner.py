"""Build and run a configured experiment; write metrics.csv and summary.json."""
from __future__ import annotations

import csv
import io
import itertools
import json
import subprocess
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, metrics, nn
from .attack.hook import DelphiAttack
from .config import ConfigValidationError, ExperimentConfig, to_dict, with_overrides
from .data import Dataset, generate_blobs, partition_iid, partition_imbalanced
from .federated import Aggregator, ClientState, FLState, RoundRecord, run_round
from .metrics import CSV_COLUMNS, RoundMetrics

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


@dataclass
class Experiment:
    config: ExperimentConfig
    state: FLState
    testset: Dataset
    aggregation: Aggregator
    attack: DelphiAttack | None


def build(cfg: ExperimentConfig) -> Experiment:
    d, p, t = cfg.dataset, cfg.partition, cfg.training
    train, test = generate_blobs(d.num_classes, d.dim, d.n_per_class, d.spread, cfg.seed,
                                 center_scale=d.center_scale, n_test_per_class=d.n_test_per_class)
    split = partition_iid if p.scheme == "iid" else partition_imbalanced
    parts = split(train, p.clients, cfg.seed + 1, test=test)
    # attackers take the last client slots
    clients = [
        ClientState(k, part, is_malicious=k >= p.clients - p.attackers,
                    local_epochs=t.local_epochs, lr=t.lr, batch_size=t.batch_size)
        for k, part in enumerate(parts)
    ]
    model = nn.init_mlp(d.dim, cfg.model.hidden, d.num_classes, np.random.default_rng(cfg.seed + 2))
    state = FLState(model, clients, seed=cfg.seed, workers=cfg.workers)
    agg = Aggregator(cfg.aggregation.method, cfg.krum_f, cfg.aggregation.multi_m)
    attack = None
    if cfg.attack.method != "none":
        attack = DelphiAttack(cfg.attack.method, cfg.attack, seed=cfg.seed)
    return Experiment(cfg, state, test, agg, attack)


def round_metrics(exp: Experiment, record: RoundRecord) -> RoundMetrics:
    g = record.global_model
    c = metrics.mean_predictive_confidence(g, exp.testset)
    clients = exp.state.clients
    bad = [i for i, cl in enumerate(clients) if cl.is_malicious]
    m = RoundMetrics(
        record.round,
        metrics.accuracy(g, exp.testset),
        c,
        metrics.mean_entropy(g, exp.testset),
        per_attacker_delta_w=[record.delta_w[clients[i].id] for i in bad],
    )
    if exp.attack is None:
        return m
    n_att = len(bad)
    n_benign = len(clients) - n_att
    m.rho = metrics.attack_effectiveness(g, [record.uploads[i] for i in bad], c)
    deltas = [record.uploads[i].flatten() - record.benign_counterfactuals[i].flatten() for i in bad]
    m.epsilon_measured = metrics.measured_epsilon(deltas, n_benign, n_att)
    eps = exp.config.attack.epsilon if exp.config.attack.epsilon is not None else m.epsilon_measured
    m.rho_bound = metrics.effectiveness_bound(c, eps, n_benign, n_att)
    return m


def run_experiment(cfg: ExperimentConfig, on_round=None,
                   experiment: Experiment | None = None) -> list[RoundRecord]:
    """Run every round; each record carries its :class:`RoundMetrics`.

    Pass a prebuilt ``experiment`` to keep a handle on its state, e.g. the
    attack log.
    """
    exp = experiment if experiment is not None else build(cfg)
    records = []
    for _ in range(cfg.rounds):
        with np.errstate(over="raise", invalid="raise"):
            rec = run_round(exp.state, exp.aggregation, exp.attack)
        rec.metrics = round_metrics(exp, rec)
        records.append(rec)
        if on_round is not None:
            on_round(rec)
    return records


def _fmt(v):
    return str(v) if isinstance(v, (int, np.integer)) else repr(float(v))


def metrics_csv(rows: list[RoundMetrics], extra: dict | None = None) -> str:
    """CSV text with the fixed header; ``extra`` columns are prepended."""
    extra = extra or {}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([*extra, *CSV_COLUMNS])
    for m in rows:
        row = m.as_row()
        writer.writerow([*map(str, extra.values()), *(_fmt(row[k]) for k in CSV_COLUMNS)])
    return buf.getvalue()


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            {k: (int(v) if k == "round" else float(v)) if k in CSV_COLUMNS else v
             for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]


def version_string() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                             text=True, cwd=Path(__file__).parent, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def run(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> int:
    """Run ``cfg`` and write its outputs. Returns a process exit code."""
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    start = time.perf_counter()
    try:
        records = run_experiment(cfg)
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigValidationError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    wall = time.perf_counter() - start
    rows = [r.metrics for r in records]
    final = rows[-1].as_row()
    summary = {
        "final": final,
        "rounds_completed": len(rows),
        "config": to_dict(cfg),
        "wall_time_s": wall,
        "version": version_string(),
    }
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(metrics_csv(rows), encoding="utf-8", newline="\n")
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        print(f"cannot write results to {out}: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def expand_axes(cfg: ExperimentConfig, axes: dict[str, list]) -> list[tuple[dict, ExperimentConfig]]:
    """Cartesian product of sweep values, each applied as dotted-key overrides."""
    keys = list(axes)
    cells = []
    for values in itertools.product(*(axes[k] for k in keys)):
        point = dict(zip(keys, values))
        cells.append((point, with_overrides(cfg, point)))
    return cells


def _flat(d, prefix=""):
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            out.update(_flat(v, f"{prefix}{k}."))
        else:
            out[prefix + k] = v
    return out


def emit_comparison(configs: list[ExperimentConfig], out: str | Path,
                    axes: list[str] | None = None) -> Path:
    """Run each config and write one long-format CSV keyed by the sweep axes.

    When ``axes`` is not given it is inferred as the keys whose values differ
    between configs. Listing axes explicitly makes any other difference an
    error.
    """
    if not configs:
        raise ConfigValidationError("configs", "nothing to compare")
    flats = [_flat(to_dict(c)) for c in configs]
    keys = sorted(set().union(*flats))
    varying = [k for k in keys if len({repr(f.get(k)) for f in flats}) > 1]
    if axes is None:
        axes = varying
    else:
        stray = [k for k in varying if k not in axes]
        if stray:
            raise ConfigValidationError(stray[0], "differs between configs but is not a sweep axis")
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    chunks = []
    for i, (cfg, flat) in enumerate(zip(configs, flats)):
        rows = [r.metrics for r in run_experiment(cfg)]
        text = metrics_csv(rows, {a: flat.get(a, "") for a in axes})
        chunks.append(text if i == 0 else text.split("\n", 1)[1])
    out.write_text("".join(chunks), encoding="utf-8", newline="\n")
    return out
