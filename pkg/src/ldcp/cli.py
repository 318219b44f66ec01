"""Command-line driver: train, predict, verify, baseline, report.

All artifacts are JSON files in the run's output directory and carry the
hash of the run configuration that produced them. Exit codes: 0 success,
1 some neighborhood is not LDCP, 2 usage or configuration error, 3
internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import EncodedDataset, FeatureSchema, load_csv, synth_dataset
from .hypernet import HyperNetConfig, IntervalHyperNetwork, interval_abstraction, pred_hyper_net
from .mlp import LooTrainer, MlpArchitecture, MlpNetwork, TrainConfig, accuracy, classify
from .verify import (Decision, Neighborhood, coverage_metrics, confusion, naive_ldcp,
                     sample_neighborhoods, sphynx_verify)

logger = logging.getLogger("ldcp")

EXIT_OK, EXIT_NOT_LDCP, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3

NETWORK_FILE = "network.json"
HYPERNET_FILE = "hypernet.json"
PREDICT_LOG_FILE = "predict_log.json"
RESULTS_FILE = "results.json"
BASELINE_FILE = "baseline.json"
REPORT_FILE = "report.json"


class UsageError(Exception):
    """Bad configuration or input files (exit code 2)."""


@dataclass
class RunConfig:
    """Everything needed to reproduce a run.

    ``dataset`` is either ``{"csv": path, "schema": path}`` or
    ``{"synth": {"n": .., "d": .., "seed": .., "noise": .., "margin": ..}}``.
    Each neighborhood entry is a dict with ``kind`` in membership / linf /
    sensitivity and a ``center`` vector or a data-row ``index``; ``label``
    is optional. The extra kind ``sample`` expands into ``count`` random
    neighborhoods (see ``sample_neighborhoods``).
    """

    dataset: dict = field(default_factory=lambda: {"synth": {"n": 200, "d": 5, "seed": 0}})
    hidden: tuple[int, ...] = (5, 5)
    train: TrainConfig = field(default_factory=TrainConfig)
    hypernet: HyperNetConfig = field(default_factory=HyperNetConfig)
    neighborhoods: list = field(default_factory=list)
    output_dir: str = "run"
    workers: int = 1
    node_budget: int = 10_000

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        if isinstance(self.hypernet, dict):
            self.hypernet = HyperNetConfig(**self.hypernet)
        if not ("csv" in self.dataset or "synth" in self.dataset):
            raise UsageError("dataset needs either a 'csv' path (with 'schema') or a 'synth' spec")
        if "csv" in self.dataset and "schema" not in self.dataset:
            raise UsageError("a csv dataset needs a 'schema' path")
        if self.workers < 1 or self.node_budget < 1:
            raise UsageError("workers and node_budget must be positive")

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "hidden": list(self.hidden),
            "train": dataclasses.asdict(self.train),
            "hypernet": dataclasses.asdict(self.hypernet),
            "neighborhoods": self.neighborhoods,
            "output_dir": self.output_dir,
            "workers": self.workers,
            "node_budget": self.node_budget,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid config: {exc}") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            return cls.from_dict(json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc})") from None

    def digest(self) -> str:
        """Hash of everything that affects results (output location and parallelism excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    @property
    def out(self) -> Path:
        return Path(self.output_dir)


# -- loading helpers ---------------------------------------------------------

def load_dataset(cfg: RunConfig) -> tuple[EncodedDataset, FeatureSchema | None]:
    ds = cfg.dataset
    if "synth" in ds:
        spec = dict(ds["synth"])
        return synth_dataset(int(spec.pop("n")), int(spec.pop("d")), **spec), None
    schema_path, csv_path = Path(ds["schema"]), Path(ds["csv"])
    if not schema_path.is_file():
        raise UsageError(f"schema file not found: {schema_path}")
    if not csv_path.is_file():
        raise UsageError(f"dataset file not found: {csv_path}")
    schema = FeatureSchema.load(schema_path)
    try:
        return load_csv(csv_path, schema), schema
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def architecture(cfg: RunConfig, data: EncodedDataset) -> MlpArchitecture:
    return MlpArchitecture.from_hidden(data.input_dim, cfg.hidden)


def _read_json(path: Path, what: str) -> dict:
    if not path.is_file():
        raise UsageError(f"{what} file not found: {path}")
    return json.loads(path.read_text())


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=1) + "\n")


def load_network(path: Path) -> MlpNetwork:
    return MlpNetwork.from_dict(_read_json(path, "network"))


def build_neighborhoods(cfg: RunConfig, data: EncodedDataset, schema: FeatureSchema | None,
                        net: MlpNetwork | None) -> list[Neighborhood]:
    slices = schema.feature_slices() if schema else {}

    def resolve_features(spec) -> tuple[int, ...]:
        if "feature" in spec:
            name = spec["feature"]
            if isinstance(name, str):
                if name not in slices:
                    raise UsageError(f"unknown sensitive feature {name!r}")
                return slices[name]
            return (int(name),)
        return tuple(int(i) for i in spec.get("features", ()))

    out: list[Neighborhood] = []
    for i, spec in enumerate(cfg.neighborhoods):
        kind = spec.get("kind")
        if kind == "sample":
            if net is None:
                raise UsageError("sampled neighborhoods need the trained network for their labels")
            out.extend(sample_neighborhoods(
                net, data.inputs, int(spec.get("count", 20)), seed=int(spec.get("seed", 0)),
                epsilon=float(spec.get("epsilon", 0.05)), features=resolve_features(spec) or (0,),
                kinds=tuple(spec.get("kinds", ("membership", "linf", "sensitivity")))))
            continue
        if "center" in spec:
            x = np.asarray(spec["center"], dtype=np.float64)
        elif "index" in spec:
            idx = int(spec["index"])
            if not 0 <= idx < len(data):
                raise UsageError(f"neighborhood {i}: row index {idx} out of range")
            x = data.inputs[idx]
        else:
            raise UsageError(f"neighborhood {i}: needs 'center' or 'index'")
        if "label" in spec:
            y = int(spec["label"])
        elif net is not None:
            y = classify(net, x)
        else:
            raise UsageError(f"neighborhood {i}: no label given and no network to derive it from")
        try:
            out.append(Neighborhood(kind, x, y, float(spec.get("epsilon", 0.0)), resolve_features(spec)))
        except (ValueError, IndexError) as exc:
            raise UsageError(f"neighborhood {i}: {exc}") from None
    return out


def _check_hash(payload: dict, cfg: RunConfig, what: str) -> None:
    h = payload.get("config_hash")
    if h is not None and h != cfg.digest():
        logger.warning("%s was produced by a different configuration (%s != %s)", what, h, cfg.digest())


# -- commands ----------------------------------------------------------------

def cmd_train(cfg: RunConfig) -> int:
    data, _ = load_dataset(cfg)
    arch = architecture(cfg, data)
    t0 = time.perf_counter()
    net = LooTrainer(arch, data, cfg.train)()
    acc = accuracy(net, data.inputs, data.labels)
    logger.info("trained %s on %d entries in %.2fs, accuracy %.4f", arch, len(data), time.perf_counter() - t0, acc)
    payload = net.to_dict()
    payload.update(config_hash=cfg.digest(), manifest={"dataset": data.provenance,
                                                       "dataset_digest": data.digest(),
                                                       "train_accuracy": acc})
    _write_json(cfg.out / NETWORK_FILE, payload)
    return EXIT_OK


def cmd_predict(cfg: RunConfig, network_path: Path | None = None) -> int:
    data, _ = load_dataset(cfg)
    if cfg.hypernet.k > len(data):
        raise UsageError(f"k={cfg.hypernet.k} exceeds the dataset size {len(data)}")
    payload = _read_json(network_path or cfg.out / NETWORK_FILE, "network")
    _check_hash(payload, cfg, "network")
    net = MlpNetwork.from_dict(payload)
    arch = architecture(cfg, data)
    if net.architecture != arch:
        raise UsageError(f"network architecture {net.architecture.layer_sizes} does not match config {arch.layer_sizes}")
    trainer = LooTrainer(arch, data, cfg.train)
    t0 = time.perf_counter()
    res = pred_hyper_net(net, data, trainer, cfg.hypernet,
                         train_many=lambda js: trainer.train_many(js, workers=cfg.workers))
    elapsed = time.perf_counter() - t0
    h = res.hypernet
    h.manifest["truncated"] = res.truncated
    h.save(cfg.out / HYPERNET_FILE, config_hash=cfg.digest())
    _write_json(cfg.out / PREDICT_LOG_FILE, {"config_hash": cfg.digest(), "K": res.K, "truncated": res.truncated,
                                             "converged_fraction": res.history, "wall_time_s": elapsed})
    logger.info("hyper-network from K=%d networks (%s) in %.2fs", res.K,
                "truncated" if res.truncated else "converged", elapsed)
    return EXIT_OK


def _load_hypernet(cfg: RunConfig, arch: MlpArchitecture, path: Path | None) -> IntervalHyperNetwork:
    payload = _read_json(path or cfg.out / HYPERNET_FILE, "hyper-network")
    _check_hash(payload, cfg, "hyper-network")
    h = IntervalHyperNetwork.from_dict(payload)
    if h.architecture != arch:
        raise UsageError(f"hyper-network architecture {h.architecture.layer_sizes} does not match "
                         f"the configured architecture {arch.layer_sizes}")
    return h


def _maybe_network(cfg: RunConfig, path: Path | None) -> MlpNetwork | None:
    p = path or cfg.out / NETWORK_FILE
    return load_network(p) if p.is_file() else None


def cmd_verify(cfg: RunConfig, hypernet_path: Path | None = None, network_path: Path | None = None) -> int:
    data, schema = load_dataset(cfg)
    arch = architecture(cfg, data)
    h = _load_hypernet(cfg, arch, hypernet_path)
    nbhs = build_neighborhoods(cfg, data, schema, _maybe_network(cfg, network_path))
    results = []
    any_not = False
    for i, nbh in enumerate(nbhs):
        entry = {"neighborhood": nbh.to_dict()}
        try:
            v = sphynx_verify(h, nbh, cfg.node_budget)
            entry.update(v.to_dict())
            any_not |= not v.ldcp
        except Exception as exc:  # recorded, the run goes on
            logger.error("neighborhood %d failed: %s", i, exc)
            entry.update(verdict="Error", error=str(exc))
            any_not = True
        results.append(entry)
    _write_json(cfg.out / RESULTS_FILE, results)
    print(summary_table(results))
    return EXIT_NOT_LDCP if any_not else EXIT_OK


def summary_table(results: list[dict]) -> str:
    lines = [f"{'#':>3}  {'kind':<12} {'label':>5}  {'verdict':<8} {'bound':>12} {'ms':>9}"]
    for i, r in enumerate(results):
        n = r["neighborhood"]
        bound = r.get("objective_bound", float("nan"))
        lines.append(f"{i:>3}  {n['kind']:<12} {n['label']:>5}  {r['verdict']:<8} {bound:>12.5g} "
                     f"{r.get('wall_time_ms', float('nan')):>9.2f}")
    n_ok = sum(r["verdict"] == Decision.LDCP.value for r in results)
    lines.append(f"{n_ok}/{len(results)} neighborhoods LDCP")
    return "\n".join(lines)


def cmd_baseline(cfg: RunConfig, network_path: Path | None = None, hypernet_path: Path | None = None,
                 results_path: Path | None = None) -> int:
    data, schema = load_dataset(cfg)
    arch = architecture(cfg, data)
    net = load_network(network_path or cfg.out / NETWORK_FILE)
    trainer = LooTrainer(arch, data, cfg.train)
    nbhs = build_neighborhoods(cfg, data, schema, net)

    t0 = time.perf_counter()
    loo = trainer.train_many(range(len(data)), workers=cfg.workers)
    train_time = time.perf_counter() - t0
    naive = [naive_ldcp(net, data, trainer, nbh, loo_networks=loo, node_budget=cfg.node_budget) for nbh in nbhs]
    naive_time = time.perf_counter() - t0
    all_nets = [net, *loo]
    optimal = interval_abstraction(all_nets)
    optimal_verdicts = [sphynx_verify(optimal, nbh, cfg.node_budget) for nbh in nbhs]

    report: dict = {
        "config_hash": cfg.digest(),
        "trained_networks": len(all_nets),
        "naive_wall_time_s": naive_time,
        "naive_train_time_s": train_time,
        "naive": [{"neighborhood": nbh.to_dict(), "verdict": r.verdict.decision.value,
                   "failing_networks": r.failing} for nbh, r in zip(nbhs, naive)],
        "optimal_confusion": confusion(optimal_verdicts, [r.verdict for r in naive]).to_dict(),
    }

    hp = hypernet_path or cfg.out / HYPERNET_FILE
    if hp.is_file():
        h = _load_hypernet(cfg, arch, hp)
        report["K"] = h.num_networks
        report["coverage"] = coverage_metrics(h, optimal, all_nets).to_dict()
    else:
        logger.warning("no hyper-network at %s; coverage metrics omitted", hp)

    rp = results_path or cfg.out / RESULTS_FILE
    if rp.is_file():
        results = json.loads(rp.read_text())
        if len(results) != len(nbhs):
            raise UsageError(f"{rp} has {len(results)} results but the config defines {len(nbhs)} neighborhoods")
        sphynx = [r["verdict"] == Decision.LDCP.value for r in results]
        report["confusion"] = confusion(sphynx, [r.verdict for r in naive]).to_dict()
        sphynx_time = sum(r.get("wall_time_ms", 0.0) for r in results) / 1000.0
        log = cfg.out / PREDICT_LOG_FILE
        if log.is_file():
            sphynx_time += json.loads(log.read_text()).get("wall_time_s", 0.0)
        report["sphynx_wall_time_s"] = sphynx_time
        report["speedup"] = naive_time / sphynx_time if sphynx_time > 0 else None
    else:
        logger.warning("no Sphynx results at %s; confusion matrix omitted", rp)

    _write_json(cfg.out / BASELINE_FILE, report)
    print(format_report(report))
    return EXIT_NOT_LDCP if any(not r.verdict.ldcp for r in naive) else EXIT_OK


def format_report(report: dict) -> str:
    lines = [f"trained networks (|D|+1): {report.get('trained_networks')}"]
    if "K" in report:
        lines.append(f"K (Sphynx):               {report['K']}")
    for key in ("confusion", "optimal_confusion"):
        if key in report:
            c = report[key]
            lines.append(f"{key:<25} TP={c['TP']} TN={c['TN']} FP={c['FP']} FN={c['FN']} "
                         f"accuracy={100 * c['accuracy']:.1f}%")
    if "coverage" in report:
        c = report["coverage"]
        lines.append(f"weight abstraction rate:  {c['weight_abstraction_rate']:.2f}%")
        lines.append(f"network abstraction rate: {c['network_abstraction_rate']:.2f}%")
        lines.append(f"miscoverage:              {c['miscoverage']:.4g}")
        lines.append(f"overcoverage:             {c['overcoverage']:.4g} "
                     f"({c['overcoverage_excluded']} zero-width intervals excluded)")
    if report.get("speedup") is not None:
        lines.append(f"speedup (naive / Sphynx): {report['speedup']:.1f}x")
    return "\n".join(lines)


def cmd_report(cfg: RunConfig) -> int:
    base = _read_json(cfg.out / BASELINE_FILE, "baseline report")
    report = {k: v for k, v in base.items() if k != "naive"}
    rp = cfg.out / RESULTS_FILE
    if rp.is_file():
        results = json.loads(rp.read_text())
        times = [r["wall_time_ms"] for r in results if "wall_time_ms" in r]
        report["verify_mean_ms"] = float(np.mean(times)) if times else None
    _write_json(cfg.out / REPORT_FILE, report)
    print(format_report(report))
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration JSON")
    common.add_argument("--output-dir")
    common.add_argument("--csv", help="dataset CSV (needs --schema)")
    common.add_argument("--schema", help="schema JSON sidecar")
    common.add_argument("--synth", nargs=2, type=int, metavar=("N", "D"), help="synthetic dataset size and dimension")
    common.add_argument("--synth-seed", type=int)
    common.add_argument("--hidden", type=int, nargs="+", help="hidden layer sizes")
    common.add_argument("--epochs", type=int)
    common.add_argument("--learning-rate", type=float)
    common.add_argument("--batch-size", type=int)
    common.add_argument("--l1", type=float, dest="l1_coefficient")
    common.add_argument("--seed", type=int, help="training seed")
    common.add_argument("--alpha", type=float)
    common.add_argument("-k", type=int, dest="k", help="networks per prediction round")
    common.add_argument("-M", type=float, dest="M")
    common.add_argument("-R", type=float, dest="R")
    common.add_argument("--max-networks", type=int)
    common.add_argument("--hypernet-seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--node-budget", type=int)
    common.add_argument("-q", "--quiet", action="store_true")

    p = argparse.ArgumentParser(prog="ldcp", description="LDCP verification of ReLU classifiers")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train the full-data network")
    sp = sub.add_parser("predict", parents=[common], help="predict the interval hyper-network")
    sp.add_argument("--network", type=Path)
    sv = sub.add_parser("verify", parents=[common], help="verify every configured neighborhood")
    sv.add_argument("--hypernet", type=Path)
    sv.add_argument("--network", type=Path)
    sb = sub.add_parser("baseline", parents=[common], help="naive ground truth and evaluation metrics")
    sb.add_argument("--network", type=Path)
    sb.add_argument("--hypernet", type=Path)
    sb.add_argument("--results", type=Path)
    sub.add_parser("report", parents=[common], help="summarize a finished run")
    return p


def config_from_args(args) -> RunConfig:
    """Config file first, then every flag that was given on top of it."""
    d = RunConfig.load(args.config).to_dict() if args.config else RunConfig().to_dict()
    if args.csv or args.schema:
        if not (args.csv and args.schema):
            raise UsageError("--csv and --schema must be given together")
        d["dataset"] = {"csv": args.csv, "schema": args.schema}
    if args.synth:
        d["dataset"] = {"synth": {"n": args.synth[0], "d": args.synth[1], "seed": 0}}
    if args.synth_seed is not None:
        if "synth" not in d["dataset"]:
            raise UsageError("--synth-seed needs a synthetic dataset")
        d["dataset"]["synth"]["seed"] = args.synth_seed
    if args.hidden:
        d["hidden"] = args.hidden
    for key in ("epochs", "learning_rate", "batch_size", "l1_coefficient", "seed"):
        if getattr(args, key) is not None:
            d["train"][key] = getattr(args, key)
    for key in ("alpha", "k", "M", "R", "max_networks"):
        if getattr(args, key) is not None:
            d["hypernet"][key] = getattr(args, key)
    if args.hypernet_seed is not None:
        d["hypernet"]["seed"] = args.hypernet_seed
    for key in ("output_dir", "workers", "node_budget"):
        if getattr(args, key) is not None:
            d[key] = getattr(args, key)
    return RunConfig.from_dict(d)


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        cfg = config_from_args(args)
        cfg.out.mkdir(parents=True, exist_ok=True)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "predict":
            return cmd_predict(cfg, args.network)
        if args.command == "verify":
            return cmd_verify(cfg, args.hypernet, args.network)
        if args.command == "baseline":
            return cmd_baseline(cfg, args.network, args.hypernet, args.results)
        return cmd_report(cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        logger.exception("internal error: %s", exc)
        return EXIT_INTERNAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
