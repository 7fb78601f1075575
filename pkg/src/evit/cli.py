"""Command-line pipeline: generate, transfers, weights, fit, evit, recommend, pipeline.

Every stage reads its inputs from, and writes its artifacts to, one output
directory. Files are written under a ``.partial`` name and renamed once
complete, so an aborted stage leaves only ``.partial`` files behind.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from evit.config import load_config
from evit.efficacy import (
    QUALITY_NAMES,
    MlpModel,
    curve_to_csv,
    prediction_curve,
    train,
)
from evit.errors import ConfigError, EvitError, InvalidInputError
from evit.population import StructureAttributes, encode_against, encode_attributes
from evit.similarity import SimilarityWeights, distance_matrix, optimize_weights, similarity_matrix
from evit.surrogate import dataset_from_csv, dataset_to_csv, generate_dataset
from evit.svg import line_plot
from evit.transfer import records_from_csv, records_to_csv, run_pairwise_transfers
from evit.valuation import (
    evit,
    evit_curve,
    evit_curve_to_csv,
    optimize_strategy,
    recommendation_report,
)

DATA_DIR = "data"
MANIFEST = "manifest.json"
TRANSFERS = "transfers.csv"
WEIGHTS = "weights.json"
TRAINING_RECORDS = "training_records.csv"
MODEL = "model.json"
PREDICTION_CURVE = "prediction_curve.csv"
EVIT_CURVE = "evit_curve.csv"
RECOMMENDATION = "recommendation.json"
LOCK = ".lock"

_QUALITY_LABELS = {
    "tr": "true prediction rate",
    "fpr": "false-positive rate",
    "fnr": "false-negative rate",
    "fdr": "false-damage rate",
}


class StageError(EvitError):
    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


def write_artifact(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    partial = path.with_name(path.name + ".partial")
    try:
        partial.write_text(text)
    except OSError as exc:
        raise EvitError(f"cannot write {partial}: {exc.strerror}") from None
    os.replace(partial, path)
    return path


def read_artifact(path: Path, produced_by: str) -> str:
    if not path.exists():
        raise InvalidInputError(f"missing artifact {path}; run the '{produced_by}' stage first")
    return path.read_text()


@contextmanager
def output_lock(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    lock = out / LOCK
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise EvitError(f"{out} is locked by another run (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


@contextmanager
def stage(name):
    try:
        yield
    except StageError:
        raise
    except (EvitError, OSError, ValueError) as exc:
        raise StageError(name, exc) from exc


def _ids(population):
    return [s.id for s in population]


def cmd_generate(cfg, out: Path):
    population = cfg.load_population()
    files = []
    for s in population:
        gen = cfg.generator.for_structure(s.id)
        ds = generate_dataset(s, gen)
        path = write_artifact(out / DATA_DIR / f"{s.id}.csv", dataset_to_csv(ds))
        files.append({"structure_id": s.id, "file": str(path.relative_to(out)), "seed": gen.seed, "rows": len(ds)})
    manifest = {"global_seed": cfg.seed, "config": cfg.to_dict(), "datasets": files}
    write_artifact(out / MANIFEST, json.dumps(manifest, indent=2) + "\n")
    return files


def _load_datasets(cfg, out):
    population = cfg.load_population()
    return [dataset_from_csv(read_artifact(out / DATA_DIR / f"{s.id}.csv", "generate")) for s in population]


def _similarity_lookup(population, weights):
    sim = similarity_matrix(encode_attributes(population), weights)
    index = {sid: i for i, sid in enumerate(_ids(population))}
    return lambda s, t: float(sim[index[s], index[t]])


def cmd_transfers(cfg, out: Path):
    """Pairwise transfers; similarity column uses equal attribute weights."""
    population = cfg.load_population()
    datasets = _load_datasets(cfg, out)
    records = run_pairwise_transfers(datasets, _similarity_lookup(population, SimilarityWeights.equal()), k=cfg.k)
    write_artifact(out / TRANSFERS, records_to_csv(records))
    return records


def cmd_weights(cfg, out: Path):
    population = cfg.load_population()
    records = records_from_csv(read_artifact(out / TRANSFERS, "transfers"))
    weights, r = optimize_weights(
        records, encode_attributes(population), _ids(population), n_starts=cfg.weight_starts, seed=cfg.seed
    )
    write_artifact(out / WEIGHTS, weights.to_json(r))
    lookup = _similarity_lookup(population, weights)
    rescored = [replace(rec, similarity=lookup(rec.source_id, rec.target_id)) for rec in records]
    write_artifact(out / TRAINING_RECORDS, records_to_csv(rescored))
    return weights, r


def _quality_plots(out, rows, records):
    grid = [row[0] for row in rows]
    for k, name in enumerate(QUALITY_NAMES):
        col = 1 + 3 * k
        svg = line_plot(
            f"{_QUALITY_LABELS[name]} vs similarity (surrogate data)",
            "similarity",
            name.upper(),
            grid,
            [row[col] for row in rows],
            [row[col + 1] for row in rows],
            [row[col + 2] for row in rows],
            scatter=[(r.similarity, r.quality[k]) for r in records],
            ylim=(0.0, 1.0),
        )
        write_artifact(out / f"quality_{name}.svg", svg)


def cmd_fit(cfg, out: Path):
    records = records_from_csv(read_artifact(out / TRAINING_RECORDS, "weights"))
    model = train(records, cfg.train)
    write_artifact(out / MODEL, model.to_json(cfg.train))
    rows = prediction_curve(model, cfg.train.grid, n_samples=cfg.n_samples, level=cfg.ci_level, seed=cfg.seed)
    write_artifact(out / PREDICTION_CURVE, curve_to_csv(rows))
    _quality_plots(out, rows, records)
    return model


def _load_model(out):
    return MlpModel.from_json(read_artifact(out / MODEL, "fit"))


def cmd_evit(cfg, out: Path):
    model = _load_model(out)
    rows = evit_curve(
        model, cfg.train.grid, cfg.utilities, cfg.valuation, n_samples=cfg.n_samples, level=cfg.ci_level, seed=cfg.seed
    )
    write_artifact(out / EVIT_CURVE, evit_curve_to_csv(rows))
    svg = line_plot(
        "EVIT vs similarity (surrogate data)",
        "similarity",
        "EVIT (utiles)",
        [r[0] for r in rows],
        [r[1] for r in rows],
        [r[2] for r in rows],
        [r[3] for r in rows],
    )
    write_artifact(out / "evit.svg", svg)
    return rows


def target_similarities(population, weights, target) -> dict:
    """Similarity of ``target`` to each member, on the population's own scale."""
    encoded = encode_attributes(population)
    d_max = distance_matrix(encoded, weights).max()
    if d_max == 0:
        raise InvalidInputError("population members are indistinguishable under the fitted weights")
    t = encode_against(population, [target])[0]
    w = np.asarray(weights.w)
    d = np.sqrt(np.sum(w * (encoded - t) ** 2, axis=1))
    sims = np.clip(1.0 - d / d_max, 0.0, 1.0)
    return {s.id: float(v) for s, v in zip(population, sims)}


def load_target(path) -> StructureAttributes:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InvalidInputError(f"target file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise InvalidInputError(f"{path}: expected one JSON object describing the target")
    raw = {"id": "target", **raw}
    return StructureAttributes.from_dict(raw)


def cmd_recommend(cfg, out: Path, target_path):
    target = load_target(target_path)
    population = cfg.load_population()
    model = _load_model(out)
    weights, _ = SimilarityWeights.from_json(read_artifact(out / WEIGHTS, "weights"))
    candidates = target_similarities(population, weights, target)
    best, ranked = optimize_strategy(model, candidates, cfg.utilities, cfg.valuation)
    write_artifact(out / RECOMMENDATION, recommendation_report(target.id, best, ranked))
    return best, ranked


def cmd_pipeline(cfg, out: Path):
    with stage("generate"):
        cmd_generate(cfg, out)
    with stage("transfers"):
        records = cmd_transfers(cfg, out)
    with stage("weights"):
        weights, r = cmd_weights(cfg, out)
    with stage("fit"):
        model = cmd_fit(cfg, out)
    with stage("evit"):
        rows = cmd_evit(cfg, out)
    at_one = evit(model, 1.0, cfg.utilities, cfg.valuation, n_samples=0).evit
    return {
        "records": len(records),
        "weights": dict(zip(("topology", "scale", "youngs_modulus", "density"), weights.w)),
        "pearson_r": r,
        "evit_at_1": at_one,
        "evit_curve_max_sigma": rows[int(np.argmax([row[1] for row in rows]))][0],
        "seed": cfg.seed,
        "target_size": cfg.valuation.target_size,
        "lambda_mono": cfg.train.lambda_mono,
        "lambda_conc": cfg.train.lambda_conc,
    }


def _print_summary(summary, stream):
    stream.write("pipeline summary\n")
    stream.write(f"  transfer records      {summary['records']}\n")
    w = "  ".join(f"{k}={v:.3f}" for k, v in summary["weights"].items())
    stream.write(f"  similarity weights    {w}\n")
    stream.write(f"  achieved pearson r    {summary['pearson_r']:.4f}\n")
    stream.write(f"  EVIT at similarity 1  {summary['evit_at_1']:.2f}\n")
    stream.write(f"  EVIT curve max at     {summary['evit_curve_max_sigma']:.2f}\n")
    stream.write(
        f"  defaults              seed={summary['seed']} M={summary['target_size']} "
        f"lambda_mono={summary['lambda_mono']} lambda_conc={summary['lambda_conc']}\n"
    )


def build_parser():
    parser = argparse.ArgumentParser(prog="evit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("generate", "transfers", "weights", "fit", "evit", "recommend", "pipeline"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="global seed (overrides config and EVIT_SEED)")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        if name == "recommend":
            p.add_argument("--target", type=Path, required=True, help="target attributes JSON")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out)
    except (ConfigError, InvalidInputError) as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.out)
    try:
        with output_lock(out):
            if args.command == "pipeline":
                _print_summary(cmd_pipeline(cfg, out), sys.stdout)
            elif args.command == "recommend":
                with stage("recommend"):
                    best, ranked = cmd_recommend(cfg, out, args.target)
                chosen = best.source if best.source is not None else "none (null transfer)"
                print(f"recommended source: {chosen}")
            else:
                command = {
                    "generate": cmd_generate,
                    "transfers": cmd_transfers,
                    "weights": cmd_weights,
                    "fit": cmd_fit,
                    "evit": cmd_evit,
                }[args.command]
                with stage(args.command):
                    command(cfg, out)
                print(f"{args.command}: wrote artifacts to {out}")
    except EvitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
