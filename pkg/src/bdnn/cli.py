"""Command-line front end: ``bdnn <command> [options]``.

Every command accepts ``--config FILE``, a flat ``key = value`` document
whose keys are the long option names of that command (``-`` or ``_``).
Options given on the command line override the file.

Exit codes: 0 success, 2 invalid input, 3 numeric or runtime failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import modelfile
from .data_io import Dataset, load_fmat, load_idx
from .errors import BdnnError, NumericError, ValidationError
from .evaluation import MetricReport, euclid_ground_truth, evaluate_codes, label_ground_truth
from .hamming import load_codes, pack, save_codes, search_topk_batch
from .hashnet import NetConfig, encode
from .itq import itq_encode, itq_train
from .lbfgs import LbfgsConfig
from .pipeline import ReproConfig, config_hash, run_mnist_uh
from .sh import ShHyperParams, train_sh
from .training import write_trace
from .uh import UhHyperParams, train_uh

EXIT_OK, EXIT_INVALID, EXIT_FAILURE = 0, 2, 3

# excluded from the config hash: output locations do not change what is computed
_NOT_HASHED = {"config", "func", "command", "target", "out", "trace", "report"}


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ValidationError(f"config line {lineno}: empty key")
        out[key.replace("-", "_")] = value
    return out


def _int_list(text: str) -> list[int]:
    text = text.strip()
    if not text:
        return []
    try:
        return [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _count(text: str) -> float:
    """Positive integer or 'all'."""
    if text.strip().lower() in ("all", "inf"):
        return math.inf
    return int(text)


def _flag(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def load_dataset(path, labels=None, scale=False) -> Dataset:
    """BFM1 container, or an idx image file (with an optional idx label file)."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == b"BFM1":
        return load_fmat(path)
    return load_idx(path, labels, scale=scale)


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) in (None, "")]
    if missing:
        raise ValidationError("missing required option(s): " +
                              ", ".join("--" + n.replace("_", "-") for n in missing))


def _settings(args) -> dict:
    out = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_HASHED}
    return {k: ("all" if v == math.inf else v) for k, v in out.items()}


def _meta(args) -> dict:
    settings = _settings(args)
    return {"config_hash": config_hash(settings), "config": settings}


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1, default=str) + "\n")


def _load_model(path):
    mode, model, meta = modelfile.load(path)
    return mode, model, meta


def _encode_with(mode, model, x: np.ndarray) -> np.ndarray:
    if mode == "ITQ":
        return itq_encode(model, x)
    config, params = model
    return encode(params, config, x)


# --- commands -------------------------------------------------------------

def cmd_train(args) -> int:
    _require(args, "data", "bits", "out")
    data = load_dataset(args.data, args.labels, args.scale)
    lcfg = LbfgsConfig(memory=args.memory, max_iters=args.max_iters, grad_tol=args.grad_tol)
    meta = _meta(args)
    out = Path(args.out)
    if args.mode == "uh":
        config = NetConfig.uh(data.dim, args.hidden, args.bits)
        hp = UhHyperParams(*_lambdas(args, UhHyperParams()), T=_or(args.T, UhHyperParams().T))
        params, b, trace = train_uh(data.x, config, hp, lcfg, args.seed, args.itq_iters)
        sample = None
    else:
        if data.labels is None:
            raise ValidationError("SH training needs labels (a BFM1 file with labels or --labels)")
        config = NetConfig.sh(data.dim, args.hidden, args.bits)
        defaults = ShHyperParams()
        hp = ShHyperParams(*_lambdas(args, defaults), T=_or(args.T, defaults.T),
                           per_class_sample=args.per_class_sample)
        params, b, trace, sample = train_sh(data.x, data.labels, config, hp, lcfg,
                                            args.seed, args.itq_iters)
    modelfile.save(out, modelfile.dump_network(config, params, meta))
    save_codes(_sibling(out, ".codes"), pack(b))
    write_trace(trace, args.trace or _sibling(out, ".trace.jsonl"))
    _write_json(_sibling(out, ".config.json"), meta)
    if sample is not None:
        _write_json(_sibling(out, ".indices.json"), {"config_hash": meta["config_hash"],
                                                     "indices": sample.tolist()})
    print(json.dumps({"model": str(out), "final_J": trace[-1].J, "steps": len(trace),
                      "config_hash": meta["config_hash"]}, sort_keys=True))
    return EXIT_OK


def _lambdas(args, defaults):
    return tuple(_or(getattr(args, f"lambda{i}"), getattr(defaults, f"lambda{i}")) for i in range(1, 5))


def _or(value, default):
    return default if value is None else value


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(path.name + suffix)


def cmd_itq_train(args) -> int:
    _require(args, "data", "bits", "out")
    data = load_dataset(args.data, args.labels, args.scale)
    model = itq_train(data.x, args.bits, args.iters, args.seed)
    meta = _meta(args)
    meta["loss_history"] = model.loss_history
    modelfile.save(args.out, modelfile.dump_itq(model, meta))
    print(json.dumps({"model": args.out, "final_loss": model.loss_history[-1],
                      "config_hash": meta["config_hash"]}, sort_keys=True))
    return EXIT_OK


def cmd_encode(args) -> int:
    _require(args, "model", "data", "out")
    mode, model, _ = _load_model(args.model)
    data = load_dataset(args.data, args.labels, args.scale)
    codes = _encode_with(mode, model, data.x)
    save_codes(args.out, pack(codes))
    print(json.dumps({"codes": args.out, "count": int(codes.shape[1]), "bits": int(codes.shape[0])}))
    return EXIT_OK


def cmd_index(args) -> int:
    """Exact Hamming search of query codes against a database codes file."""
    _require(args, "db_codes", "query_codes")
    db = load_codes(args.db_codes)
    queries = load_codes(args.query_codes)
    if queries.bits != db.bits:
        raise ValidationError(f"database codes have {db.bits} bits, queries have {queries.bits}")
    k = min(args.k, len(db)) if args.k else None
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        for i, r in enumerate(search_topk_batch(db, queries, k, args.workers)):
            if args.radius is not None:
                keep = r.distances <= args.radius
                r.indices, r.distances = r.indices[keep], r.distances[keep]
            out.write(json.dumps({"query": i, "indices": r.indices.tolist(),
                                  "distances": r.distances.tolist()}) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_eval(args) -> int:
    _require(args, "db_data", "query_data")
    db = load_dataset(args.db_data, args.db_labels, args.scale)
    q = load_dataset(args.query_data, args.query_labels, args.scale)
    if db.dim != q.dim:
        raise ValidationError(f"database has {db.dim} features, queries have {q.dim}")
    if args.model:
        mode, model, _ = _load_model(args.model)
        dim = model.dim if mode == "ITQ" else model[0].input_dim
        if dim != db.dim:
            raise ValidationError(f"model {args.model} expects {dim} features, "
                                  f"data {args.db_data} has {db.dim}")
        db_codes = pack(_encode_with(mode, model, db.x))
        q_codes = pack(_encode_with(mode, model, q.x))
        method = {"UH": "UH-BDNN", "SH": "SH-BDNN"}.get(mode, mode)
    else:
        _require(args, "db_codes", "query_codes")
        db_codes, q_codes = load_codes(args.db_codes), load_codes(args.query_codes)
        method = "codes"
        if len(db_codes) != len(db) or len(q_codes) != len(q):
            raise ValidationError(f"{len(db_codes)}/{len(q_codes)} codes for "
                                  f"{len(db)}/{len(q)} database/query samples")
    start = time.perf_counter()
    if args.gt == "euclid":
        gt = euclid_ground_truth(db.x, q.x, args.k)
    else:
        if db.labels is None or q.labels is None:
            raise ValidationError("label ground truth needs labels for database and queries")
        gt = label_ground_truth(db.labels, q.labels)
    m = evaluate_codes(db_codes, q_codes, gt, top_n=args.top_n, radius=args.radius,
                       workers=args.workers)
    report = MetricReport(args.dataset or Path(args.db_data).stem, method, db_codes.bits,
                          m.mean_ap, m.precision_at_radius, time.perf_counter() - start,
                          args.seed, _meta(args)["config_hash"],
                          {"empty_ground_truth": m.empty_ground_truth,
                           "empty_radius": m.empty_radius, "radius": args.radius,
                           "ground_truth": args.gt, "top_n": args.top_n})
    _emit(report.to_record(), args.report)
    return EXIT_OK


def _emit(line: str, path=None) -> None:
    print(line)
    if path:
        with open(path, "a") as fh:
            fh.write(line + "\n")


def cmd_repro(args) -> int:
    if args.target != "mnist-uh":
        raise ValidationError(f"unknown repro target {args.target!r}")
    cfg = ReproConfig(data_dir=args.data_dir, db_size=args.db_size, query_size=args.query_size,
                      k=args.k, bits=tuple(args.bits), seed=args.seed, scale=args.scale,
                      max_iters=args.max_iters, T=args.T, itq_iters=args.itq_iters)
    result = run_mnist_uh(cfg, log=lambda msg: print(msg, file=sys.stderr, flush=True))
    for r in result.reports:
        _emit(r.to_record(), args.report)
    return EXIT_OK


# --- parser ---------------------------------------------------------------

def _common(p, data=True):
    p.add_argument("--config", help="flat key = value file supplying option defaults")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    if data:
        p.add_argument("--scale", type=_flag, default=False,
                       help="divide idx pixel bytes by 255 (default false)")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="bdnn", description="Binary deep neural network hashing.")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = subs["train"] = sub.add_parser("train", help="train a UH or SH hash network")
    _common(p)
    p.add_argument("--data", help="BFM1 feature file or idx image file")
    p.add_argument("--labels", help="idx label file (when --data is an idx file)")
    p.add_argument("--mode", choices=("uh", "sh"), default="uh")
    p.add_argument("--bits", type=int, help="code length L")
    p.add_argument("--hidden", type=_int_list, default=[],
                   help="comma-separated hidden layer sizes before the code layer")
    for i in range(1, 5):
        p.add_argument(f"--lambda{i}", type=float, help=f"penalty weight {i} (mode default)")
    p.add_argument("--T", type=int, help="alternating rounds (mode default)")
    p.add_argument("--max-iters", type=int, default=100, help="L-BFGS iterations per weight step")
    p.add_argument("--memory", type=int, default=10, help="L-BFGS memory")
    p.add_argument("--grad-tol", type=float, default=1e-6, help="L-BFGS gradient tolerance")
    p.add_argument("--itq-iters", type=int, default=50)
    p.add_argument("--per-class-sample", type=_count, default=300,
                   help="SH training samples per class, or 'all'")
    p.add_argument("--out", help="model file to write")
    p.add_argument("--trace", help="trace JSONL path (default <out>.trace.jsonl)")
    p.set_defaults(func=cmd_train)

    p = subs["itq-train"] = sub.add_parser("itq-train", help="fit an ITQ model")
    _common(p)
    p.add_argument("--data")
    p.add_argument("--labels")
    p.add_argument("--bits", type=int)
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--out")
    p.set_defaults(func=cmd_itq_train)

    p = subs["encode"] = sub.add_parser("encode", help="encode data into a packed codes file")
    _common(p)
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--labels")
    p.add_argument("--out")
    p.set_defaults(func=cmd_encode)

    p = subs["index"] = sub.add_parser("index", help="Hamming search of query codes in a codes file")
    _common(p, data=False)
    p.add_argument("--db-codes")
    p.add_argument("--query-codes")
    p.add_argument("--k", type=int, default=10, help="results per query (0 = all)")
    p.add_argument("--radius", type=int, help="keep only results within this distance")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="JSONL output (default stdout)")
    p.set_defaults(func=cmd_index)

    p = subs["eval"] = sub.add_parser("eval", help="mAP and precision within a Hamming radius")
    _common(p)
    p.add_argument("--model", help="model to encode both sets with")
    p.add_argument("--db-codes")
    p.add_argument("--query-codes")
    p.add_argument("--db-data")
    p.add_argument("--db-labels")
    p.add_argument("--query-data")
    p.add_argument("--query-labels")
    p.add_argument("--gt", choices=("euclid", "label"), default="euclid")
    p.add_argument("--k", type=int, default=50, help="Euclidean neighbours as ground truth")
    p.add_argument("--top-n", type=int, help="truncate rankings for mAP")
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--dataset", help="dataset name for the report")
    p.add_argument("--report", help="append the report record to this file")
    p.set_defaults(func=cmd_eval)

    p = subs["repro"] = sub.add_parser("repro", help="reproduction pipelines")
    p.add_argument("target", choices=("mnist-uh",))
    _common(p)
    p.add_argument("--data-dir", help="directory with the MNIST idx files")
    p.set_defaults(scale=True)
    p.add_argument("--db-size", type=int, default=10_000)
    p.add_argument("--query-size", type=int, default=1_000)
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--bits", type=_int_list, default=[16, 24])
    p.add_argument("--max-iters", type=int, default=ReproConfig.max_iters)
    p.add_argument("--T", type=int, default=ReproConfig.T)
    p.add_argument("--itq-iters", type=int, default=50)
    p.add_argument("--report", help="append report records to this file")
    p.set_defaults(func=cmd_repro)
    return parser, subs


def parse_args(argv=None) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sp = subs[args.command]
        actions = {a.dest: a for a in sp._actions if a.dest not in ("help", "config")}
        text = Path(args.config).read_text()
        values = {}
        for key, raw in parse_config_text(text).items():
            if key not in actions:
                raise ValidationError(f"unknown key {key!r} in {args.config} for '{args.command}'")
            conv = actions[key].type or str
            try:
                values[key] = conv(raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise ValidationError(f"{args.config}: bad value for {key}: {exc}") from exc
        sp.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        return args.func(args)
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (BdnnError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (RuntimeError, ArithmeticError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
