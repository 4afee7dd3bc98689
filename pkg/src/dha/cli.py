"""Command line entry point: ``dha {train,eval,recommend,gradcheck,grid}``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import copy
import itertools
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from . import checkpoint, config, gradcheck, pipeline
from .errors import ConfigInvalid, DhaError, UnknownUser
from .evaluation import rank_candidates
from .numkernel import Stream, make_rng
from .trainer import _side_lambdas, side_gradients, side_objective

log = logging.getLogger("dha")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


def _out(line: str = "") -> None:
    sys.stdout.write(line + "\n")


def _load_config(path, seed=None) -> dict:
    cfg = config.load(path)
    if seed is not None:
        cfg["train"]["seed"] = seed
    return cfg


def cmd_train(args) -> int:
    cfg = _load_config(args.config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prep = pipeline.prepare(cfg)
    resolved = json.dumps(config.public(cfg), indent=2, sort_keys=True)
    (out / "config.resolved.json").write_text(resolved + "\n", encoding="utf-8")

    def on_alternation(state, tlog):
        name = f"ckpt_alt{state.alternation}"
        checkpoint.save(pipeline.checkpoint_for(state, prep), out / f"{name}.dhackpt")
        (out / f"{name}.config.json").write_text(resolved + "\n", encoding="utf-8")
        log.info("wrote %s", out / f"{name}.dhackpt")

    state, tlog = pipeline.train(prep, on_alternation)
    final = out / f"ckpt_alt{state.alternation}.dhackpt"
    shutil.copyfile(final, out / "model.dhackpt")
    (out / "loss_log.tsv").write_text(
        "alternation\tepoch\ttotal_loss\n" + "".join(l + "\n" for l in tlog.epoch_lines()), encoding="utf-8")
    (out / "sweep_log.tsv").write_text(
        "alternation\thalf\tcf_before\tcf_after\n" + "".join(l + "\n" for l in tlog.sweep_lines()),
        encoding="utf-8")
    _out(f"trained {state.alternation} alternations; final checkpoint {out / 'model.dhackpt'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    ckpt = checkpoint.load(args.checkpoint)
    prep = pipeline.prepare(cfg, split_seed=args.seed)
    pipeline.check_compatible(ckpt.tensors, prep)
    report = pipeline.evaluate_factors(prep, ckpt.tensors["U"], ckpt.tensors["V"])
    for line in report.lines():
        _out(line)
    _out(report.table())
    return EXIT_OK


def cmd_recommend(args) -> int:
    ckpt = checkpoint.load(args.checkpoint)
    t = ckpt.tensors
    user_ids = checkpoint.tensor_text(t["meta/user_ids"]).split("\n")
    item_ids = checkpoint.tensor_text(t["meta/item_ids"]).split("\n")
    try:
        u = user_ids.index(args.user)
    except ValueError:
        raise UnknownUser(f"user {args.user!r} is not in the checkpoint") from None
    pairs = t["meta/train_pairs"].astype(np.int64)
    seen = pairs[pairs[:, 0] == u, 1]
    ranked = rank_candidates(t["U"], t["V"], seen, u, top=args.top_m)
    for rank, (item, score) in enumerate(zip(ranked.items, ranked.scores), 1):
        _out(f"{rank}\t{item_ids[item]}\t{score:.6f}")
    return EXIT_OK


def run_gradcheck(cfg: dict, seed: int, batch: int = 4, limit: int | None = 48,
                  corrupt: bool = False) -> list[tuple[str, gradcheck.TensorCheck]]:
    """Finite-difference check of every network tensor built from ``cfg``.

    Parameters are the (unpretrained) initialization plus a random jitter so
    biases are not exactly zero; masking noise is off so the objective is
    deterministic.
    """
    prep = pipeline.prepare(cfg)
    tcfg = prep.train_cfg
    from .trainer import init_state
    state = init_state(tcfg, prep.data, pretrain=False)
    rng = make_rng(seed, Stream.GRADCHECK)
    results = []
    for side_name in ("user", "item"):
        side = state.side(side_name)
        if side.empty:
            continue
        for name, arr in side.named_tensors().items():
            arr += rng.normal(0.0, 0.1, size=arr.shape)
            if name.endswith("/emb"):
                arr[0] = 0.0
        n = prep.data.count(side_name)
        idx = np.sort(rng.choice(n, size=min(batch, n), replace=False))
        targets = rng.normal(0.0, 0.5, size=(idx.size, tcfg.hp.d))
        lam_rec, lam_anchor = _side_lambdas(tcfg.hp, side_name)
        inputs = prep.data.inputs(side_name)
        args = (side, inputs, idx, targets, lam_rec, lam_anchor, tcfg.hp.lambda_w)
        grads = side_gradients(*args)
        if corrupt:
            first = next(iter(grads))
            grads[first] = grads[first] * 1.5 + 1e-3
        checks = gradcheck.check_tensors(lambda: side_objective(*args), side.named_tensors(), grads,
                                         limit=limit, rng=rng)
        results += [(side_name, c) for c in checks]
    return results


def cmd_gradcheck(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else cfg["train"]["seed"]
    results = run_gradcheck(cfg, seed, corrupt=args.corrupt_gradient)
    worst = 0.0
    for side, c in results:
        worst = max(worst, c.rel_error)
        _out(f"{side}/{c.name}\t{c.checked}\t{c.rel_error:.3e}\t{'ok' if c.ok else 'FAIL'}")
    _out(f"max relative error {worst:.3e} (tolerance {gradcheck.TOLERANCE:g})")
    return EXIT_OK if all(c.ok for _, c in results) else EXIT_NUMERIC


GRID_KEYS = {
    "lr": ("train", "lr"),
    "lambda_f": ("model", "lambda", "f"),
    "lambda_w": ("model", "lambda", "w"),
    "alpha": ("model", "confidence", "alpha"),
    "fusion_layers": ("model", "fusion_layers"),
}


def grid_cells(cfg: dict):
    grid = cfg.get("grid") or {}
    keys = sorted(grid)
    for values in itertools.product(*(grid[k] for k in keys)):
        cell = copy.deepcopy(cfg)
        for k, v in zip(keys, values):
            if k in ("corruption", "activation"):
                field = "corruption" if k == "corruption" else "activation"
                for side in ("user", "item"):
                    for c in cell["components"][side]:
                        if c["kind"] == "static":
                            c[field] = v
                continue
            node = cell
            *head, last = GRID_KEYS[k]
            for h in head:
                node = node[h]
            node[last] = v
        yield dict(zip(keys, values)), cell


def cmd_grid(args) -> int:
    cfg = _load_config(args.config, args.seed)
    if not cfg.get("grid"):
        raise ConfigInvalid("config has no 'grid' section")
    for values, cell in grid_cells(cfg):
        prep = pipeline.prepare(cell)
        state, _ = pipeline.train(prep, track_loss=False)
        report = pipeline.evaluate_factors(prep, state.U, state.V)
        label = ",".join(f"{k}={v}" for k, v in values.items())
        metrics = "\t".join(f"{name}@{m}={val:.6f}" for m in report.ms
                            for name, val in (("recall", report.recall[m]), ("map", report.map[m])))
        _out(f"cell\t{label}\t{metrics}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dha", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="joint training, checkpoint per alternation")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="recall@M / MAP@M on the held-out split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--config", required=True)
    e.add_argument("--seed", type=int, help="split seed (default: config split.seed)")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("recommend", help="top-M unseen items for one user")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--user", required=True)
    r.add_argument("--top-m", type=int, default=10)
    r.set_defaults(func=cmd_recommend)

    g = sub.add_parser("gradcheck", help="finite-difference check of every network tensor")
    g.add_argument("--config", required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    g.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("grid", help="train + evaluate every cell of the config's grid")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_grid)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except DhaError as exc:
        sys.stderr.write(f"dha {args.command}: {type(exc).__name__}: {exc}\n")
        return exc.exit_code
    except FloatingPointError as exc:
        sys.stderr.write(f"dha {args.command}: numeric failure: {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
