"""Command-line entry point: ``dnfcount <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .exact import exact_wmc_enumeration, exact_wmc_inclusion_exclusion
from .formula import read_formula, write_formula
from .generator import (
    GeneratorConfig,
    generate_uniform_formula,
    generate_with_plan,
    quarter_increments,
    sample_base_distribution,
    sample_experiment_q_r,
)
from .klm import KlmError, KlmParams, klm_estimate

log = logging.getLogger("dnfcount")


def _emit(args, payload, name: str) -> None:
    """Write a JSON report under ``--out`` if given, else print it."""
    text = json.dumps(payload, indent=1, sort_keys=True)
    if args.out:
        out = Path(args.out)
        if out.suffix == "":
            out.mkdir(parents=True, exist_ok=True)
            out = out / name
        out.write_text(text + "\n", encoding="utf-8")
        log.info("wrote %s", out)
    else:
        print(text)


def _csv_target(args, name: str) -> Path | None:
    if not args.out:
        return None
    out = Path(args.out)
    if out.suffix == "":
        out.mkdir(parents=True, exist_ok=True)
        return out / name
    return out


def cmd_generate(args) -> int:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    master = np.random.SeedSequence(args.seed)
    entries = []
    for i, ss in enumerate(master.spawn(args.count)):
        gen_ss, qr_ss, w_ss = ss.spawn(3)
        q, r = args.q, args.r
        if args.paper_qr:
            mean_w = 0.5 * (args.min_width + args.max_width)
            q, r = sample_experiment_q_r(args.n, args.m, np.random.default_rng(qr_ss), mean_width=mean_w)
        gen_seed = int(gen_ss.generate_state(1, np.uint64)[0])
        cfg = GeneratorConfig(args.n, args.m, args.min_width, args.max_width, q, r, seed=gen_seed)
        if args.uniform:
            f = generate_uniform_formula(cfg)
            privileged = []
        else:
            f, plan = generate_with_plan(cfg)
            privileged = sorted(v + 1 for v in plan.privileged)
        base = sample_base_distribution(args.n, np.random.default_rng(w_ss))
        dists = [base, *quarter_increments(base)]
        path = out / f"formula_{i:05d}.wdnf"
        write_formula(path, f, base)
        entries.append({
            "file": path.name,
            "generator_seed": gen_seed,
            "q": q,
            "r": r,
            "privileged": privileged,
            "distributions": [[float(p) for p in d] for d in dists],
        })
    manifest = {
        "config": {"n": args.n, "m": args.m, "min_width": args.min_width, "max_width": args.max_width,
                   "q": args.q, "r": args.r, "paper_qr": args.paper_qr, "uniform": args.uniform},
        "master_seed": args.seed,
        "rng": "numpy PCG64 via SeedSequence(seed).spawn(count)",
        "formulas": entries,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {args.count} formulas to {out}")
    return 0


def cmd_label(args) -> int:
    from .harness.dataset import GridConfig, build_dataset, label_files, write_dataset

    klm = KlmParams(args.epsilon, args.delta, args.seed)
    if not args.out:
        raise SystemExit("label needs --out <dataset.jsonl>")
    if args.input:
        ds = label_files(args.input, klm, args.seed, args.threads)
        write_dataset(args.out, ds)
    else:
        grid = GridConfig(
            ns=tuple(args.ns),
            widths=tuple(args.widths),
            m_ratios=tuple(args.m_ratios),
            per_cell=args.per_cell,
            qr=args.qr,
            q=args.q,
            r=args.r,
        )
        ds = build_dataset(grid, klm, args.seed, args.out, args.threads)
    print(f"{len(ds.records)} records, {len(ds.dropped)} dropped -> {args.out}")
    return 0


def cmd_exact(args) -> int:
    f, w = read_formula(args.input)
    if args.method == "ie":
        value = exact_wmc_inclusion_exclusion(f, w)
    else:
        value = exact_wmc_enumeration(f, w)
    print(f"{value:.12g}")
    return 0


def cmd_klm(args) -> int:
    f, w = read_formula(args.input)
    runs = []
    for k in range(args.repeat):
        params = KlmParams(args.epsilon, args.delta, args.seed + k)
        try:
            res = klm_estimate(f, w, params)
        except KlmError as exc:
            print(f"seed {params.seed}: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 2
        runs.append({"seed": params.seed, "estimate": res.estimate, "trials": res.trials, "hits": res.hits})
        print(f"{res.estimate:.12g} {res.trials} {res.hits}")
    if args.out:
        _emit(args, {"rng": kernels.RNG_ALGORITHM, "runs": runs}, "klm.json")
    return 0


def cmd_train(args) -> int:
    from .harness.dataset import load_dataset
    from .nn.checkpoint import save_model
    from .nn.model import ModelConfig
    from .nn.train import TrainConfig, train

    records = load_dataset(args.dataset)
    model_cfg = ModelConfig(dim=args.dim, iterations=args.iters, elu_variant=args.elu)
    train_cfg = TrainConfig(lr=args.lr, clip=args.clip, epochs=args.epochs, batch_size=args.batch_size,
                            seed=args.seed, max_steps=args.max_steps)
    out = args.out or "model.json"
    meta = {"train": train_cfg.to_dict(), "dataset": str(args.dataset), "records": len(records)}

    def checkpoint(epoch, loss, params):
        meta["epoch"] = epoch + 1
        meta["loss"] = loss
        save_model(out, params, model_cfg, meta)
        print(f"epoch {epoch + 1}: mean KL {loss:.6f}")

    res = train(records, model_cfg, train_cfg, on_epoch=checkpoint)
    meta["epoch_losses"] = res.epoch_losses
    save_model(out, res.params, model_cfg, meta)
    print(f"saved {out} after {res.steps} steps")
    return 0


def cmd_predict(args) -> int:
    from .nn.checkpoint import load_model
    from .nn.model import forward

    params, cfg, _ = load_model(args.model)
    for path in args.input:
        f, w = read_formula(path)
        mean, sigma = forward(f, w, params, cfg, iterations=args.iters)
        print(f"{path} {np.exp(mean):.12g} {mean:.12g} {sigma:.12g}")
    return 0


def cmd_eval(args) -> int:
    from .harness.dataset import load_dataset
    from .harness.evaluation import evaluate
    from .nn.checkpoint import load_model

    params, cfg, _ = load_model(args.model)
    report = evaluate(params, cfg, load_dataset(args.dataset), args.thresholds)
    for t, acc, base in zip(report.thresholds, report.overall, report.baseline):
        print(f"t={t:g}: {acc:.2f}%  (best constant {base:.2f}%)")
    if args.out:
        _emit(args, report.to_dict(), "eval.json")
    return 0


def cmd_heatmap(args) -> int:
    from .harness.dataset import load_dataset
    from .harness.evaluation import heatmap_export, write_matrix_csv
    from .nn.checkpoint import load_model

    params, cfg, _ = load_model(args.model)
    counts = heatmap_export(params, cfg, load_dataset(args.dataset), args.bins)
    target = _csv_target(args, "heatmap.csv")
    if target is None:
        for row in counts:
            print(",".join(str(int(x)) for x in row))
    else:
        write_matrix_csv(target, counts)
        print(f"wrote {target}")
    return 0


def cmd_trace(args) -> int:
    from .harness.evaluation import trace_table, write_matrix_csv
    from .nn.checkpoint import load_model
    from .nn.model import forward

    params, cfg, _ = load_model(args.model)
    if len(args.input) == 1 and not args.out:
        f, w = read_formula(args.input[0])
        _, trace = forward(f, w, params, cfg, iterations=args.iters, trace=True)
        for t, (mu, sigma) in enumerate(trace, start=1):
            print(f"{t} {np.exp(mu):.12g} {sigma:.12g}")
        return 0
    loaded = [read_formula(p) for p in args.input]
    table = trace_table(params, cfg, [f for f, _ in loaded], [w for _, w in loaded], args.iters)
    header = ["formula"] + [f"iter_{t + 1}" for t in range(table.shape[1])]
    target = _csv_target(args, "trace.csv")
    if target is None:
        print(",".join(header))
        for p, row in zip(args.input, table):
            print(",".join([p] + [repr(float(x)) for x in row]))
    else:
        write_matrix_csv(target, table, header, args.input)
        print(f"wrote {target}")
    return 0


def cmd_bench(args) -> int:
    from .harness.bench import bench, sweep_formulas
    from .nn.checkpoint import load_model
    from .nn.model import ModelConfig, init_params

    if args.model:
        params, cfg, _ = load_model(args.model)
    else:
        cfg = ModelConfig(dim=args.dim, iterations=args.iters)
        params = init_params(cfg, args.seed)
    instances = sweep_formulas(args.ns, args.width, args.m_ratio, args.seed)
    report = bench(instances, params, cfg, KlmParams(args.epsilon, args.delta, args.seed), args.repeats,
                   run_klm=not args.skip_klm)
    for row in report.rows:
        print(f"n={row.n} m={row.m} w={row.width} edges={row.edges} msgs={row.messages} "
              f"klm={row.klm_seconds:.4f}s gnn={row.gnn_seconds:.4f}s")
    if report.gnn_fit:
        print(f"gnn time ~ edges: R^2 = {report.gnn_fit['r2']:.4f}")
    if args.out:
        _emit(args, report.to_dict(), "bench.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    def global_flags(suppress: bool) -> argparse.ArgumentParser:
        # subcommands must not reset values given before the subcommand name
        d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--seed", type=int, default=d(0))
        g.add_argument("--threads", type=int, default=d(1))
        g.add_argument("--verbose", "-v", action="store_true", default=d(False))
        g.add_argument("--out", default=d(None), help="output file or directory")
        return g

    common = global_flags(suppress=True)
    p = argparse.ArgumentParser(prog="dnfcount", description="Weighted #DNF counting toolkit",
                                parents=[global_flags(suppress=False)])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help, parents=[common])
        sp.set_defaults(func=fn)
        return sp

    sp = add("generate", cmd_generate, "generate random weighted DNF formulas")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--min-width", type=int, required=True)
    sp.add_argument("--max-width", type=int, required=True)
    sp.add_argument("--q", type=float, default=0.0)
    sp.add_argument("--r", type=float, default=0.0)
    sp.add_argument("--paper-qr", action="store_true", help="draw q and r with the experiment rule")
    sp.add_argument("--uniform", action="store_true", help="fill clauses uniformly instead")
    sp.add_argument("--count", type=int, default=1)

    sp = add("label", cmd_label, "build a KLM-labelled JSON-lines dataset")
    sp.add_argument("--input", nargs="*", help="label these wdnf files instead of a grid")
    sp.add_argument("--ns", type=int, nargs="+", default=[20, 30])
    sp.add_argument("--widths", type=int, nargs="+", default=[3, 5])
    sp.add_argument("--m-ratios", type=float, nargs="+", default=[0.25, 0.375, 0.5, 0.625, 0.75])
    sp.add_argument("--per-cell", type=int, default=1)
    sp.add_argument("--qr", choices=["experiment", "none", "fixed"], default="experiment")
    sp.add_argument("--q", type=float, default=0.0)
    sp.add_argument("--r", type=float, default=0.0)
    sp.add_argument("--epsilon", type=float, default=0.1)
    sp.add_argument("--delta", type=float, default=0.05)

    sp = add("exact", cmd_exact, "exact weighted count")
    sp.add_argument("--input", required=True)
    sp.add_argument("--method", choices=["enum", "ie"], default="enum")

    sp = add("klm", cmd_klm, "KLM estimate")
    sp.add_argument("--input", required=True)
    sp.add_argument("--epsilon", type=float, default=0.1)
    sp.add_argument("--delta", type=float, default=0.05)
    sp.add_argument("--repeat", type=int, default=1)

    sp = add("train", cmd_train, "train the network on a labelled dataset")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--dim", type=int, default=128)
    sp.add_argument("--iters", type=int, default=8)
    sp.add_argument("--lr", type=float, default=1e-5)
    sp.add_argument("--clip", type=float, default=0.5)
    sp.add_argument("--epochs", type=int, default=4)
    sp.add_argument("--batch-size", type=int, default=32)
    sp.add_argument("--max-steps", type=int, default=None)
    sp.add_argument("--elu", choices=["exp", "printed"], default="exp")

    for name, fn, help in (("predict", cmd_predict, "predict probabilities with a trained model"),
                           ("trace", cmd_trace, "per-iteration predictions")):
        sp = add(name, fn, help)
        sp.add_argument("--model", required=True)
        sp.add_argument("--input", nargs="+", required=True)
        sp.add_argument("--iters", type=int, default=None)

    sp = add("eval", cmd_eval, "threshold accuracy on a labelled dataset")
    sp.add_argument("--model", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--thresholds", type=float, nargs="+", default=[0.02, 0.05, 0.10, 0.15])

    sp = add("heatmap", cmd_heatmap, "2-D histogram of KLM vs network probabilities")
    sp.add_argument("--model", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--bins", type=int, default=10)

    sp = add("bench", cmd_bench, "runtime scaling of KLM and the network")
    sp.add_argument("--model", default=None, help="defaults to an untrained model")
    sp.add_argument("--dim", type=int, default=128)
    sp.add_argument("--iters", type=int, default=8)
    sp.add_argument("--ns", type=int, nargs="+", default=[100, 200, 400, 800])
    sp.add_argument("--width", type=int, default=3)
    sp.add_argument("--m-ratio", type=float, default=0.75)
    sp.add_argument("--repeats", type=int, default=3)
    sp.add_argument("--epsilon", type=float, default=0.1)
    sp.add_argument("--delta", type=float, default=0.05)
    sp.add_argument("--skip-klm", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"dnfcount {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
