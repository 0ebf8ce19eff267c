"""Command-line front end.

Stage subcommands (preprocess/train/encode/reconstruct/evaluate) exchange
.npz artifacts so the pipeline can be driven piecewise; `run` executes the
whole experiment from one INI config and `sweep` crosses a grid of overrides
over it. Every subcommand accepts repeated ``--set section.key=value``
overrides on top of the config file.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .bases import joint_basis
from .core import Dictionary, Epoch, Measurements, compression_ratio, prd
from .pipeline import (
    RunConfig,
    load_config,
    load_dictionary,
    persist_dictionary,
    persist_state,
    prepare_data,
    realized_m,
    run_experiment,
    sweep,
    train_dictionary,
)
from .sensing import encode, generate_sensing_matrix
from .solvers import basis_pursuit_reconstruct


def _add_common(p):
    p.add_argument("-c", "--config", required=True, help="INI configuration file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="SECTION.KEY=VALUE", help="override a config value")


def _config(args) -> RunConfig:
    return load_config(args.config, args.overrides)


def _outdir(config: RunConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _save_epochs(path, prepared):
    np.savez(path,
             raw_test=np.stack([e.samples for e in prepared.raw_test]),
             filt_test=np.stack([e.samples for e in prepared.filt_test]),
             init_std=np.stack([e.samples for e in prepared.init_std]),
             train_std=np.stack([e.samples for e in prepared.train_std]),
             scale=prepared.scale, dropped=prepared.dropped,
             epochs_total=prepared.n_total_epochs)


def cmd_preprocess(args) -> int:
    config = _config(args)
    prepared = prepare_data(config)
    out = _outdir(config)
    _save_epochs(out / "epochs.npz", prepared)
    print(f"epochs total={prepared.n_total_epochs} dropped_samples={prepared.dropped}")
    print(f"split: init={len(prepared.init_std)} train={len(prepared.train_std)} "
          f"test={len(prepared.raw_test)}")
    print(f"wrote {out / 'epochs.npz'}")
    return 0


def cmd_train(args) -> int:
    config = _config(args)
    prepared = prepare_data(config)
    out = _outdir(config)
    _save_epochs(out / "epochs.npz", prepared)
    dictionary, report = train_dictionary(config, prepared)
    persist_dictionary(dictionary, out / "dictionary.csodl")
    if report.final_state is not None:
        persist_state(report.final_state, out / "train_state.npz")
    report.to_csv(out / "train_report.csv")
    print(f"trained dictionary {dictionary.n}x{dictionary.k} "
          f"(scale={dictionary.scale:.6g}, {len(report.steps)} steps, "
          f"{len(report.reseed_events)} reseeds, {report.wall_time_s:.2f}s)")
    print(f"wrote {out / 'dictionary.csodl'}")
    return 0


def cmd_encode(args) -> int:
    config = _config(args)
    out = _outdir(config)
    m = args.m if args.m is not None else realized_m(config.n, args.cr)
    epochs_file = Path(args.epochs) if args.epochs else out / "epochs.npz"
    with np.load(epochs_file) as z:
        raw_test = z["raw_test"]
    phi = generate_sensing_matrix(m, config.n, config.seed_phi,
                                  config.ones_probability)
    Y = np.stack([encode(Epoch(row), phi).values for row in raw_test])
    target = out / f"measurements_m{m}.npz"
    np.savez(target, Y=Y, m=m, n=config.n, seed=phi.seed, p=phi.p,
             guard_events=len(phi.guard_events))
    print(f"encoded {Y.shape[0]} epochs at m={m} "
          f"(realized CR={compression_ratio(config.n, m):.4g})")
    print(f"wrote {target}")
    return 0


def cmd_reconstruct(args) -> int:
    config = _config(args)
    out = _outdir(config)
    with np.load(args.measurements) as z:
        Y, m, seed, p = z["Y"], int(z["m"]), int(z["seed"]), float(z["p"])
    phi = generate_sensing_matrix(m, config.n, seed, p)
    if args.basis == "joint":
        psi = Dictionary(joint_basis(config.n, config.wavelet, config.dwt_levels))
    else:
        dict_file = args.dictionary or str(out / "dictionary.csodl")
        psi = load_dictionary(dict_file).with_dc_atom()
    rows = []
    nnzs = []
    for yrow in Y:
        y = Measurements(values=yrow, phi_seed=seed, phi_shape=(m, config.n))
        epoch, code = basis_pursuit_reconstruct(y, phi, psi, config.solver)
        rows.append(epoch.samples)
        nnzs.append(code.nnz)
    target = out / f"recon_m{m}_{args.basis}.npz"
    np.savez(target, X=np.stack(rows), m=m, basis=args.basis)
    print(f"reconstructed {len(rows)} epochs with {args.basis} basis "
          f"(mean nnz={np.mean(nnzs):.2f})")
    print(f"wrote {target}")
    return 0


def cmd_evaluate(args) -> int:
    config = _config(args)
    out = _outdir(config)
    epochs_file = Path(args.epochs) if args.epochs else out / "epochs.npz"
    with np.load(epochs_file) as z:
        raw_test = z["raw_test"]
    with np.load(args.reconstructed) as z:
        X, m, basis = z["X"], int(z["m"]), str(z["basis"])
    if X.shape != raw_test.shape:
        raise SystemExit(f"shape mismatch: {X.shape} vs {raw_test.shape}")
    prds = [prd(o, r) for o, r in zip(raw_test, X)]
    print(f"basis={basis} m={m} realized_cr={compression_ratio(config.n, m):.4g} "
          f"prd_mean={np.mean(prds):.4f} prd_std={np.std(prds):.4f} "
          f"epochs={len(prds)}")
    target = out / f"evaluate_m{m}_{basis}.csv"
    with open(target, "w") as fh:
        fh.write("epoch,prd\n")
        for i, v in enumerate(prds):
            fh.write(f"{i},{v!r}\n")
    print(f"wrote {target}")
    return 0


def cmd_run(args) -> int:
    config = _config(args)
    rows = run_experiment(config)
    print(f"wrote {Path(config.output_dir) / 'results.csv'}")
    for r in rows:
        print(f"basis={r.basis:8s} cr={r.cr_realized:7.4f} m={r.m:4d} "
              f"prd_mean={r.prd_mean:8.4f} prd_std={r.prd_std:7.4f} "
              f"nnz_mean={r.nnz_mean:6.2f}")
    return 0


def cmd_sweep(args) -> int:
    config = _config(args)
    grid = {}
    for item in args.vary:
        try:
            dotted, values = item.split("=", 1)
        except ValueError:
            raise SystemExit(f"--vary must look like path=v1,v2 (got {item!r})")
        parsed = []
        for tok in values.split(","):
            try:
                parsed.append(int(tok))
            except ValueError:
                try:
                    parsed.append(float(tok))
                except ValueError:
                    parsed.append(tok)
        grid[dotted] = parsed
    if not grid:
        raise SystemExit("sweep needs at least one --vary path=v1,v2,...")
    cells, _lines = sweep(config, grid)
    failed = [c for c in cells if c["error"]]
    print(f"{len(cells)} cells, {len(failed)} failed")
    for c in failed:
        print(f"  cell {c['cell']} {c['params']}: {c['error']}")
    print(f"wrote {Path(config.output_dir) / 'sweep_results.csv'}")
    return 1 if len(failed) == len(cells) else 0


def cmd_inspect_dict(args) -> int:
    d = load_dictionary(args.file)
    print(f"file={args.file}")
    print(f"n={d.n} k={d.k} scale={d.scale!r}")
    print(f"seeds={','.join(str(s) for s in d.seeds) or '(none)'}")
    norms = np.linalg.norm(d.atoms, axis=0)
    print(f"atom_norms: min={norms.min():.6f} max={norms.max():.6f}")
    print(f"unit_norm_atoms={(np.abs(norms - 1.0) < 1e-9).sum()}/{d.k}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csodl",
        description="Compressive-sensing codec with online-learned dictionaries")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="ingest, filter, segment and split")
    _add_common(p)
    p.set_defaults(fn=cmd_preprocess)

    p = sub.add_parser("train", help="learn the dictionary from the training split")
    _add_common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("encode", help="random-encode the test epochs")
    _add_common(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--cr", type=float, help="nominal compression ratio")
    g.add_argument("--m", type=int, help="measurement count")
    p.add_argument("--epochs", help="epochs.npz from `preprocess` (default: output dir)")
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("reconstruct", help="recover epochs from measurements")
    _add_common(p)
    p.add_argument("--measurements", required=True, help="measurements .npz")
    p.add_argument("--basis", choices=["trained", "joint"], default="trained")
    p.add_argument("--dictionary", help="dictionary file (default: output dir)")
    p.set_defaults(fn=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="PRD of reconstructions vs originals")
    _add_common(p)
    p.add_argument("--reconstructed", required=True, help="recon .npz")
    p.add_argument("--epochs", help="epochs.npz from `preprocess` (default: output dir)")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("run", help="full experiment: train + CR sweep + tables")
    _add_common(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("sweep", help="cross a parameter grid over the config")
    _add_common(p)
    p.add_argument("--vary", action="append", default=[],
                   metavar="PATH=V1,V2", help="e.g. --vary odl.lam=0.05,0.1,0.2")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("inspect-dict", help="print dictionary file metadata")
    p.add_argument("file")
    p.set_defaults(fn=cmd_inspect_dict)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
