"""Orchestration and persistence: ingestion, the train/encode/reconstruct/
evaluate experiment, parameter sweeps, and the on-disk artifact formats.

An experiment mirrors the three-node deployment: training-path epochs are
filtered server-side, test epochs are segmented only (their lineage flag is
asserted before encoding), and reconstruction compares the learned dictionary
against the pre-determined DCT-DWT joint basis over a list of compression
ratios. Every random choice is seeded and echoed into a manifest, so a rerun
of the same configuration reproduces each output byte for byte.
"""
from __future__ import annotations

import configparser
import dataclasses
import itertools
import struct
import sys
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from .bases import joint_basis
from .core import Dictionary, Epoch, SolverConfig, compression_ratio, prd
from .odl import OdlConfig, TrainState, init_dictionary, standardize_training_epochs, train
from .preprocess import FilterSpec, clean, segment, split_indices
from .sensing import encode, generate_sensing_matrix
from .solvers import basis_pursuit_reconstruct

RESULTS_HEADER = ("basis,cr_nominal,cr_realized,m,prd_mean,prd_std,nnz_mean,"
                  "epochs,lambda,epsilon,seed_split,seed_phi,seed_train")
DICT_MAGIC = b"CSODL1"
INGEST_FORMATS = ("csv-int16", "csv-float", "raw-le-int16")


class PipelineStageError(RuntimeError):
    """A stage failed; artifacts written before the failure are retained."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage


class DictionaryFileError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    data_path: str
    data_format: str = "csv-int16"
    gain: float = 0.005
    sample_rate_hz: float = 360.0
    filter_spec: FilterSpec = FilterSpec()
    n: int = 128
    k: int = 256
    split_init: int = 256
    split_train: int = 200
    seed_split: int = 7
    odl: OdlConfig = OdlConfig(seed=11)
    solver: SolverConfig = SolverConfig()
    cr_list: tuple = (2.0, 4.0, 8.0, 10.0)
    seed_phi: int = 13
    ones_probability: float = 0.5
    basis: str = "both"
    wavelet: str = "db4"
    dwt_levels: int = 4
    epsilon_mode: str = "relative"
    output_dir: str = "out"
    n_jobs: int = 1

    def __post_init__(self):
        if self.data_format not in INGEST_FORMATS:
            raise ValueError(f"unknown data format {self.data_format!r}")
        if self.basis not in ("trained", "joint", "both"):
            raise ValueError("basis must be trained, joint or both")
        if self.epsilon_mode not in ("absolute", "relative"):
            raise ValueError("epsilon_mode must be absolute or relative")
        if self.n < 1 or self.k < 1:
            raise ValueError("n and k must be positive")
        object.__setattr__(self, "cr_list", tuple(float(c) for c in self.cr_list))
        for cr in self.cr_list:
            m = realized_m(self.n, cr)
            if not 1 <= m <= self.n:
                raise ValueError(f"CR {cr} gives m={m} outside [1, {self.n}]")

    def selected_bases(self):
        return ("trained", "joint") if self.basis == "both" else (self.basis,)


def realized_m(n: int, cr: float) -> int:
    """Measurement count for a nominal ratio; the realized CR n/m is reported."""
    if cr <= 0:
        raise ValueError("CR must be positive")
    return max(1, min(n, int(round(n / cr))))


@dataclass(frozen=True)
class ResultRow:
    basis: str
    cr_nominal: float
    cr_realized: float
    m: int
    prd_mean: float
    prd_std: float
    nnz_mean: float
    epochs: int
    lam: float
    epsilon: float
    seed_split: int
    seed_phi: int
    seed_train: int

    def to_csv(self) -> str:
        return ",".join([
            self.basis, repr(self.cr_nominal), repr(self.cr_realized),
            str(self.m), repr(self.prd_mean), repr(self.prd_std),
            repr(self.nnz_mean), str(self.epochs), repr(self.lam),
            repr(self.epsilon), str(self.seed_split), str(self.seed_phi),
            str(self.seed_train),
        ])


def write_results_csv(rows, path) -> None:
    with open(path, "w") as fh:
        fh.write(RESULTS_HEADER + "\n")
        for r in rows:
            fh.write(r.to_csv() + "\n")


# ---------------------------------------------------------------------------
# ingestion

def _scan_lines(path, want_int):
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text:
                continue
            try:
                v = int(text) if want_int else float(text)
            except ValueError:
                kind = "integer" if want_int else "number"
                raise ValueError(
                    f"{path}: malformed {kind} at line {lineno}: {text!r}"
                ) from None
            if want_int and not -32768 <= v <= 32767:
                raise ValueError(
                    f"{path}: value out of int16 range at line {lineno}: {v}")
            values.append(v)
    return np.asarray(values, dtype=np.float64)


def ingest(path, data_format: str, gain: float = 0.005,
           sample_rate_hz: float = 360.0):
    """Read one single-channel record; returns (samples_mV, sample_rate).

    Integer formats are scaled by ``gain`` (mV per count) on ingestion;
    csv-float values are taken as-is.
    """
    if data_format not in INGEST_FORMATS:
        raise ValueError(f"unknown data format {data_format!r}")
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such data file: {path}")
    if data_format == "raw-le-int16":
        raw = np.fromfile(p, dtype="<i2")
        if raw.size == 0:
            raise ValueError(f"{path}: empty file")
        return raw.astype(np.float64) * gain, sample_rate_hz
    values = _scan_lines(p, want_int=(data_format == "csv-int16"))
    if values.size == 0:
        raise ValueError(f"{path}: empty file")
    if data_format == "csv-int16":
        values = values * gain
    return values, sample_rate_hz


# ---------------------------------------------------------------------------
# dictionary / state persistence

def persist_dictionary(dictionary: Dictionary, path) -> None:
    """Write magic, shape, scaling, seed chain, CRC32 and the column-major
    float64 payload."""
    atoms = np.asfortranarray(dictionary.atoms)
    payload = atoms.tobytes(order="F")
    seeds = [int(s) for s in dictionary.seeds]
    header = DICT_MAGIC + struct.pack(
        "<IIdB", dictionary.n, dictionary.k, float(dictionary.scale),
        len(seeds))
    header += struct.pack(f"<{len(seeds)}q", *seeds) if seeds else b""
    header += struct.pack("<I", zlib.crc32(payload))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_dictionary(path) -> Dictionary:
    blob = Path(path).read_bytes()
    if len(blob) < len(DICT_MAGIC) or blob[:len(DICT_MAGIC)] != DICT_MAGIC:
        raise DictionaryFileError(
            f"{path}: bad magic {blob[:len(DICT_MAGIC)]!r}, expected {DICT_MAGIC!r}")
    off = len(DICT_MAGIC)
    fixed = struct.calcsize("<IIdB")
    if len(blob) < off + fixed:
        raise DictionaryFileError(f"{path}: truncated header")
    n, k, scale, n_seeds = struct.unpack_from("<IIdB", blob, off)
    off += fixed
    seed_bytes = 8 * n_seeds
    if len(blob) < off + seed_bytes + 4:
        raise DictionaryFileError(f"{path}: truncated header")
    seeds = struct.unpack_from(f"<{n_seeds}q", blob, off) if n_seeds else ()
    off += seed_bytes
    (crc,) = struct.unpack_from("<I", blob, off)
    off += 4
    payload = blob[off:]
    if len(payload) != n * k * 8:
        raise DictionaryFileError(
            f"{path}: truncated payload ({len(payload)} bytes for {n}x{k})")
    if zlib.crc32(payload) != crc:
        raise DictionaryFileError(f"{path}: checksum mismatch")
    atoms = np.frombuffer(payload, dtype="<f8").reshape((n, k), order="F")
    return Dictionary(atoms, scale=scale, seeds=tuple(int(s) for s in seeds))


def persist_state(state: TrainState, path) -> None:
    np.savez(path, A=state.A, B=state.B, atoms=state.D.atoms,
             scale=state.D.scale, seeds=np.asarray(state.D.seeds, dtype=np.int64),
             t=state.t, rng_seed=state.rng_seed)


def load_state(path) -> TrainState:
    with np.load(path) as z:
        d = Dictionary(z["atoms"], scale=float(z["scale"]),
                       seeds=tuple(int(s) for s in z["seeds"]))
        return TrainState(A=z["A"], B=z["B"], D=d, t=int(z["t"]),
                          rng_seed=int(z["rng_seed"]))


# ---------------------------------------------------------------------------
# configuration file (INI with flag overrides)

def load_config(path, overrides=()) -> RunConfig:
    """Build a RunConfig from an INI file plus ``section.key=value`` overrides."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"no such config file: {path}")
    for item in overrides:
        try:
            dotted, value = item.split("=", 1)
            section, key = dotted.split(".", 1)
        except ValueError:
            raise ValueError(f"override must look like section.key=value: {item!r}") from None
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value)

    def get(section, key, conv, default):
        if parser.has_option(section, key):
            return conv(parser.get(section, key))
        return default

    data_path = get("data", "path", str, None)
    if data_path is None:
        raise ValueError("config must set data.path")
    fspec = FilterSpec(
        sample_rate_hz=get("data", "sample_rate_hz", float, 360.0),
        notch_freq_hz=get("filter", "notch_freq_hz", float, 60.0),
        notch_bandwidth_hz=get("filter", "notch_bandwidth_hz", float, 2.0),
        bandpass_low_hz=get("filter", "bandpass_low_hz", float, 0.5),
        bandpass_high_hz=get("filter", "bandpass_high_hz", float, 40.0),
        filter_order=get("filter", "filter_order", int, 2),
    )
    odl = OdlConfig(
        lam=get("dictionary", "lambda", float, 0.12),
        batch_size=get("dictionary", "batch_size", int, 1),
        passes=get("dictionary", "passes", int, 5),
        update_sweeps=get("dictionary", "update_sweeps", int, 1),
        seed=get("dictionary", "seed_train", int, 11),
    )
    solver = SolverConfig(
        lam=odl.lam,
        epsilon=get("reconstruct", "epsilon", float, 0.0),
        max_iterations=get("reconstruct", "max_iterations", int, 20000),
        convergence_tol=get("reconstruct", "convergence_tol", float, 1e-8),
    )
    cr_text = get("reconstruct", "cr_list", str, "2,4,8,10")
    cr_list = tuple(float(tok) for tok in cr_text.replace(" ", "").split(",") if tok)
    return RunConfig(
        data_path=data_path,
        data_format=get("data", "format", str, "csv-int16"),
        gain=get("data", "gain", float, 0.005),
        sample_rate_hz=fspec.sample_rate_hz,
        filter_spec=fspec,
        n=get("epochs", "n", int, 128),
        k=get("dictionary", "k", int, 256),
        split_init=get("epochs", "split_init", int, 256),
        split_train=get("epochs", "split_train", int, 200),
        seed_split=get("epochs", "seed_split", int, 7),
        odl=odl,
        solver=solver,
        cr_list=cr_list,
        seed_phi=get("sensing", "seed_phi", int, 13),
        ones_probability=get("sensing", "ones_probability", float, 0.5),
        basis=get("reconstruct", "basis", str, "both"),
        wavelet=get("reconstruct", "wavelet", str, "db4"),
        dwt_levels=get("reconstruct", "dwt_levels", int, 4),
        epsilon_mode=get("reconstruct", "epsilon_mode", str, "relative"),
        output_dir=get("output", "directory", str, "out"),
        n_jobs=get("reconstruct", "n_jobs", int, 1),
    )


def config_items(config: RunConfig):
    """Flatten a RunConfig into sorted (key, value) pairs for the manifest."""
    items = {}

    def add(prefix, obj):
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            if dataclasses.is_dataclass(v):
                add(f"{prefix}{f.name}.", v)
            else:
                items[f"{prefix}{f.name}"] = v

    add("config.", config)
    return sorted(items.items())


def write_manifest(path, config: RunConfig, extra) -> None:
    lines = [f"{k}={v}" for k, v in config_items(config)]
    lines += [f"{k}={v}" for k, v in sorted(extra.items())]
    lines += [
        f"versions.csodl={__version__}",
        f"versions.numpy={np.__version__}",
        f"versions.python={sys.version_info.major}.{sys.version_info.minor}.{sys.version_info.micro}",
        f"versions.scipy={__import__('scipy').__version__}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def write_solver_trace(solution, path) -> None:
    """Debug trace of one lasso solve as CSV."""
    with open(path, "w") as fh:
        fh.write("iteration,objective,kkt_residual\n")
        for it, obj, kkt in solution.trace:
            fh.write(f"{it},{obj!r},{kkt!r}\n")


# ---------------------------------------------------------------------------
# experiment stages

@dataclass
class PreparedData:
    raw_test: list
    filt_test: list
    init_std: list
    train_std: list
    scale: float
    dropped: int
    n_total_epochs: int


def prepare_data(config: RunConfig) -> PreparedData:
    """ingest -> filter (training path only) -> segment -> split -> standardize."""
    raw, _fs = ingest(config.data_path, config.data_format, config.gain,
                      config.sample_rate_hz)
    filtered = clean(raw, config.filter_spec)
    raw_epochs, dropped = segment(raw, config.n, filtered=False)
    filt_epochs, _ = segment(filtered, config.n, filtered=True)
    idx_init, idx_train, idx_test = split_indices(
        len(raw_epochs), (config.split_init, config.split_train),
        config.seed_split)
    init_f = [filt_epochs[i] for i in idx_init]
    train_f = [filt_epochs[i] for i in idx_train]
    raw_test = [raw_epochs[i] for i in idx_test]
    filt_test = [filt_epochs[i] for i in idx_test]
    std, scale = standardize_training_epochs(init_f + train_f)
    return PreparedData(raw_test=raw_test, filt_test=filt_test,
                        init_std=std[:len(init_f)], train_std=std[len(init_f):],
                        scale=scale, dropped=dropped,
                        n_total_epochs=len(raw_epochs))


def train_dictionary(config: RunConfig, prepared: PreparedData):
    """Initialize from the init split and run the online learning loop."""
    d0 = init_dictionary(prepared.init_std, config.k, config.odl.seed)
    d0 = Dictionary(d0.atoms, scale=prepared.scale, seeds=d0.seeds)
    trained, report = train(prepared.train_std, d0, config.odl)
    trained = Dictionary(trained.atoms, scale=prepared.scale,
                         seeds=tuple(trained.seeds) + (config.odl.seed,))
    return trained, report


def _reconstruct_one(y, phi, psi, solver_cfg, epsilon_mode):
    # "relative" reads config epsilon as a fraction of ||y|| per epoch; the
    # record never states an absolute noise floor, so this keeps one knob
    # meaningful across epochs of different energy
    if epsilon_mode == "relative":
        eps = solver_cfg.epsilon * float(np.linalg.norm(y.values))
        solver_cfg = replace(solver_cfg, epsilon=eps)
    ep, code, info = basis_pursuit_reconstruct(y, phi, psi, solver_cfg,
                                               return_info=True)
    return ep, code, info


def run_experiment(config: RunConfig, dictionary_cache: dict | None = None):
    """Execute the full protocol; returns the ResultRows written to disk."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    def stage(name, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except Exception as e:
            raise PipelineStageError(name, e) from e

    prepared = stage("prepare", prepare_data, config)
    if any(e.filtered for e in prepared.raw_test):
        raise PipelineStageError(
            "prepare", AssertionError("test epochs must not be filtered"))

    cache_key = _training_key(config)
    if dictionary_cache is not None and cache_key in dictionary_cache:
        trained, report = dictionary_cache[cache_key]
    else:
        trained, report = stage("train", train_dictionary, config, prepared)
        if dictionary_cache is not None:
            dictionary_cache[cache_key] = (trained, report)
    persist_dictionary(trained, out / "dictionary.csodl")
    if report.final_state is not None:
        persist_state(report.final_state, out / "train_state.npz")
    report.to_csv(out / "train_report.csv")

    bases_used = {}
    for name in config.selected_bases():
        if name == "trained":
            bases_used[name] = trained.with_dc_atom()
        else:
            bases_used[name] = Dictionary(
                joint_basis(config.n, config.wavelet, config.dwt_levels))

    rows = []
    per_epoch_lines = ["basis,cr_nominal,m,epoch,prd,prd_filtered_ref,nnz"]
    guard_meta = {}
    for cr in config.cr_list:
        m = realized_m(config.n, cr)
        # one seed for every CR: PCG64 fills row-major, so the per-CR
        # matrices are nested prefixes of a single run-wide random matrix
        phi = stage("sensing", generate_sensing_matrix, m, config.n,
                    config.seed_phi, config.ones_probability)
        guard_meta[f"phi.m{m}.guard_events"] = len(phi.guard_events)
        ys = stage("encode", lambda: [encode(e, phi) for e in prepared.raw_test])
        recon_first = {}
        for name in config.selected_bases():
            psi = bases_used[name]
            solve = delayed(_reconstruct_one)
            results = stage(
                f"reconstruct[{name}]",
                lambda: Parallel(n_jobs=config.n_jobs)(
                    solve(y, phi, psi, config.solver, config.epsilon_mode)
                    for y in ys))
            recon_first[name] = results[0][0]
            prds, prds_filt, nnzs = [], [], []
            for i, (ep_hat, code, _info) in enumerate(results):
                prds.append(prd(prepared.raw_test[i], ep_hat))
                prds_filt.append(prd(prepared.filt_test[i], ep_hat))
                nnzs.append(code.nnz)
                per_epoch_lines.append(
                    f"{name},{cr!r},{m},{i},{prds[-1]!r},{prds_filt[-1]!r},{code.nnz}")
            rows.append(ResultRow(
                basis=name, cr_nominal=cr,
                cr_realized=compression_ratio(config.n, m), m=m,
                prd_mean=float(np.mean(prds)), prd_std=float(np.std(prds)),
                nnz_mean=float(np.mean(nnzs)), epochs=len(prds),
                lam=config.odl.lam, epsilon=config.solver.epsilon,
                seed_split=config.seed_split, seed_phi=config.seed_phi,
                seed_train=config.odl.seed))
        _write_waveform(out / f"waveform_m{m}.csv", prepared.raw_test[0],
                        recon_first)

    write_results_csv(rows, out / "results.csv")
    (out / "prd_per_epoch.csv").write_text("\n".join(per_epoch_lines) + "\n")
    _write_secondary(rows, per_epoch_lines, out / "results_filtered_ref.csv")
    write_manifest(out / "manifest.txt", config, {
        "data.epochs_total": prepared.n_total_epochs,
        "data.samples_dropped": prepared.dropped,
        "split.test_epochs": len(prepared.raw_test),
        "dictionary.scale": prepared.scale,
        "dictionary.seeds": ",".join(str(s) for s in trained.seeds),
        **guard_meta,
    })
    return rows


def _write_waveform(path, original: Epoch, recon_by_basis: dict) -> None:
    names = [n for n in ("joint", "trained") if n in recon_by_basis]
    with open(path, "w") as fh:
        fh.write("sample,original," + ",".join(names) + "\n")
        for i in range(original.n):
            vals = ",".join(repr(float(recon_by_basis[n].samples[i])) for n in names)
            fh.write(f"{i},{float(original.samples[i])!r},{vals}\n")


def _write_secondary(rows, per_epoch_lines, path) -> None:
    """Same aggregation, but PRD referenced to the filtered test epochs."""
    by_key = {}
    for line in per_epoch_lines[1:]:
        basis, cr, m, _i, _p, pf, _nnz = line.split(",")
        by_key.setdefault((basis, cr, m), []).append(float(pf))
    with open(path, "w") as fh:
        fh.write("basis,cr_nominal,m,prd_filtered_mean,prd_filtered_std,epochs\n")
        for r in rows:
            vals = by_key[(r.basis, repr(r.cr_nominal), str(r.m))]
            fh.write(f"{r.basis},{r.cr_nominal!r},{r.m},"
                     f"{float(np.mean(vals))!r},{float(np.std(vals))!r},{len(vals)}\n")


# ---------------------------------------------------------------------------
# parameter sweeps

def _training_key(config: RunConfig):
    return (config.data_path, config.data_format, config.gain,
            config.sample_rate_hz, config.filter_spec, config.n, config.k,
            config.split_init, config.split_train, config.seed_split,
            config.odl)


def set_config_value(config: RunConfig, dotted: str, value):
    """Replace one possibly nested field, e.g. ``odl.lam`` or ``k``."""
    parts = dotted.split(".")
    if len(parts) == 1:
        return replace(config, **{parts[0]: value})
    head, rest = parts[0], ".".join(parts[1:])
    sub = set_config_value(getattr(config, head), rest, value)
    return replace(config, **{head: sub})


def sweep(base_config: RunConfig, grid: dict):
    """Run every cell of the cross product of ``grid`` over the base config.

    Trained dictionaries are cached by their training inputs, so cells that
    only vary sensing or reconstruction parameters reuse them. Failed cells
    are recorded and the sweep continues. Returns (cells, consolidated_lines).
    """
    keys = sorted(grid)
    cache: dict = {}
    out_root = Path(base_config.output_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    lines = ["cell,status," + ",".join(f"param:{k}" for k in keys) + ","
             + RESULTS_HEADER + ",error"]
    cells = []
    for idx, combo in enumerate(itertools.product(*(grid[k] for k in keys))):
        cfg = base_config
        for key, value in zip(keys, combo):
            cfg = set_config_value(cfg, key, value)
        cfg = replace(cfg, output_dir=str(out_root / f"cell_{idx:03d}"))
        coord = ",".join(str(v) for v in combo)
        try:
            rows = run_experiment(cfg, dictionary_cache=cache)
            for r in rows:
                lines.append(f"{idx},ok,{coord},{r.to_csv()},")
            cells.append({"cell": idx, "params": dict(zip(keys, combo)),
                          "rows": rows, "error": None})
        except Exception as e:  # noqa: BLE001 - cell isolation is the point
            empty = "," * (RESULTS_HEADER.count(",") )
            lines.append(f"{idx},failed,{coord},{empty},{e!r}")
            cells.append({"cell": idx, "params": dict(zip(keys, combo)),
                          "rows": [], "error": str(e)})
    (out_root / "sweep_results.csv").write_text("\n".join(lines) + "\n")
    return cells, lines
