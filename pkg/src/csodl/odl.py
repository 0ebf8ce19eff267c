"""Online dictionary learning: per-sample sparse coding plus block-coordinate
dictionary updates driven by the running accumulators A = sum(a a^T) and
B = sum(x a^T).

Each column update minimizes the accumulator surrogate
    g(D) = (1/t) * (0.5 * tr(D^T D A) - tr(D^T B))
over that column subject to ||d_j|| <= 1, so the surrogate can never increase
across an update; the training report records it before and after every step.

The loop is sequential by contract (state t depends on t-1). Coding within a
mini-batch is embarrassingly parallel; the accumulator merge is a plain sum.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Dictionary, Epoch, SolverConfig
from .solvers import sparse_code

# an atom whose accumulated energy stays below this is treated as unused
DEAD_ATOM_DIAG = 1e-10


class DictionaryDegenerateError(RuntimeError):
    """Raised when training ends with more than half of the atoms unused."""

    def __init__(self, message, dead_count=0, k=0):
        super().__init__(message)
        self.dead_count = dead_count
        self.k = k


@dataclass(frozen=True)
class TrainState:
    """Accumulators, current dictionary and sample counter of one ODL run."""

    A: np.ndarray
    B: np.ndarray
    D: Dictionary
    t: int
    rng_seed: int

    def __post_init__(self):
        a = np.asarray(self.A, dtype=np.float64)
        b = np.asarray(self.B, dtype=np.float64)
        k, n = self.D.k, self.D.n
        if a.shape != (k, k) or b.shape != (n, k):
            raise ValueError(
                f"accumulator shapes {a.shape}/{b.shape} do not match "
                f"dictionary {n}x{k}")
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)

    @classmethod
    def initial(cls, d0: Dictionary, seed: int = 0) -> "TrainState":
        return cls(A=np.zeros((d0.k, d0.k)), B=np.zeros((d0.n, d0.k)),
                   D=d0, t=0, rng_seed=int(seed))

    def validate(self, eig_floor: float = -1e-9) -> None:
        """Check the PSD/symmetry invariants of A (not run in hot loops)."""
        if self.t < 0:
            raise ValueError("t must be >= 0")
        asym = float(np.max(np.abs(self.A - self.A.T))) if self.A.size else 0.0
        if asym > 1e-12:
            raise ValueError(f"A asymmetric by {asym:.3e}")
        if self.A.size and float(np.linalg.eigvalsh(self.A)[0]) < eig_floor:
            raise ValueError("A has an eigenvalue below the PSD floor")


@dataclass(frozen=True)
class OdlConfig:
    lam: float = 0.12
    batch_size: int = 1
    passes: int = 5
    update_sweeps: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.batch_size < 1 or self.update_sweeps < 1:
            raise ValueError("batch_size and update_sweeps must be >= 1")
        # passes = 0 is allowed as the degenerate "return d0" run
        if self.passes < 0:
            raise ValueError("passes must be >= 0")

    def solver_config(self) -> SolverConfig:
        return SolverConfig(lam=self.lam)


@dataclass(frozen=True)
class StepInfo:
    t: int
    surrogate_pre: float
    surrogate_post: float
    nnz_mean: float
    dead_atoms: int
    recon_errors: tuple = ()


@dataclass
class TrainReport:
    steps: list = field(default_factory=list)
    reseed_events: list = field(default_factory=list)
    wall_time_s: float = 0.0
    final_state: TrainState | None = None

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,surrogate,nnz_mean,dead_atoms\n")
            for s in self.steps:
                fh.write(f"{s.t},{s.surrogate_post!r},{s.nnz_mean!r},{s.dead_atoms}\n")


def surrogate(atoms: np.ndarray, A: np.ndarray, B: np.ndarray, t: int) -> float:
    """(1/t)(0.5 tr(D^T D A) - tr(D^T B)): the quadratic the update descends."""
    if t < 1:
        raise ValueError("surrogate needs t >= 1")
    return (0.5 * float(np.vdot(atoms @ A, atoms)) - float(np.vdot(atoms, B))) / t


def dead_atom_indices(A: np.ndarray) -> np.ndarray:
    return np.flatnonzero(np.diag(A) < DEAD_ATOM_DIAG)


def standardize_training_epochs(epochs):
    """Remove each epoch's mean and scale by the pooled standard deviation.

    Returns (standardized epochs, scale); the scale is stored on the learned
    dictionary so later coding can reproduce the training scaling.
    """
    if not epochs:
        raise ValueError("no epochs to standardize")
    mat = np.stack([e.samples for e in epochs])
    mat = mat - mat.mean(axis=1, keepdims=True)
    scale = float(mat.std())
    if scale <= 0.0:
        scale = 1.0
    mat /= scale
    return ([Epoch(row, filtered=e.filtered) for row, e in zip(mat, epochs)],
            scale)


def init_dictionary(training_epochs, k: int, seed: int) -> Dictionary:
    """Draw k distinct epochs (without replacement) and unit-normalize them.

    Zero-norm epochs are skipped and replaced by the next draw.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    order = np.random.default_rng(seed).permutation(len(training_epochs))
    cols = []
    for i in order:
        s = training_epochs[i].samples
        nrm = float(np.linalg.norm(s))
        if nrm <= 1e-12:
            continue
        cols.append(s / nrm)
        if len(cols) == k:
            break
    if len(cols) < k:
        raise ValueError(
            f"only {len(cols)} usable epochs for a k={k} dictionary")
    return Dictionary(np.column_stack(cols), seeds=(int(seed),))


def dictionary_update(state: TrainState, sweeps: int = 1) -> Dictionary:
    """Block-coordinate pass over the columns given the current accumulators.

    Each live column moves to the unconstrained minimizer of the surrogate
    and is pulled back onto the unit ball when it leaves it; columns whose
    accumulated energy is below DEAD_ATOM_DIAG are left untouched.
    """
    if state.t < 1:
        raise ValueError("dictionary update requires t >= 1")
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    atoms = state.D.atoms.copy()
    A, B = state.A, state.B
    diag = np.diag(A)
    live = diag >= DEAD_ATOM_DIAG
    for _ in range(sweeps):
        for j in np.flatnonzero(live):
            u = atoms[:, j] + (B[:, j] - atoms @ A[:, j]) / diag[j]
            nrm = float(np.linalg.norm(u))
            if nrm > 1.0:
                u = u / nrm
            atoms[:, j] = u
    return Dictionary(atoms, scale=state.D.scale, seeds=state.D.seeds)


def absorb_batch(state: TrainState, epochs, config: OdlConfig):
    """Code a mini-batch against the current dictionary, fold it into the
    accumulators, then run the dictionary update. Returns (state, StepInfo).
    """
    if not epochs:
        raise ValueError("empty batch")
    solver_cfg = config.solver_config()
    A = state.A.copy()
    B = state.B.copy()
    nnz = []
    errors = []
    any_nonzero = False
    for ep in epochs:
        sol = sparse_code(ep, state.D, solver_cfg)
        alpha = sol.code.to_dense()
        nnz.append(sol.code.nnz)
        l1 = float(np.abs(sol.code.values).sum())
        errors.append(float(np.sqrt(max(2.0 * (sol.objective - config.lam * l1), 0.0))))
        if sol.code.nnz:
            any_nonzero = True
            A += np.outer(alpha, alpha)
            B += np.outer(ep.samples, alpha)
    t = state.t + len(epochs)
    new_state = TrainState(A=A, B=B, D=state.D, t=t, rng_seed=state.rng_seed)
    dead = dead_atom_indices(A)
    pre = surrogate(state.D.atoms, A, B, t)
    if any_nonzero:
        updated = dictionary_update(new_state, config.update_sweeps)
        new_state = replace(new_state, D=updated)
        post = surrogate(updated.atoms, A, B, t)
    else:
        # a zero batch adds no information; the update would be a no-op redo
        post = pre
    info = StepInfo(t=t, surrogate_pre=pre, surrogate_post=post,
                    nnz_mean=float(np.mean(nnz)), dead_atoms=int(dead.size),
                    recon_errors=tuple(errors))
    return new_state, info


def absorb_sample(state: TrainState, epoch, config: OdlConfig) -> TrainState:
    """Algorithm step for a single drawn sample (batch of one)."""
    new_state, _ = absorb_batch(state, [epoch], config)
    return new_state


def _reseed_dead_atoms(state: TrainState, candidates, events, pass_idx):
    """Replace never-used atoms with the worst-reconstructed recent epochs."""
    dead = dead_atom_indices(state.A)
    if dead.size == 0 or not candidates:
        return state
    atoms = state.D.atoms.copy()
    candidates = sorted(candidates, key=lambda c: -c[0])
    used = set()
    ci = 0
    for j in dead:
        while ci < len(candidates) and candidates[ci][1] in used:
            ci += 1
        if ci >= len(candidates):
            break
        err, idx, samples = candidates[ci]
        nrm = float(np.linalg.norm(samples))
        if nrm <= 1e-12 or err <= 1e-12:
            break
        atoms[:, int(j)] = samples / nrm
        used.add(idx)
        events.append({"pass": pass_idx, "atom": int(j), "epoch": int(idx),
                       "error": err})
        ci += 1
    d = Dictionary(atoms, scale=state.D.scale, seeds=state.D.seeds)
    return replace(state, D=d)


def train(epochs, d0: Dictionary, config: OdlConfig):
    """Run `passes` seeded shuffles of the training set through absorb_batch.

    Returns (dictionary, report). Deterministic given (epochs, d0, config);
    aborts when more than half of the atoms end up never used.
    """
    if not epochs:
        raise ValueError("empty training set")
    if any(e.n != d0.n for e in epochs):
        raise ValueError("epoch length does not match dictionary")
    started = time.perf_counter()
    state = TrainState.initial(d0, seed=config.seed)
    report = TrainReport()
    for pass_idx in range(config.passes):
        order = np.random.default_rng((config.seed, pass_idx)).permutation(len(epochs))
        candidates = []
        for lo in range(0, len(order), config.batch_size):
            batch_idx = order[lo:lo + config.batch_size]
            batch = [epochs[i] for i in batch_idx]
            state, info = absorb_batch(state, batch, config)
            report.steps.append(info)
            for err, i in zip(info.recon_errors, batch_idx):
                candidates.append((err, int(i), epochs[i].samples))
        state = _reseed_dead_atoms(state, candidates, report.reseed_events,
                                   pass_idx)
    if config.passes > 0:
        dead = dead_atom_indices(state.A)
        if dead.size > 0.5 * d0.k:
            raise DictionaryDegenerateError(
                f"{dead.size} of {d0.k} atoms never used after "
                f"{config.passes} passes over {len(epochs)} epochs",
                dead_count=int(dead.size), k=d0.k)
    report.wall_time_s = time.perf_counter() - started
    report.final_state = state
    return state.D, report
