"""Budget CSV output, binary checkpoints, run manifests, run-directory lock.

CSV numbers are written with shortest round-trip decimal repr, so
parse(print(x)) == x for every binary64 value emitted.  Checkpoints are a
small binary container (JSON header + raw complex128 payload + SHA-256
checksum) and round-trip solver states bit-exactly.
"""

from __future__ import annotations

import contextlib
import hashlib
import json
import os
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .budgets import BudgetRow, BudgetSeries, a_alpha
from .damping import DampingSpec
from .errors import CheckpointError, GridMismatchError, NSDampError
from .spectral import Grid, SpectralField
from .stepping import SolverState

_CSV_COLUMNS = (
    "t",
    "l2_sq",
    "h1dot_sq",
    "h2dot_sq",
    "damp_l2",
    "grad_sq_mod",
    "weighted_grad",
    "log_grad_sq",
    "forcing_rhs",
    "int_l2_sq",
    "int_h1dot_sq",
    "int_h2dot_sq",
    "int_damp_l2",
    "int_grad_sq_mod",
    "int_weighted_grad",
    "int_log_grad_sq",
    "int_forcing_rhs",
    "envelope_h1",
    "resid_l2",
    "resid_h1",
    "blowup",
)

_CKPT_MAGIC = b"NSDCHK01"
_CKPT_VERSION = 1


def _h1_envelope_and_residuals(series: BudgetSeries):
    """Row-wise L2/H1 residuals and the H1 envelope column (see budgets)."""
    n = len(series)
    if n == 0:
        return np.zeros(0), np.zeros(0), np.zeros(0)
    spec = series.spec
    t = series.t
    alpha = spec.alpha if spec.kind != "none" else 0.0
    lhs_l2 = (
        series.column("l2_sq")
        + 2.0 * series.column("int_h1dot_sq")
        + 2.0 * alpha * series.column("int_damp_l2")
    )
    resid_l2 = lhs_l2 - series.rows[0].l2_sq
    h1 = series.column("h1dot_sq")
    h1_0 = series.rows[0].h1dot_sq
    if spec.kind == "log":
        env = h1_0 * np.exp(series.a_alpha * t)
        lhs_h1 = (
            h1
            + series.column("int_h2dot_sq")
            + alpha * series.column("int_grad_sq_mod")
            + alpha * series.column("int_log_grad_sq")
        )
    else:
        beta = spec.beta if spec.kind == "power" else 3.0
        env = h1_0 + series.column("int_forcing_rhs")
        lhs_h1 = (
            h1
            + series.column("int_h2dot_sq")
            + alpha * (beta - 1.0) * series.column("int_grad_sq_mod")
            + 2.0 * alpha * series.column("int_weighted_grad")
        )
    return env, resid_l2, lhs_h1 - env


def write_budget_csv(series: BudgetSeries, sink) -> None:
    """Write comment header (config echo) plus one row per BudgetRow."""
    echo = dict(series.config_echo)
    echo["a_alpha"] = series.a_alpha
    sink.write("# nsdamp budget v1\n")
    for key in sorted(echo):
        sink.write(f"# {key} = {json.dumps(echo[key])}\n")
    sink.write(",".join(_CSV_COLUMNS) + "\n")
    env, resid_l2, resid_h1 = _h1_envelope_and_residuals(series)
    for i, row in enumerate(series.rows):
        values = [getattr(row, c) for c in _CSV_COLUMNS[:17]]
        values += [env[i], resid_l2[i], resid_h1[i]]
        sink.write(",".join(repr(float(v)) for v in values))
        sink.write(f",{int(row.blowup)}\n")


def read_budget_csv(source) -> BudgetSeries:
    """Rebuild a BudgetSeries (rows and config echo) from a budget CSV."""
    echo = {}
    header = None
    rows = []
    for line in source:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if " = " in body:
                key, _, val = body.partition(" = ")
                echo[key.strip()] = json.loads(val)
            continue
        parts = line.split(",")
        if header is None:
            header = parts
            if tuple(header) != _CSV_COLUMNS:
                raise NSDampError(f"unexpected budget CSV columns: {header}")
            continue
        rows.append(parts)

    kind = echo.get("damping_kind", "none")
    spec = DampingSpec(
        kind=kind,
        alpha=echo.get("alpha") or 0.0,
        beta=echo.get("beta"),
    )
    series = BudgetSeries(spec=spec, config_echo=echo)
    for parts in rows:
        rec = dict(zip(_CSV_COLUMNS, parts))
        row = BudgetRow(t=float(rec["t"]))
        for name in _CSV_COLUMNS[1:17]:
            setattr(row, name, float(rec[name]))
        row.blowup = bool(int(rec["blowup"]))
        series.rows.append(row)  # cumulative columns already materialized
    return series


def checkpoint_save(state: SolverState, sink_or_path) -> None:
    """Serialize a solver state; load(save(state)) is bit-exact."""
    grid = state.u.grid
    payload = np.ascontiguousarray(state.u.coeffs, dtype=np.complex128).tobytes()
    header = json.dumps(
        {
            "format": "nsdamp-checkpoint",
            "version": _CKPT_VERSION,
            "dim": grid.dim,
            "n": grid.n,
            "box_length": grid.box_length,
            "t": state.t,
            "dt": state.dt,
            "step_count": state.step_count,
            "divergence_free": state.u.divergence_free,
            "shape": list(state.u.coeffs.shape),
        }
    ).encode("utf-8")
    digest = hashlib.sha256(header + payload).digest()
    blob = _CKPT_MAGIC + struct.pack("<Q", len(header)) + header + payload + digest
    if hasattr(sink_or_path, "write"):
        sink_or_path.write(blob)
    else:
        tmp = str(sink_or_path) + ".tmp"
        with open(tmp, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, sink_or_path)


def checkpoint_load(source_or_path, grid: Grid | None = None) -> SolverState:
    """Load and verify a checkpoint; optionally enforce a grid match."""
    if hasattr(source_or_path, "read"):
        blob = source_or_path.read()
    else:
        with open(source_or_path, "rb") as fh:
            blob = fh.read()
    if len(blob) < len(_CKPT_MAGIC) + 8 + 32 or blob[: len(_CKPT_MAGIC)] != _CKPT_MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic or truncated)")
    off = len(_CKPT_MAGIC)
    (hlen,) = struct.unpack("<Q", blob[off : off + 8])
    off += 8
    if len(blob) < off + hlen + 32:
        raise CheckpointError("truncated checkpoint header")
    header_bytes = blob[off : off + hlen]
    payload = blob[off + hlen : -32]
    digest = blob[-32:]
    if hashlib.sha256(header_bytes + payload).digest() != digest:
        raise CheckpointError("checksum mismatch (corrupted or truncated payload)")
    header = json.loads(header_bytes.decode("utf-8"))
    if header.get("version") != _CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('version')}")
    ckpt_grid = Grid(header["dim"], header["n"], header["box_length"])
    if grid is not None and ckpt_grid != grid:
        raise GridMismatchError(
            f"checkpoint grid (dim={ckpt_grid.dim}, n={ckpt_grid.n}, "
            f"L={ckpt_grid.box_length}) does not match the requested grid"
        )
    shape = tuple(header["shape"])
    expected_bytes = int(np.prod(shape)) * 16
    if len(payload) != expected_bytes:
        raise CheckpointError("payload size does not match declared shape")
    coeffs = np.frombuffer(payload, dtype=np.complex128).reshape(shape).copy()
    u = SpectralField(ckpt_grid, coeffs, divergence_free=header["divergence_free"])
    return SolverState(
        t=header["t"], u=u, step_count=header["step_count"], dt=header["dt"]
    )


@dataclass
class RunManifest:
    """Small JSON record written atomically at run end (or blow-up)."""

    config_echo: dict
    code_version: str
    started_at: float
    finished_at: float
    blown_up: bool
    outputs: list = field(default_factory=list)
    ns_threads: int | None = None

    def write(self, path) -> None:
        tmp = str(path) + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)


def max_threads() -> int | None:
    """Parallelism cap from NS_THREADS, if set."""
    value = os.environ.get("NS_THREADS")
    if value is None:
        return None
    try:
        return max(1, int(value))
    except ValueError:
        return None


@contextlib.contextmanager
def run_lock(directory):
    """Exclusive lock file; concurrent runs must use distinct directories."""
    path = os.path.join(directory, "run.lock")
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise NSDampError(
            f"run directory {directory!r} is locked by another run "
            f"(remove {path} if stale)"
        ) from None
    try:
        os.write(fd, f"pid {os.getpid()} at {time.time()}\n".encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            os.remove(path)
