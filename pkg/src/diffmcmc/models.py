"""Residual MLP noise predictor with score and energy parameterisations.

A single network body serves both model families: the score parameterisation
reads the network output directly as the predicted noise, the energy
parameterisation squares it into a scalar energy and recovers the noise from
the spatial gradient of that energy.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field, asdict

import numpy as np

from . import adgraph as ag

SCORE = "score"
ENERGY = "energy"


class CheckpointError(ValueError):
    """Unreadable, mismatched or truncated checkpoint file."""


@dataclass(frozen=True)
class ArchConfig:
    input_dim: int = 2
    hidden: int = 128
    inner: int = 256
    blocks: int = 4
    time_dim: int = 32
    timesteps: int = 100

    def __post_init__(self):
        for name, v in asdict(self).items():
            if v <= 0:
                raise ValueError(f"ArchConfig.{name} must be positive, got {v}")


def param_shapes(arch: ArchConfig) -> dict[str, tuple]:
    """Names and shapes of every learnable array, in a fixed order."""
    shapes: dict[str, tuple] = {
        "in.w": (arch.input_dim, arch.hidden),
        "in.b": (arch.hidden,),
    }
    for i in range(arch.blocks):
        shapes[f"blk{i}.norm.gain"] = (arch.hidden,)
        shapes[f"blk{i}.norm.shift"] = (arch.hidden,)
        shapes[f"blk{i}.fc1.w"] = (arch.hidden, arch.inner)
        shapes[f"blk{i}.fc1.b"] = (arch.inner,)
        shapes[f"blk{i}.time.w"] = (arch.time_dim, arch.inner)
        shapes[f"blk{i}.time.b"] = (arch.inner,)
        shapes[f"blk{i}.fc2.w"] = (arch.inner, arch.inner)
        shapes[f"blk{i}.fc2.b"] = (arch.inner,)
        shapes[f"blk{i}.fc3.w"] = (arch.inner, arch.hidden)
        shapes[f"blk{i}.fc3.b"] = (arch.hidden,)
    shapes["out.w"] = (arch.hidden, arch.input_dim)
    shapes["out.b"] = (arch.input_dim,)
    shapes["time_embed"] = (arch.timesteps + 1, arch.time_dim)
    return shapes


def init_params(arch: ArchConfig, seed: int) -> dict[str, np.ndarray]:
    """Fan-in-scaled uniform weights, zero biases, unit norm gains.

    The time-embedding table is standard normal; row 0 is allocated but the
    valid step range is 1..timesteps.
    """
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(arch).items():
        if name == "time_embed":
            params[name] = rng.standard_normal(shape)
        elif name.endswith(".w"):
            bound = 1.0 / np.sqrt(shape[0])
            params[name] = rng.uniform(-bound, bound, size=shape)
        elif name.endswith("norm.gain"):
            params[name] = np.ones(shape)
        else:  # biases and norm shifts
            params[name] = np.zeros(shape)
    return params


@dataclass
class DiffusionModel:
    params: dict[str, np.ndarray]
    parameterisation: str
    arch: ArchConfig = field(default_factory=ArchConfig)

    def __post_init__(self):
        if self.parameterisation not in (SCORE, ENERGY):
            raise ValueError(f"unknown parameterisation {self.parameterisation!r}")
        expected = param_shapes(self.arch)
        for name, shape in expected.items():
            if name not in self.params:
                raise ValueError(f"missing parameter array {name!r}")
            if self.params[name].shape != shape:
                raise ValueError(
                    f"parameter array {name!r} has shape {self.params[name].shape}, expected {shape}"
                )
        for name in self.params:
            if name not in expected:
                raise ValueError(f"unexpected parameter array {name!r}")


def new_model(parameterisation: str, arch: ArchConfig = ArchConfig(), seed: int = 0) -> DiffusionModel:
    return DiffusionModel(init_params(arch, seed), parameterisation, arch)


# ---------------------------------------------------------------------------
# network graph


def _as_batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def _t_indices(arch: ArchConfig, t, n: int) -> np.ndarray:
    t = np.asarray(t, dtype=np.intp)
    if t.ndim == 0:
        t = np.full(n, int(t), dtype=np.intp)
    if t.shape != (n,):
        raise ValueError(f"t has shape {t.shape}, expected scalar or ({n},)")
    if t.min() < 1 or t.max() > arch.timesteps:
        raise ValueError(f"step index out of range 1..{arch.timesteps}")
    return t


def param_nodes(model: DiffusionModel) -> dict[str, ag.Node]:
    return {name: ag.input_node(v) for name, v in model.params.items()}


def network_graph(arch: ArchConfig, params: dict[str, ag.Node], x: ag.Node, t: np.ndarray) -> ag.Node:
    """The shared residual body: returns the 2-vector head output per row."""
    emb = ag.embedding_lookup(params["time_embed"], t)
    h = ag.linear(x, params["in.w"], params["in.b"])
    for i in range(arch.blocks):
        blk = f"blk{i}."
        u = ag.layer_norm(h, params[blk + "norm.gain"], params[blk + "norm.shift"])
        u = ag.silu(u)
        u = ag.linear(u, params[blk + "fc1.w"], params[blk + "fc1.b"])
        u = ag.add(u, ag.linear(emb, params[blk + "time.w"], params[blk + "time.b"]))
        u = ag.silu(u)
        u = ag.linear(u, params[blk + "fc2.w"], params[blk + "fc2.b"])
        u = ag.silu(u)
        u = ag.linear(u, params[blk + "fc3.w"], params[blk + "fc3.b"])
        h = ag.add(h, u)
    return ag.linear(h, params["out.w"], params["out.b"])


def energy_graph(arch: ArchConfig, params: dict[str, ag.Node], x: ag.Node, t: np.ndarray) -> ag.Node:
    """Per-row energy ||s(x, t)||^2, shape (n,)."""
    s = network_graph(arch, params, x, t)
    return ag.sum_of_squares(s, axis=-1)


# ---------------------------------------------------------------------------
# fast inference path
#
# Sampling is evaluation-bound, so the forward pass and the input gradient
# are also written directly in numpy.  The graph builders above stay the
# differentiation authority (training runs through them); the test suite
# pins the two routes together at machine precision.


def _sigmoid(v: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-v))


def _time_projections(model: DiffusionModel, t: int) -> list[np.ndarray]:
    """Per-block projected time embedding for a fixed step (parameters are
    immutable after training, so this caches per step index)."""
    cache = getattr(model, "_t_proj_cache", None)
    if cache is None:
        cache = {}
        object.__setattr__(model, "_t_proj_cache", cache)
    if t not in cache:
        emb = model.params["time_embed"][t]
        cache[t] = [
            emb @ model.params[f"blk{i}.time.w"] + model.params[f"blk{i}.time.b"]
            for i in range(model.arch.blocks)
        ]
    return cache[t]


def _fast_forward(model: DiffusionModel, x: np.ndarray, t: np.ndarray, want_cache: bool = False):
    p = model.params
    scalar_t = t.min() == t.max()
    if scalar_t:
        projs = _time_projections(model, int(t[0]))
    else:
        emb = p["time_embed"][t]
    h = x @ p["in.w"]
    h += p["in.b"]
    cache = {"x": x, "h_in": [], "rstd": [], "xhat": [], "a": [], "sa": [], "c1": [], "s1": [], "c2": [], "s2": []}
    for i in range(model.arch.blocks):
        blk = f"blk{i}."
        mu = h.mean(axis=-1, keepdims=True)
        c = h - mu
        rstd = 1.0 / np.sqrt((c * c).mean(axis=-1, keepdims=True) + 1e-5)
        xhat = c * rstd
        a = xhat * p[blk + "norm.gain"]
        a += p[blk + "norm.shift"]
        sa = _sigmoid(a)
        c1 = (a * sa) @ p[blk + "fc1.w"]
        c1 += p[blk + "fc1.b"]
        if scalar_t:
            c1 += projs[i]
        else:
            c1 += emb @ p[blk + "time.w"] + p[blk + "time.b"]
        s1 = _sigmoid(c1)
        c2 = (c1 * s1) @ p[blk + "fc2.w"]
        c2 += p[blk + "fc2.b"]
        s2 = _sigmoid(c2)
        d = (c2 * s2) @ p[blk + "fc3.w"]
        d += p[blk + "fc3.b"]
        if want_cache:
            cache["h_in"].append(h)
            cache["rstd"].append(rstd)
            cache["xhat"].append(xhat)
            cache["a"].append(a)
            cache["sa"].append(sa)
            cache["c1"].append(c1)
            cache["s1"].append(s1)
            cache["c2"].append(c2)
            cache["s2"].append(s2)
        h = h + d
    out = h @ p["out.w"]
    out += p["out.b"]
    return (out, cache) if want_cache else (out, None)


def _silu_grad(u: np.ndarray, s: np.ndarray) -> np.ndarray:
    return s * (1.0 + u * (1.0 - s))


def _fast_input_gradient(model: DiffusionModel, x: np.ndarray, t: np.ndarray) -> np.ndarray:
    """d ||s(x, t)||^2 / dx by a hand-rolled reverse sweep over the body."""
    p = model.params
    out, cache = _fast_forward(model, x, t, want_cache=True)
    g_h = (2.0 * out) @ p["out.w"].T
    for i in reversed(range(model.arch.blocks)):
        blk = f"blk{i}."
        g_c2 = ((g_h @ p[blk + "fc3.w"].T) * _silu_grad(cache["c2"][i], cache["s2"][i]))
        g_c1 = (g_c2 @ p[blk + "fc2.w"].T) * _silu_grad(cache["c1"][i], cache["s1"][i])
        g_a = (g_c1 @ p[blk + "fc1.w"].T) * _silu_grad(cache["a"][i], cache["sa"][i])
        g_hat = g_a * p[blk + "norm.gain"]
        xhat = cache["xhat"][i]
        centered = g_hat - g_hat.mean(axis=-1, keepdims=True) - xhat * (g_hat * xhat).mean(axis=-1, keepdims=True)
        g_h = g_h + cache["rstd"][i] * centered
    return g_h @ p["in.w"].T


def net_forward(model: DiffusionModel, x, t) -> np.ndarray:
    xb, single = _as_batch(x)
    ti = _t_indices(model.arch, t, xb.shape[0])
    out, _ = _fast_forward(model, xb, ti)
    return out[0] if single else out


def net_forward_graph(model: DiffusionModel, x, t) -> np.ndarray:
    """Graph-route forward; the fast route must match it exactly."""
    xb, single = _as_batch(x)
    ti = _t_indices(model.arch, t, xb.shape[0])
    out = network_graph(model.arch, param_nodes(model), ag.input_node(xb), ti).value
    return out[0] if single else out


def energy_value(model: DiffusionModel, x, t) -> np.ndarray | float:
    if model.parameterisation != ENERGY:
        raise ValueError("energy_value requires an energy-parameterised model")
    xb, single = _as_batch(x)
    ti = _t_indices(model.arch, t, xb.shape[0])
    out, _ = _fast_forward(model, xb, ti)
    e = (out * out).sum(axis=-1)
    return float(e[0]) if single else e


def energy_input_gradient(model: DiffusionModel, x, t) -> np.ndarray:
    """d energy / d x, rows independent (gradient of the per-row energy)."""
    if model.parameterisation != ENERGY:
        raise ValueError("energy gradient requires an energy-parameterised model")
    xb, single = _as_batch(x)
    ti = _t_indices(model.arch, t, xb.shape[0])
    grad = _fast_input_gradient(model, xb, ti)
    return grad[0] if single else grad


def energy_input_gradient_graph(model: DiffusionModel, x, t) -> np.ndarray:
    """Graph-route input gradient; pins the fast reverse sweep in tests."""
    if model.parameterisation != ENERGY:
        raise ValueError("energy gradient requires an energy-parameterised model")
    xb, single = _as_batch(x)
    ti = _t_indices(model.arch, t, xb.shape[0])
    x_node = ag.input_node(xb)
    total = ag.reduce_sum(energy_graph(model.arch, param_nodes(model), x_node, ti))
    grad = ag.input_gradient_node(total, x_node).value
    return grad[0] if single else grad


def model_eps(model: DiffusionModel, x, t, schedule) -> np.ndarray:
    """Predicted noise: the network head for score models, sigma_t times the
    energy gradient for energy models.  The implied score is -eps/sigma_t."""
    if model.parameterisation == SCORE:
        return net_forward(model, x, t)
    xb, single = _as_batch(x)
    ti = _t_indices(model.arch, t, xb.shape[0])
    grad = energy_input_gradient(model, xb, ti)
    eps = schedule.sigma[ti][:, None] * grad
    return eps[0] if single else eps


# ---------------------------------------------------------------------------
# checkpoint persistence

CKPT_MAGIC = "diffmcmc-ckpt"
CKPT_VERSION = 1


def save_checkpoint(model: DiffusionModel, path: str, schedule_name: str = "", seed: int | None = None) -> None:
    """Self-describing single file: JSON header line + little-endian float64."""
    arrays = []
    offset = 0
    chunks = []
    for name in param_shapes(model.arch):
        v = model.params[name]
        raw = np.ascontiguousarray(v, dtype="<f8").tobytes()
        arrays.append({"name": name, "shape": list(v.shape), "offset": offset})
        offset += len(raw)
        chunks.append(raw)
    header = {
        "magic": CKPT_MAGIC,
        "format_version": CKPT_VERSION,
        "parameterisation": model.parameterisation,
        "schedule": schedule_name,
        "seed": seed,
        "arch": asdict(model.arch),
        "payload_bytes": offset,
        "arrays": arrays,
    }
    blob = json.dumps(header).encode() + b"\n" + b"".join(chunks)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str) -> DiffusionModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    nl = blob.find(b"\n")
    if nl < 0:
        raise CheckpointError(f"{path}: no header line found")
    try:
        header = json.loads(blob[:nl].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from exc
    if header.get("magic") != CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a {CKPT_MAGIC} file")
    if header.get("format_version") != CKPT_VERSION:
        raise CheckpointError(
            f"{path}: format_version {header.get('format_version')} unsupported (expected {CKPT_VERSION})"
        )
    payload = blob[nl + 1 :]
    if len(payload) != header.get("payload_bytes"):
        raise CheckpointError(
            f"{path}: truncated payload ({len(payload)} bytes, header says {header.get('payload_bytes')})"
        )
    arch = ArchConfig(**header["arch"])
    expected = param_shapes(arch)
    stored = {a["name"]: a for a in header["arrays"]}
    for name in expected:
        if name not in stored:
            raise CheckpointError(f"{path}: missing parameter array {name!r}")
    for name in stored:
        if name not in expected:
            raise CheckpointError(f"{path}: unexpected parameter array {name!r}")
    params: dict[str, np.ndarray] = {}
    for name, meta in stored.items():
        shape = tuple(meta["shape"])
        if shape != expected[name]:
            raise CheckpointError(f"{path}: parameter array {name!r} has shape {shape}, expected {expected[name]}")
        count = int(np.prod(shape)) if shape else 1
        start = meta["offset"]
        end = start + 8 * count
        if end > len(payload):
            raise CheckpointError(f"{path}: parameter array {name!r} extends past end of payload")
        params[name] = np.frombuffer(payload[start:end], dtype="<f8").reshape(shape).copy()
    return DiffusionModel(params, header["parameterisation"], arch)


def checkpoint_metadata(path: str) -> dict:
    """Header fields of a checkpoint without loading the payload."""
    with open(path, "rb") as fh:
        first = fh.readline()
    try:
        return json.loads(first.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from exc
