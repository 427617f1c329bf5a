"""Experiment orchestration: train components, sample the grid, tabulate.

Artifacts live under an output directory:

    out/
      run00/score_gmm.ckpt ... energy_bar.ckpt, loss_*.csv
      run00/samples/<entry>.csv, run00/acceptance/<entry>.csv
      metrics.csv      per (run, grid entry) metric rows
      table1.csv/.txt  aggregates over runs

Every random draw comes from a substream keyed by (run seed, purpose), so
results do not depend on execution order and reruns are byte-identical.
"""

from __future__ import annotations

import ctypes
import ctypes.util
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import composition as co
from . import diffusion as df
from . import metrics as mt
from . import models as mdl
from . import samplers as sp
from . import targets as tg


def tune_allocator() -> bool:
    """Keep large numpy temporaries on the heap instead of per-call mmaps.

    The sampler allocates thousands of multi-megabyte temporaries per second;
    glibc's default mmap threshold turns each into fresh page faults, roughly
    doubling evaluation cost.  Safe to call any number of times; returns False
    when the platform has no mallopt.
    """
    try:
        libc = ctypes.CDLL(ctypes.util.find_library("c") or "libc.so.6", use_errno=True)
        m_trim_threshold, m_mmap_threshold = -1, -3
        ok = libc.mallopt(m_mmap_threshold, 1 << 30)
        ok &= libc.mallopt(m_trim_threshold, 1 << 30)
        return bool(ok)
    except (OSError, AttributeError):
        return False


# substream purposes
_DATA, _TRAIN, _CHAIN, _TRUE_REF = 0, 1, 2, 3

GMM, BAR = "gmm", "bar"
COMPONENTS = (GMM, BAR)


def stream_rng(run_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=run_seed, spawn_key=tuple(key)))


def stream_seed(run_seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(entropy=run_seed, spawn_key=tuple(key)).generate_state(1)[0])


@dataclass(frozen=True)
class GridEntry:
    name: str
    parameterisation: str  # score | energy
    sampler: str  # reverse | ula | la | uhmc | hmc
    estimator_mode: str | None = None  # direct | line
    k: int | None = None
    path: str | None = None  # line | curve


def parse_grid_entry(name: str) -> GridEntry:
    """Grid entries look like 'score/HMC-5-line' or 'energy/U-LA'."""
    try:
        param, label = name.split("/")
    except ValueError:
        raise ValueError(f"grid entry {name!r} must look like 'score/HMC-5-line'") from None
    if param not in (mdl.SCORE, mdl.ENERGY):
        raise ValueError(f"unknown parameterisation in grid entry {name!r}")
    if label == "Reverse":
        return GridEntry(name, param, "reverse")
    if label == "U-LA":
        return GridEntry(name, param, "ula")
    if label == "U-HMC":
        return GridEntry(name, param, "uhmc")
    if label in ("LA", "HMC"):
        if param != mdl.ENERGY:
            raise ValueError(f"{name!r}: score models need a line-integral mesh, e.g. {label}-5-line")
        return GridEntry(name, param, label.lower(), "direct")
    parts = label.split("-")
    if len(parts) == 3 and parts[0] in ("LA", "HMC") and parts[2] in ("line", "curve"):
        if param != mdl.SCORE:
            raise ValueError(f"{name!r}: energy models difference their energies directly")
        sampler = parts[0].lower()
        k = int(parts[1])
        path = parts[2]
        if path == "curve" and sampler != "hmc":
            raise ValueError(f"{name!r}: curve paths only exist inside HMC")
        return GridEntry(name, param, sampler, "line", k, path)
    raise ValueError(f"unrecognised grid entry {name!r}")


TABLE1_GRID = tuple(
    parse_grid_entry(n)
    for n in (
        "energy/Reverse",
        "energy/U-LA",
        "energy/LA",
        "energy/U-HMC",
        "energy/HMC",
        "score/Reverse",
        "score/U-LA",
        "score/LA-3-line",
        "score/LA-5-line",
        "score/LA-10-line",
        "score/U-HMC",
        "score/HMC-3-line",
        "score/HMC-4-curve",
        "score/HMC-5-line",
        "score/HMC-10-line",
    )
)


@dataclass
class ExperimentConfig:
    master_seed: int = 0
    runs: int = 10
    n_samples: int = 2000
    timesteps: int = 100
    out_dir: str = "results"
    grid: tuple[str, ...] = tuple(e.name for e in TABLE1_GRID)
    train: df.TrainConfig = field(default_factory=df.TrainConfig)
    mcmc: sp.McmcConfig = field(default_factory=sp.McmcConfig)
    w2_convention: str = "sum"
    jobs: int = 1
    # explicit composition: ((checkpoint path, weight), ...); when set, the
    # grid samples this composition instead of the per-run trained product
    composition: tuple[tuple[str, float], ...] | None = None

    def entries(self) -> list[GridEntry]:
        return [parse_grid_entry(n) for n in self.grid]

    def run_seed(self, run_idx: int) -> int:
        return self.master_seed + run_idx


# config files are flat key=value text; dotted keys reach the sub-configs
_CONFIG_KEYS = {
    "master_seed": int,
    "runs": int,
    "n_samples": int,
    "timesteps": int,
    "out_dir": str,
    "w2_convention": str,
    "jobs": int,
    "train.dataset_size": int,
    "train.batch_size": int,
    "train.steps": int,
    "train.learning_rate": float,
    "train.lr_schedule": str,
    "mcmc.steps_per_t": int,
    "mcmc.leapfrogs": int,
    "mcmc.hmc_step_size": float,
    "mcmc.damping": float,
    "mcmc.la_step_size2": float,
    "mcmc.mcmc_at_t0": lambda s: s.strip().lower() in ("1", "true", "yes"),
}


def parse_composition(text: str) -> tuple[tuple[str, float], ...]:
    """'ckpt_a.ckpt:1.0, ckpt_b.ckpt:-0.5' -> ((path, weight), ...)."""
    parts = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        path, sep, weight = item.rpartition(":")
        if not sep or not path:
            raise ValueError(f"composition entry {item!r} must look like 'path.ckpt:weight'")
        try:
            parts.append((path.strip(), float(weight)))
        except ValueError:
            raise ValueError(f"composition entry {item!r} has a non-numeric weight") from None
    if not parts:
        raise ValueError("composition is empty")
    return tuple(parts)


def load_config_file(path: str) -> dict:
    values: dict = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            if key == "grid":
                values[key] = tuple(v.strip() for v in val.split(",") if v.strip())
            elif key == "composition":
                values[key] = parse_composition(val)
            elif key in _CONFIG_KEYS:
                values[key] = _CONFIG_KEYS[key](val)
            else:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
    return values


def build_config(file_values: dict | None = None, **overrides) -> ExperimentConfig:
    """Config file values first, then explicit overrides on top."""
    values = dict(file_values or {})
    values.update({k: v for k, v in overrides.items() if v is not None})
    train_kw = {k.split(".", 1)[1]: values.pop(k) for k in list(values) if k.startswith("train.")}
    mcmc_kw = {k.split(".", 1)[1]: values.pop(k) for k in list(values) if k.startswith("mcmc.")}
    cfg = ExperimentConfig(**values)
    if train_kw:
        cfg.train = replace(cfg.train, **train_kw)
    if mcmc_kw:
        cfg.mcmc = replace(cfg.mcmc, **mcmc_kw)
    for name in cfg.grid:
        parse_grid_entry(name)
    if cfg.w2_convention not in ("sum", "mean"):
        raise ValueError(f"unknown w2 convention {cfg.w2_convention!r}")
    return cfg


# ---------------------------------------------------------------------------
# file helpers


def _atomic_write(path: str, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def write_samples_csv(path: str, samples: np.ndarray) -> None:
    lines = ["x0,x1"] + [f"{_fmt(a)},{_fmt(b)}" for a, b in samples]
    _atomic_write(path, "\n".join(lines) + "\n")


def read_samples_csv(path: str) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if lineno == 1:
                if line != "x0,x1":
                    raise ValueError(f"{path}:{lineno}: expected header 'x0,x1', got {line!r}")
                continue
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two comma-separated values")
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric value in {line!r}") from None
    return np.array(rows, dtype=np.float64).reshape(-1, 2)


def run_dir(cfg: ExperimentConfig, run_idx: int) -> str:
    return os.path.join(cfg.out_dir, f"run{run_idx:02d}")


def checkpoint_path(cfg: ExperimentConfig, run_idx: int, parameterisation: str, component: str) -> str:
    return os.path.join(run_dir(cfg, run_idx), f"{parameterisation}_{component}.ckpt")


def entry_slug(entry: GridEntry) -> str:
    return entry.name.replace("/", "-")


def samples_path(cfg: ExperimentConfig, run_idx: int, entry: GridEntry) -> str:
    return os.path.join(run_dir(cfg, run_idx), "samples", entry_slug(entry) + ".csv")


def acceptance_path(cfg: ExperimentConfig, run_idx: int, entry: GridEntry) -> str:
    return os.path.join(run_dir(cfg, run_idx), "acceptance", entry_slug(entry) + ".csv")


# ---------------------------------------------------------------------------
# training


def component_dataset(cfg: ExperimentConfig, run_idx: int, component: str) -> np.ndarray:
    rng = stream_rng(cfg.run_seed(run_idx), _DATA, COMPONENTS.index(component))
    dist = tg.circle_gmm() if component == GMM else tg.bar_uniform()
    return tg.sample_component(dist, cfg.train.dataset_size, rng)


def train_component(cfg: ExperimentConfig, run_idx: int, parameterisation: str, component: str) -> str:
    """Train one component model and write its checkpoint + loss trace."""
    os.makedirs(run_dir(cfg, run_idx), exist_ok=True)
    path = checkpoint_path(cfg, run_idx, parameterisation, component)
    if os.path.exists(path):
        return path
    schedule = df.cosine_schedule(cfg.timesteps)
    seed = stream_seed(cfg.run_seed(run_idx), _TRAIN, (mdl.SCORE, mdl.ENERGY).index(parameterisation), COMPONENTS.index(component))
    arch = mdl.ArchConfig(timesteps=cfg.timesteps)
    model = mdl.new_model(parameterisation, arch, seed=seed)
    data = component_dataset(cfg, run_idx, component)
    train_cfg = replace(cfg.train, seed=seed)
    trained, trace = df.train_model(model, data, train_cfg, schedule)
    mdl.save_checkpoint(trained, path, schedule_name=schedule.name, seed=seed)
    trace_lines = ["step,loss"] + [f"{s},{_fmt(l)}" for s, l in trace]
    _atomic_write(os.path.join(run_dir(cfg, run_idx), f"loss_{parameterisation}_{component}.csv"), "\n".join(trace_lines) + "\n")
    return path


def train_run(cfg: ExperimentConfig, run_idx: int) -> dict[str, str]:
    """All four checkpoints (score/energy x gmm/bar) for one run."""
    needed = sorted({e.parameterisation for e in cfg.entries()}) or [mdl.SCORE, mdl.ENERGY]
    return {
        f"{param}_{component}": train_component(cfg, run_idx, param, component)
        for param in needed
        for component in COMPONENTS
    }


# ---------------------------------------------------------------------------
# sampling


def load_composition(cfg: ExperimentConfig, run_idx: int, parameterisation: str) -> co.CompositionSpec:
    if cfg.composition is not None:
        weighted = []
        for path, weight in cfg.composition:
            if not os.path.exists(path):
                raise FileNotFoundError(f"missing checkpoint {path} named by the composition")
            weighted.append((mdl.load_checkpoint(path), weight))
        spec = co.CompositionSpec(weighted)
        if parameterisation == mdl.ENERGY and not spec.all_energy:
            raise ValueError("energy grid entries need an all-energy composition")
        return spec
    parts = []
    for component in COMPONENTS:
        path = checkpoint_path(cfg, run_idx, parameterisation, component)
        if not os.path.exists(path):
            raise FileNotFoundError(f"missing checkpoint {path}; run `diffmcmc train` first")
        parts.append(mdl.load_checkpoint(path))
    return co.product(*parts)


_CANONICAL_ENTRY_IDS = {e.name: i for i, e in enumerate(TABLE1_GRID)}


def _entry_stream_id(cfg: ExperimentConfig, entry: GridEntry) -> int:
    """Chain substream id: stable for canonical entries regardless of how the
    grid is subset, positional (offset past the canonical ids) otherwise."""
    if entry.name in _CANONICAL_ENTRY_IDS:
        return _CANONICAL_ENTRY_IDS[entry.name]
    return len(TABLE1_GRID) + list(cfg.grid).index(entry.name)


def entry_estimator(cfg: ExperimentConfig, entry: GridEntry) -> sp.EnergyDiffEstimator | None:
    if entry.sampler in ("reverse", "ula", "uhmc"):
        return None
    if entry.estimator_mode == "direct":
        return sp.EnergyDiffEstimator("direct")
    if entry.path == "curve" and entry.k != cfg.mcmc.leapfrogs + 1:
        raise ValueError(
            f"{entry.name}: curve mesh has leapfrogs + 1 = {cfg.mcmc.leapfrogs + 1} points, not {entry.k}"
        )
    return sp.EnergyDiffEstimator("line", entry.k, entry.path)


def sample_entry(cfg: ExperimentConfig, run_idx: int, entry: GridEntry) -> str:
    """Generate the entry's sample file (and acceptance stats) for one run."""
    out_path = samples_path(cfg, run_idx, entry)
    if os.path.exists(out_path):
        return out_path
    os.makedirs(os.path.dirname(out_path), exist_ok=True)
    os.makedirs(os.path.dirname(acceptance_path(cfg, run_idx, entry)), exist_ok=True)
    schedule = df.cosine_schedule(cfg.timesteps)
    spec = load_composition(cfg, run_idx, entry.parameterisation)
    field = co.composed_score_field(spec, schedule)
    estimator = entry_estimator(cfg, entry)
    rng = stream_rng(cfg.run_seed(run_idx), _CHAIN, _entry_stream_id(cfg, entry))
    stats: list = []
    hook = None
    if entry.sampler != "reverse":
        hook = sp.make_mcmc_hook(field, estimator, cfg.mcmc, rng, entry.sampler, stats)
    batch = df.reverse_sample(
        lambda x, t: co.composed_eps(spec, x, t, schedule),
        cfg.n_samples,
        schedule,
        rng,
        hook=hook,
        origin=entry.name,
    )
    write_samples_csv(out_path, batch.samples)
    acc_lines = ["t,sampler,mean_acceptance"] + [f"{t},{s},{_fmt(r)}" for t, s, r in stats]
    _atomic_write(acceptance_path(cfg, run_idx, entry), "\n".join(acc_lines) + "\n")
    return out_path


# ---------------------------------------------------------------------------
# evaluation


METRICS_HEADER = "run_id,parameterisation,sampler,estimator,K,path,LL,W2,GMM,oos_count"


def metrics_path(cfg: ExperimentConfig) -> str:
    return os.path.join(cfg.out_dir, "metrics.csv")


def true_reference(cfg: ExperimentConfig, run_idx: int) -> np.ndarray:
    rng = stream_rng(cfg.run_seed(run_idx), _TRUE_REF)
    return tg.ProductTarget().sample(cfg.n_samples, rng)


def evaluate_entry(cfg: ExperimentConfig, run_idx: int, entry: GridEntry, target: tg.ProductTarget, true_ref: np.ndarray) -> str:
    samples = read_samples_csv(samples_path(cfg, run_idx, entry))
    ll = mt.ll_metric(samples, target)
    w2 = mt.w2_metric(samples, true_ref, convention=cfg.w2_convention)
    gmm = mt.gmm_cov_metric(samples, true_ref)
    return ",".join(
        [
            str(run_idx),
            entry.parameterisation,
            entry.sampler,
            entry.estimator_mode or "",
            str(entry.k) if entry.k is not None else "",
            entry.path or "",
            _fmt(ll.value),
            _fmt(w2),
            _fmt(gmm),
            str(ll.out_of_support),
        ]
    )


def evaluate_all(cfg: ExperimentConfig) -> tuple[list[str], list[str]]:
    """Metric rows for every (run, entry); returns (rows, missing sample files)."""
    target = tg.ProductTarget()
    rows, missing = [], []
    for run_idx in range(cfg.runs):
        true_ref = true_reference(cfg, run_idx)
        for entry in cfg.entries():
            path = samples_path(cfg, run_idx, entry)
            if not os.path.exists(path):
                missing.append(path)
                continue
            rows.append(evaluate_entry(cfg, run_idx, entry, target, true_ref))
    os.makedirs(cfg.out_dir, exist_ok=True)
    _atomic_write(metrics_path(cfg), "\n".join([METRICS_HEADER] + rows) + "\n")
    return rows, missing


def load_metric_rows(cfg: ExperimentConfig) -> dict[str, dict[int, tuple[float, float, float, int]]]:
    """metrics.csv contents keyed by entry name then run id -> (LL, W2, GMM, oos)."""
    out: dict[str, dict[int, tuple[float, float, float, int]]] = {}
    with open(metrics_path(cfg)) as fh:
        header = fh.readline().strip()
        if header != METRICS_HEADER:
            raise ValueError(f"unexpected metrics.csv header: {header!r}")
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != 10:
                continue
            run_id, param, sampler, mode, k, path = parts[:6]
            label = {"reverse": "Reverse", "ula": "U-LA", "uhmc": "U-HMC", "la": "LA", "hmc": "HMC"}[sampler]
            if mode == "line":
                label = f"{label}-{k}-{path}"
            name = f"{param}/{label}"
            out.setdefault(name, {})[int(run_id)] = (
                float(parts[6]),
                float(parts[7]),
                float(parts[8]),
                int(parts[9]),
            )
    return out


@dataclass(frozen=True)
class TableRow:
    name: str
    runs: int
    ll_mean: float
    ll_std: float
    w2_mean: float
    w2_std: float
    gmm_mean: float
    gmm_std: float


def aggregate_rows(cfg: ExperimentConfig) -> list[TableRow]:
    per_entry = load_metric_rows(cfg)
    rows = []
    for entry in cfg.entries():
        got = per_entry.get(entry.name, {})
        if not got:
            continue
        vals = np.array([got[r][:3] for r in sorted(got)])
        std = vals.std(axis=0, ddof=1) if len(vals) > 1 else np.zeros(3)
        rows.append(
            TableRow(
                entry.name,
                len(vals),
                float(vals[:, 0].mean()),
                float(std[0]),
                float(vals[:, 1].mean()),
                float(std[1]),
                float(vals[:, 2].mean()),
                float(std[2]),
            )
        )
    return rows


def render_table(rows: list[TableRow]) -> str:
    header = f"{'entry':<22} {'runs':>4}  {'LL':>18}  {'W2':>18}  {'GMM':>22}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r.name:<22} {r.runs:>4}  "
            f"{r.ll_mean:>9.3f} ± {r.ll_std:<6.3f}  "
            f"{r.w2_mean:>9.3f} ± {r.w2_std:<6.3f}  "
            f"{r.gmm_mean:>10.5f} ± {r.gmm_std:<8.5f}"
        )
    return "\n".join(lines) + "\n"


def write_table(cfg: ExperimentConfig) -> list[TableRow]:
    rows = aggregate_rows(cfg)
    csv_lines = ["entry,runs,LL_mean,LL_std,W2_mean,W2_std,GMM_mean,GMM_std"]
    for r in rows:
        csv_lines.append(
            f"{r.name},{r.runs},{_fmt(r.ll_mean)},{_fmt(r.ll_std)},{_fmt(r.w2_mean)},"
            f"{_fmt(r.w2_std)},{_fmt(r.gmm_mean)},{_fmt(r.gmm_std)}"
        )
    _atomic_write(os.path.join(cfg.out_dir, "table1.csv"), "\n".join(csv_lines) + "\n")
    _atomic_write(os.path.join(cfg.out_dir, "table1.txt"), render_table(rows))
    return rows


# ---------------------------------------------------------------------------
# job running


def _train_job(cfg: ExperimentConfig, run_idx: int, param: str, component: str) -> str:
    return train_component(cfg, run_idx, param, component)


def _sample_job(cfg: ExperimentConfig, run_idx: int, entry_name: str) -> str:
    return sample_entry(cfg, run_idx, parse_grid_entry(entry_name))


def _worker_init():
    tune_allocator()
    try:  # workers each keep one BLAS thread so they do not fight over cores
        import threadpoolctl

        threadpoolctl.threadpool_limits(1)
    except ImportError:
        pass


def run_jobs(jobs, workers: int) -> list:
    """Run (fn, args...) tuples, optionally in a process pool."""
    if workers <= 1:
        tune_allocator()
        return [fn(*args) for fn, *args in jobs]
    with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init) as pool:
        futures = [pool.submit(fn, *args) for fn, *args in jobs]
        return [f.result() for f in futures]


def config_echo(cfg: ExperimentConfig) -> str:
    """The reproducibility-relevant settings, as config-file text."""
    lines = [
        f"master_seed = {cfg.master_seed}",
        f"n_samples = {cfg.n_samples}",
        f"timesteps = {cfg.timesteps}",
        f"train.dataset_size = {cfg.train.dataset_size}",
        f"train.batch_size = {cfg.train.batch_size}",
        f"train.steps = {cfg.train.steps}",
        f"train.learning_rate = {cfg.train.learning_rate}",
        f"train.lr_schedule = {cfg.train.lr_schedule}",
        f"mcmc.steps_per_t = {cfg.mcmc.steps_per_t}",
        f"mcmc.leapfrogs = {cfg.mcmc.leapfrogs}",
        f"mcmc.hmc_step_size = {cfg.mcmc.hmc_step_size}",
        f"mcmc.damping = {cfg.mcmc.damping}",
        f"mcmc.la_step_size2 = {cfg.mcmc.la_step_size2}",
        f"mcmc.mcmc_at_t0 = {cfg.mcmc.mcmc_at_t0}",
    ]
    if cfg.composition is not None:
        lines.append("composition = " + ", ".join(f"{p}:{w}" for p, w in cfg.composition))
    return "\n".join(lines) + "\n"


def check_config_echo(cfg: ExperimentConfig) -> None:
    """Refuse to mix artifacts generated under a different configuration."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "config.txt")
    echo = config_echo(cfg)
    if os.path.exists(path):
        existing = open(path).read()
        if existing != echo:
            raise ValueError(
                f"{cfg.out_dir} holds artifacts for a different configuration; "
                f"delete it or point out_dir elsewhere ({path})"
            )
    else:
        _atomic_write(path, echo)


def cmd_train(cfg: ExperimentConfig) -> list[str]:
    check_config_echo(cfg)
    if cfg.composition is not None:
        return []  # explicit compositions sample existing checkpoints
    params = sorted({e.parameterisation for e in cfg.entries()})
    jobs = [
        (_train_job, cfg, run_idx, param, component)
        for run_idx in range(cfg.runs)
        for param in params
        for component in COMPONENTS
    ]
    return run_jobs(jobs, cfg.jobs)


def cmd_sample(cfg: ExperimentConfig) -> list[str]:
    check_config_echo(cfg)
    jobs = [
        (_sample_job, cfg, run_idx, entry.name)
        for run_idx in range(cfg.runs)
        for entry in cfg.entries()
    ]
    return run_jobs(jobs, cfg.jobs)


def cmd_eval(cfg: ExperimentConfig) -> tuple[list[str], list[str]]:
    return evaluate_all(cfg)


def cmd_table(cfg: ExperimentConfig) -> tuple[list[TableRow], list[str]]:
    if not os.path.exists(metrics_path(cfg)):
        evaluate_all(cfg)
    rows = write_table(cfg)
    missing = []
    for run_idx in range(cfg.runs):
        for entry in cfg.entries():
            if not os.path.exists(samples_path(cfg, run_idx, entry)):
                missing.append(samples_path(cfg, run_idx, entry))
    return rows, missing
