"""Linear-Gaussian multi-modal data with a shared essence and private nuisances.

Each modality is generated as::

    x_m = signal_scale * A_m y + nuisance_scale * B_m n_m + noise_scale_m * eps_m

with ``y`` shared across modalities and ``n_m``, ``eps_m`` independent per
modality, so every cross-modal dependence passes through ``y``. Labels are a
fixed function of ``y`` only.

Random streams are split so that the mixing matrices, the essence, the
nuisances and the noise can be re-drawn independently (see ``nuisance_seed``
in :func:`generate`).
"""
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

MIXINGS = ("orthonormal", "identity")


@dataclass
class GeneratorSpec:
    M: int = 3
    d_essence: int = 8
    d_nuisance: int = 8
    d_obs: int = 32
    noise_scale: list = field(default_factory=lambda: [0.1])
    signal_scale: float = 1.0
    nuisance_scale: float = 1.0
    num_classes: int = 4
    mixing: str = "orthonormal"
    squash: bool = False
    seed: int = 42

    def __post_init__(self):
        if self.M < 2:
            raise ConfigError(f"need at least two modalities, got M={self.M}")
        if self.d_essence < 1 or self.d_obs < 1 or self.d_nuisance < 0:
            raise ConfigError("d_essence and d_obs must be >= 1, d_nuisance >= 0")
        if self.num_classes < 0:
            raise ConfigError("num_classes must be >= 0 (0 selects a regression target)")
        if self.mixing not in MIXINGS:
            raise ConfigError(f"mixing must be one of {MIXINGS}, got {self.mixing!r}")
        if self.mixing == "identity" and (self.d_obs != self.d_essence or self.d_nuisance):
            raise ConfigError("identity mixing needs d_obs == d_essence and d_nuisance == 0")
        if self.signal_scale < 0 or self.nuisance_scale < 0:
            raise ConfigError("signal and nuisance scales must be nonnegative")
        scales = self.noise_scales
        if len(scales) != self.M or min(scales) < 0:
            raise ConfigError("noise_scale must be one nonnegative value or one per modality")

    @property
    def noise_scales(self):
        s = list(np.atleast_1d(np.asarray(self.noise_scale, dtype=np.float64)))
        return s * self.M if len(s) == 1 else s

    def to_dict(self):
        d = asdict(self)
        d["noise_scale"] = [float(s) for s in np.atleast_1d(self.noise_scale)]
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class SyntheticDataset:
    x: list
    y: np.ndarray
    nuisance: list
    labels: np.ndarray
    spec: GeneratorSpec
    indices: np.ndarray = None

    def __post_init__(self):
        n = self.y.shape[0]
        if self.indices is None:
            self.indices = np.arange(n)
        for arr in (*self.x, *self.nuisance, self.labels, self.indices):
            if arr.shape[0] != n:
                raise ConfigError("all dataset arrays must share the sample axis")

    def __len__(self):
        return self.y.shape[0]

    @property
    def is_classification(self):
        return self.spec.num_classes > 0

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return SyntheticDataset(
            [x[idx] for x in self.x],
            self.y[idx],
            [n[idx] for n in self.nuisance],
            self.labels[idx],
            self.spec,
            self.indices[idx],
        )


def _streams(seed):
    mix, ess, nui, noise, split = np.random.SeedSequence(seed).spawn(5)
    return mix, ess, nui, noise, split


def _orthonormal(rng, rows, cols):
    g = rng.normal(size=(rows, cols))
    if cols <= rows:
        return np.linalg.qr(g)[0]
    return g / np.sqrt(rows)


def mixing_matrices(spec):
    """Per-modality ``(A_m, B_m)`` and the label readout, drawn once per spec."""
    rng = np.random.default_rng(_streams(spec.seed)[0])
    mats = []
    for _ in range(spec.M):
        if spec.mixing == "identity":
            mats.append((np.eye(spec.d_obs), np.zeros((spec.d_obs, 0))))
            continue
        width = spec.d_essence + spec.d_nuisance
        if width <= spec.d_obs:
            q, _ = np.linalg.qr(rng.normal(size=(spec.d_obs, width)))
            A, B = q[:, : spec.d_essence], q[:, spec.d_essence:]
        else:
            A = _orthonormal(rng, spec.d_obs, spec.d_essence)
            B = _orthonormal(rng, spec.d_obs, spec.d_nuisance)
        mats.append((A, B))
    readout = rng.normal(size=(spec.d_essence, max(spec.num_classes, 1)))
    return mats, readout


def generate(spec, n, nuisance_seed=None):
    """Draw ``n`` samples. ``nuisance_seed`` re-draws only the nuisances."""
    if n < 1:
        raise ConfigError(f"need at least one sample, got {n}")
    spec.__post_init__()
    _, s_ess, s_nui, s_noise, _ = _streams(spec.seed)
    if nuisance_seed is not None:
        s_nui = np.random.SeedSequence(nuisance_seed)
    mats, readout = mixing_matrices(spec)
    y = np.random.default_rng(s_ess).normal(size=(n, spec.d_essence))
    nui_rng = np.random.default_rng(s_nui)
    noise_rng = np.random.default_rng(s_noise)
    xs, nuisances = [], []
    for (A, B), sigma in zip(mats, spec.noise_scales):
        nu = nui_rng.normal(size=(n, spec.d_nuisance))
        eps = noise_rng.normal(size=(n, spec.d_obs))
        x = spec.signal_scale * y @ A.T + spec.nuisance_scale * nu @ B.T + sigma * eps
        if spec.squash:
            x = np.tanh(x)
        xs.append(x)
        nuisances.append(nu)
    scores = y @ readout
    labels = scores.argmax(axis=1) if spec.num_classes > 0 else scores[:, 0]
    return SyntheticDataset(xs, y, nuisances, labels, spec)


def holdout_split(ds, fractions=(0.7, 0.15, 0.15), seed=None):
    """Seeded shuffle followed by a contiguous split by ``fractions``."""
    fractions = np.asarray(fractions, dtype=np.float64)
    if np.any(fractions < 0) or abs(fractions.sum() - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be nonnegative and sum to 1, got {fractions.tolist()}")
    stream = _streams(ds.spec.seed)[4] if seed is None else np.random.SeedSequence(seed)
    order = np.random.default_rng(stream).permutation(len(ds))
    cuts = np.rint(np.cumsum(fractions) * len(ds)).astype(int)
    cuts[-1] = len(ds)
    bounds = np.concatenate([[0], cuts])
    return tuple(ds.subset(order[lo:hi]) for lo, hi in zip(bounds[:-1], bounds[1:]))


def save_dataset(ds, directory):
    """Write CSV matrices plus ``manifest.json`` to ``directory``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    files = {"y": "y.csv", "labels": "labels.csv", "indices": "indices.csv"}
    np.savetxt(out / "y.csv", ds.y, delimiter=",", fmt="%.17g")
    np.savetxt(out / "labels.csv", ds.labels, delimiter=",", fmt="%.17g")
    np.savetxt(out / "indices.csv", ds.indices, delimiter=",", fmt="%d")
    for m, (x, nu) in enumerate(zip(ds.x, ds.nuisance)):
        files[f"x{m}"] = f"x{m}.csv"
        files[f"nuisance{m}"] = f"nuisance{m}.csv"
        np.savetxt(out / f"x{m}.csv", x, delimiter=",", fmt="%.17g")
        np.savetxt(out / f"nuisance{m}.csv", nu, delimiter=",", fmt="%.17g")
    manifest = {"spec": ds.spec.to_dict(), "n": len(ds), "files": files}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return out / "manifest.json"


def load_dataset(directory):
    src = Path(directory)
    manifest = json.loads((src / "manifest.json").read_text())
    spec = GeneratorSpec.from_dict(manifest["spec"])
    n = manifest["n"]

    def read(name, cols):
        arr = np.loadtxt(src / manifest["files"][name], delimiter=",", ndmin=2)
        return arr.reshape(n, cols)

    xs = [read(f"x{m}", spec.d_obs) for m in range(spec.M)]
    nus = [read(f"nuisance{m}", spec.d_nuisance) if spec.d_nuisance else np.zeros((n, 0)) for m in range(spec.M)]
    labels = read("labels", 1)[:, 0]
    if spec.num_classes > 0:
        labels = labels.astype(np.int64)
    indices = read("indices", 1)[:, 0].astype(np.int64)
    return SyntheticDataset(xs, read("y", spec.d_essence), nus, labels, spec, indices)
