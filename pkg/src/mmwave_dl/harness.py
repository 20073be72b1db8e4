"""Experiment orchestration: configs, datasets, model training and sweeps.

Every random quantity in an experiment is drawn from a stream derived from
the experiment seed and a fixed label (see :func:`stream`), so each CSV row
depends only on the configuration and the seed, not on which other rows
were computed or in what order.
"""

import copy
import csv
import hashlib
import io
import json
import math
import struct
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .channel import SystemConfig, build_dictionary, sample_channels
from .complex_linalg import SingularSystemError
from .dlcs import (amplitude_targets, build_cenn, estimate_all_users,
                   ls_reconstruct, predict_amplitude, select_support, train_cenn)
from .dlqp import (PrecoderPair, build_thpnn, exhaustion, hybrid_se, phases,
                   qals, stack_analog, to_dhpnn, train_thpnn, zf_digital)
from .metrics import CSV_COLUMNS, MetricRow, nmse, zf_rate
from .nn import StepDecay, load_network, save_network
from .nn.checkpoint import CheckpointError
from .sounding import measurement_matrix, sample_pilot_block, simulate_uplink

__all__ = ["TrainingConfig", "ExperimentConfig", "load_config", "load_preset",
           "PRESETS", "stream", "pilot_block", "Dataset", "DatasetError",
           "generate_dataset", "save_dataset", "load_dataset",
           "train_cenn_model", "train_thpnn_model", "cenn_path", "thpnn_path",
           "load_model", "ensure_cenn", "ensure_thpnn", "ModelMissingError",
           "evaluate_cell", "cell_channels", "run_sweep", "write_csv", "ESTIMATION_SCHEMES",
           "PRECODING_SCHEMES"]

PRESETS = ("paper-sec5",)
ESTIMATION_SCHEMES = ("dlcs", "omp", "dgmp", "oracle")
# "qals-<Q>" selects QALS with an explicit phase resolution
PRECODING_SCHEMES = ("dlqp", "qals", "exhaustion")


@dataclass
class TrainingConfig:
    """Dataset size and optimizer settings for one network."""

    samples: int = 100_000
    epochs: int = 1000
    n_batches: int = 50
    lr: float = 0.01
    decay_factor: float = 5.0
    decay_period: int = 400
    val_fraction: float = 0.1
    # precoder only: anneal the AQ sharpness from this value (None = fixed)
    sharpness_start: float = None

    def schedule(self):
        return StepDecay(self.lr, self.decay_factor, self.decay_period)


@dataclass
class ExperimentConfig:
    """A full experiment: system, sweep axes, training budgets and paths."""

    system: SystemConfig = field(default_factory=SystemConfig)
    snr_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    k_slots: tuple = (8,)
    j_sparsity: tuple = (6, 7)
    schemes: tuple = ("dlcs", "omp", "dgmp")
    n_trials: int = 1000
    seed: int = 0
    cenn: TrainingConfig = field(default_factory=TrainingConfig)
    thpnn: TrainingConfig = field(default_factory=lambda: TrainingConfig(
        samples=100_000, epochs=6000, n_batches=200, lr=0.01,
        decay_factor=2.0, decay_period=2000))
    exhaustion_draws: int = 30_000
    normalize_input: bool = False
    # one estimator trained over every SNR in ``snr_db`` instead of one per SNR
    mixed_snr: bool = False
    # sparsity of the estimator feeding the precoder dataset (None = first J)
    thpnn_sparsity: int = None
    checkpoint_dir: str = "checkpoints"
    out: str = "results.csv"

    def __post_init__(self):
        for name in ("snr_db", "k_slots", "j_sparsity", "schemes"):
            values = getattr(self, name)
            values = (values,) if np.isscalar(values) else tuple(values)
            if not values:
                raise ValueError(f"sweep axis {name!r} is empty")
            setattr(self, name, values)
        self.snr_db = tuple(float(s) for s in self.snr_db)
        self.k_slots = tuple(int(k) for k in self.k_slots)
        self.j_sparsity = tuple(int(j) for j in self.j_sparsity)
        for s in self.schemes:
            _check_scheme(s)
        if self.n_trials < 1:
            raise ValueError("n_trials must be positive")
        for K in self.k_slots:
            self.system.replace(n_slots=K)
        for J in self.j_sparsity:
            self.system.replace(sparsity=J)

    @property
    def front_end_sparsity(self):
        return self.thpnn_sparsity or self.j_sparsity[0]

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        d = asdict(self)
        d["system"] = self.system.to_dict()
        for key in ("snr_db", "k_slots", "j_sparsity", "schemes"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d):
        d = copy.deepcopy(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "system" in d:
            d["system"] = SystemConfig(**d["system"])
        for key in ("cenn", "thpnn"):
            if key in d:
                base = asdict(getattr(cls(), key))
                base.update(d[key])
                d[key] = TrainingConfig(**base)
        return cls(**d)


def _check_scheme(name):
    if name in ESTIMATION_SCHEMES or name in PRECODING_SCHEMES:
        return
    if name.startswith("qals-") and name[5:].isdigit() and int(name[5:]) >= 2:
        return
    raise ValueError(f"unknown scheme {name!r}")


def load_preset(name):
    """Shipped configuration by name (e.g. ``paper-sec5``)."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    text = resources.files("mmwave_dl.presets").joinpath(f"{name}.yaml").read_text()
    return ExperimentConfig.from_dict(yaml.safe_load(text))


def load_config(path=None, preset=None):
    """Read a YAML config, optionally layered over a preset.

    Keys in the file override the preset; nested sections (``system``,
    ``cenn``, ``thpnn``) are merged key by key.
    """
    base = load_preset(preset).to_dict() if preset else ExperimentConfig().to_dict()
    if path is not None:
        with open(path) as fh:
            user = yaml.safe_load(fh) or {}
        if not isinstance(user, dict):
            raise ValueError(f"{path}: expected a mapping at top level")
        for key, value in user.items():
            if isinstance(value, dict) and isinstance(base.get(key), dict):
                base[key] = {**base[key], **value}
            else:
                base[key] = value
    return ExperimentConfig.from_dict(base)


def _label_key(label):
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFF
    return zlib.crc32(repr(label).encode("utf-8"))


def stream(seed, *labels):
    """Independent generator for ``labels`` under the experiment ``seed``."""
    key = tuple(_label_key(lab) for lab in labels)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def _snr_tag(snr_db):
    return f"{float(snr_db):g}"


def pilot_block(exp, K):
    """The experiment's fixed pilot block for ``K`` slots."""
    cfg = exp.system.replace(n_slots=K)
    return sample_pilot_block(cfg, stream(exp.seed, "pilots", K))


def _link(exp, K):
    cfg = exp.system.replace(n_slots=K)
    dictionary = build_dictionary(cfg.n_antennas, cfg.grid_size)
    block = pilot_block(exp, K)
    return cfg, dictionary, block, measurement_matrix(block, dictionary)


def _noise_var(snr_db):
    return float(10.0 ** (-float(snr_db) / 10.0))


# --------------------------------------------------------------------------
# datasets

DATA_MAGIC = b"MMWDLDS\x00"
DATA_VERSION = 1


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    """Training pairs plus the header describing how they were made.

    For ``kind == "cenn"`` the inputs are correlation vectors ``c`` and the
    targets beamspace amplitudes ``g``; for ``"thpnn"`` the inputs are
    estimated channels and the targets true channels.  Records are stored
    in random order, so the first ``header["n_train"]`` rows form the
    training split and the rest the validation split.
    """

    header: dict
    inputs: np.ndarray
    targets: np.ndarray

    @property
    def kind(self):
        return self.header["kind"]

    @property
    def split(self):
        n_train = self.header["n_train"]
        n = len(self.inputs)
        return np.arange(n_train), np.arange(n_train, n)


def _snr_list(exp, snr_db):
    if snr_db == "mixed":
        return exp.snr_db
    return (float(snr_db),)


def generate_dataset(exp, kind, snr_db, K, count=None, cenn=None, seed=None):
    """Simulate a training set.

    Parameters
    ----------
    exp : ExperimentConfig
    kind : {'cenn', 'thpnn'}
    snr_db : float or 'mixed'
        ``'mixed'`` draws each record's SNR uniformly from ``exp.snr_db``.
    K : int
        Pilot slots.
    count : int, optional
        Number of records (defaults to the configured sample count).
    cenn : Network, optional
        Trained estimator; required for ``kind='thpnn'``.
    seed : int, optional
        Overrides ``exp.seed`` for the channel and noise draws (the pilot
        block always follows ``exp.seed``).

    Returns
    -------
    Dataset
    """
    if kind not in ("cenn", "thpnn"):
        raise ValueError(f"unknown dataset kind {kind!r}")
    if kind == "thpnn" and cenn is None:
        raise ModelMissingError("a trained estimator is required for precoder data")
    train = exp.cenn if kind == "cenn" else exp.thpnn
    count = int(train.samples if count is None else count)
    if count < 1:
        raise ValueError("count must be positive")
    seed = exp.seed if seed is None else int(seed)
    tag = "mixed" if snr_db == "mixed" else _snr_tag(snr_db)
    cfg, dictionary, block, phi = _link(exp, K)
    h, _, _ = sample_channels(cfg, count, stream(seed, "data", kind, tag, K, "channels"))
    snrs = np.asarray(_snr_list(exp, snr_db))
    if len(snrs) == 1:
        var = _noise_var(snrs[0])
    else:
        pick = stream(seed, "data", kind, tag, K, "snr").integers(0, len(snrs), size=count)
        var = 10.0 ** (-snrs[pick] / 10.0)
    rec = simulate_uplink(h, block, var, stream(seed, "data", kind, tag, K, "noise"), phi=phi)
    if kind == "cenn":
        c = rec.c
        inputs = np.concatenate([c.real, c.imag], axis=1)
        targets = amplitude_targets(h, dictionary)
    else:
        J = exp.front_end_sparsity
        g_hat = predict_amplitude(cenn, rec.c, exp.normalize_input)
        supports = select_support(g_hat, J)
        h_hat = np.stack([ls_reconstruct(phi, r, s, dictionary).h
                          for r, s in zip(rec.r, supports)])
        inputs = np.concatenate([h_hat.real, h_hat.imag], axis=1)
        targets = np.concatenate([h.real, h.imag], axis=1)
    n_val = int(round(count * train.val_fraction))
    if count - n_val < 1:
        raise ValueError("dataset too small to split")
    header = {
        "kind": kind, "count": count, "seed": seed, "snr_db": tag,
        "noise_var": float(np.mean(var)), "k_slots": int(K),
        "grid_size": cfg.grid_size, "n_antennas": cfg.n_antennas,
        "block_digest": block.digest(), "n_train": count - n_val, "n_val": n_val,
        "input_width": int(inputs.shape[1]), "target_width": int(targets.shape[1]),
    }
    if kind == "thpnn":
        header["sparsity"] = exp.front_end_sparsity
    return Dataset(header=header, inputs=inputs, targets=targets)


def save_dataset(ds, path):
    """Write a dataset file.

    Layout: magic ``b"MMWDLDS\\x00"``, ``<IQ`` (format version, header
    length), a UTF-8 JSON header, then ``count`` records of
    ``input_width + target_width`` little-endian 8-byte floats.  Complex
    vectors are stored as all real parts followed by all imaginary parts.
    """
    blob = json.dumps(ds.header, sort_keys=True).encode("utf-8")
    records = np.concatenate([ds.inputs, ds.targets], axis=1)
    with open(path, "wb") as fh:
        fh.write(DATA_MAGIC)
        fh.write(struct.pack("<IQ", DATA_VERSION, len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(records, dtype="<f8").tobytes())


def load_dataset(path):
    with open(path, "rb") as fh:
        if fh.read(len(DATA_MAGIC)) != DATA_MAGIC:
            raise DatasetError(f"{path}: not a dataset file")
        fixed = fh.read(12)
        if len(fixed) != 12:
            raise DatasetError(f"{path}: truncated header")
        version, n = struct.unpack("<IQ", fixed)
        if version != DATA_VERSION:
            raise DatasetError(f"{path}: unsupported dataset version {version}")
        try:
            header = json.loads(fh.read(n).decode("utf-8"))
            width = header["input_width"] + header["target_width"]
            count = header["count"]
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError) as exc:
            raise DatasetError(f"{path}: corrupted header ({exc})") from None
        raw = fh.read()
    if len(raw) != 8 * width * count:
        raise DatasetError(f"{path}: expected {count} records, payload has {len(raw)} bytes")
    records = np.frombuffer(raw, dtype="<f8").reshape(count, width).astype(float)
    w = header["input_width"]
    return Dataset(header=header, inputs=records[:, :w], targets=records[:, w:])


def _complex_halves(x):
    n = x.shape[1] // 2
    return x[:, :n] + 1j * x[:, n:]


# --------------------------------------------------------------------------
# models

class ModelMissingError(FileNotFoundError):
    pass


def _fingerprint(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode("utf-8")).hexdigest()[:16]


def _cenn_identity(exp, snr_db, K):
    return {"kind": "cenn", "system": exp.system.to_dict(), "training": asdict(exp.cenn),
            "snr_db": "mixed" if snr_db == "mixed" else float(snr_db),
            "mixed_snrs": list(exp.snr_db) if snr_db == "mixed" else None,
            "k_slots": int(K), "seed": int(exp.seed), "normalize": exp.normalize_input}


def _thpnn_identity(exp, snr_db, K):
    return {"kind": "thpnn", "front_end": _cenn_identity(exp, snr_db, K),
            "training": asdict(exp.thpnn), "sparsity": exp.front_end_sparsity}


def _model_snr(exp, snr_db):
    return "mixed" if exp.mixed_snr else float(snr_db)


def cenn_path(exp, snr_db, K, directory=None):
    tag = "mixed" if _model_snr(exp, snr_db) == "mixed" else _snr_tag(snr_db)
    d = Path(directory or exp.checkpoint_dir)
    return d / f"cenn_snr{tag}_k{K}_seed{exp.seed}.ckpt"


def thpnn_path(exp, snr_db, K, directory=None):
    tag = "mixed" if _model_snr(exp, snr_db) == "mixed" else _snr_tag(snr_db)
    d = Path(directory or exp.checkpoint_dir)
    return d / f"thpnn_snr{tag}_k{K}_j{exp.front_end_sparsity}_seed{exp.seed}.ckpt"


def train_cenn_model(exp, snr_db, K, dataset=None, log=None):
    """Build and train the amplitude network for one (SNR, K) point.

    Returns ``(net, history, meta)``; ``meta`` identifies the training
    setup and is stored in the checkpoint.
    """
    snr = _model_snr(exp, snr_db)
    tag = "mixed" if snr == "mixed" else _snr_tag(snr)
    ds = dataset or generate_dataset(exp, "cenn", snr, K)
    if ds.kind != "cenn":
        raise DatasetError("expected an estimator dataset")
    cfg = exp.system.replace(n_slots=K)
    net = build_cenn(cfg, stream(exp.seed, "init", "cenn", tag, K))
    hist = train_cenn(net, _complex_halves(ds.inputs), ds.targets, exp.cenn.epochs,
                      stream(exp.seed, "train", "cenn", tag, K),
                      schedule=exp.cenn.schedule(), n_batches=exp.cenn.n_batches,
                      normalize=exp.normalize_input, split=ds.split, log=log)
    identity = _cenn_identity(exp, snr, K)
    meta = {"identity": identity, "fingerprint": _fingerprint(identity),
            "dataset": ds.header, "history": asdict(hist)}
    return net, hist, meta


def train_thpnn_model(exp, snr_db, K, cenn, dataset=None, log=None):
    """Train the precoder network on estimates from the trained ``cenn``."""
    snr = _model_snr(exp, snr_db)
    tag = "mixed" if snr == "mixed" else _snr_tag(snr)
    ds = dataset or generate_dataset(exp, "thpnn", snr, K, cenn=cenn)
    if ds.kind != "thpnn":
        raise DatasetError("expected a precoder dataset")
    net = build_thpnn(exp.system, stream(exp.seed, "init", "thpnn", tag, K))
    hist = train_thpnn(net, _complex_halves(ds.inputs), _complex_halves(ds.targets),
                       exp.thpnn.epochs, stream(exp.seed, "train", "thpnn", tag, K),
                       schedule=exp.thpnn.schedule(), n_batches=exp.thpnn.n_batches,
                       split=ds.split, sharpness_start=exp.thpnn.sharpness_start, log=log)
    identity = _thpnn_identity(exp, snr, K)
    meta = {"identity": identity, "fingerprint": _fingerprint(identity),
            "dataset": ds.header, "history": asdict(hist)}
    return net, hist, meta


def load_model(path, identity=None):
    """Load a checkpoint, optionally checking it matches ``identity``."""
    path = Path(path)
    if not path.exists():
        raise ModelMissingError(f"missing checkpoint {path}")
    net, meta = load_network(path)
    if identity is not None and meta.get("fingerprint") != _fingerprint(identity):
        raise CheckpointError(f"{path} was trained with a different configuration")
    return net, meta


def ensure_cenn(exp, snr_db, K, train_missing=True, log=None):
    """Load the estimator for (SNR, K) from the checkpoint directory.

    When it is absent (and ``train_missing``) it is trained and saved.
    """
    path = cenn_path(exp, snr_db, K)
    identity = _cenn_identity(exp, _model_snr(exp, snr_db), K)
    if path.exists() or not train_missing:
        return load_model(path, identity)[0]
    net, _, meta = train_cenn_model(exp, snr_db, K, log=log)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_network(net, path, meta)
    return net


def ensure_thpnn(exp, snr_db, K, train_missing=True, log=None):
    """Like :func:`ensure_cenn` for the precoder network (training mode copy)."""
    path = thpnn_path(exp, snr_db, K)
    identity = _thpnn_identity(exp, _model_snr(exp, snr_db), K)
    if path.exists() or not train_missing:
        return load_model(path, identity)[0]
    cenn = ensure_cenn(exp, snr_db, K, train_missing, log)
    net, _, meta = train_thpnn_model(exp, snr_db, K, cenn, log=log)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_network(net, path, meta)
    return net


# --------------------------------------------------------------------------
# evaluation

def _needs_cenn(schemes):
    return any(s == "dlcs" or s not in ESTIMATION_SCHEMES for s in schemes)


def _needs_thpnn(schemes):
    return "dlqp" in schemes


def _mean_stderr(values):
    v = np.asarray([x for x in values if np.isfinite(x)], dtype=float)
    if len(v) == 0:
        return float("nan"), float("nan")
    if len(v) == 1:
        return float(v[0]), float("nan")
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))


def cell_channels(exp, snr_db, K, n_trials=None):
    """Monte-Carlo channel sets for one cell, shape ``(n_trials, U, N_A)``."""
    n_trials = exp.n_trials if n_trials is None else n_trials
    cfg = exp.system.replace(n_slots=K)
    U = cfg.n_users
    rng = stream(exp.seed, "test", _snr_tag(snr_db), K, "channels")
    h, _, _ = sample_channels(cfg, n_trials * U, rng)
    return h.reshape(n_trials, U, cfg.n_antennas)


def evaluate_cell(exp, snr_db, K, cenn=None, thpnn=None, schemes=None, n_trials=None):
    """Metric rows for every scheme and sparsity at one (SNR, K) point.

    All schemes see the same channels and the same pilot noise.  Estimation
    schemes report NMSE and the fully-digital ZF rate of their estimate;
    precoding schemes report the NMSE of the estimate they were designed
    on and the hybrid rate.  Trials whose linear systems are singular are
    counted in ``fail_count`` and left out of the means.
    """
    schemes = exp.schemes if schemes is None else tuple(schemes)
    if _needs_cenn(schemes) and cenn is None:
        raise ModelMissingError("dlcs-based schemes need a trained estimator")
    if _needs_thpnn(schemes) and thpnn is None:
        raise ModelMissingError("dlqp needs a trained precoder network")
    cfg, dictionary, block, phi = _link(exp, K)
    var = _noise_var(snr_db)
    H = cell_channels(exp, snr_db, K, n_trials)
    n, U, N_A = H.shape
    flat = H.reshape(n * U, N_A)
    rec = simulate_uplink(flat, block, var,
                          stream(exp.seed, "test", _snr_tag(snr_db), K, "noise"), phi=phi)
    dhpnn = to_dhpnn(thpnn) if thpnn is not None else None
    Q = cfg.phase_levels
    rows = []
    for J in exp.j_sparsity:
        cache = {}

        def estimate(scheme):
            if scheme not in cache:
                try:
                    est = estimate_all_users(flat, block, dictionary, phi, scheme, J, var,
                                             None, net=cenn, normalize=exp.normalize_input,
                                             record=rec)
                    cache[scheme] = (est.reshape(n, U, N_A), None)
                except SingularSystemError:
                    cache[scheme] = _estimate_per_trial(flat, block, dictionary, phi, scheme,
                                                        J, var, cenn, exp, rec, n, U)
            return cache[scheme]

        for scheme in schemes:
            est_scheme = scheme if scheme in ESTIMATION_SCHEMES else "dlcs"
            H_hat, bad = estimate(est_scheme)
            bad = np.zeros(n, bool) if bad is None else bad
            err, se = np.full(n, np.nan), np.full(n, np.nan)
            if scheme in ESTIMATION_SCHEMES:
                for t in np.flatnonzero(~bad):
                    err[t] = nmse(H_hat[t], H[t])
                    se[t] = zf_rate(H_hat[t], H[t], var)
            else:
                ex_rng = stream(exp.seed, "exhaustion", _snr_tag(snr_db), K, J)
                for t in np.flatnonzero(~bad):
                    err[t] = nmse(H_hat[t], H[t])
                    se[t] = _precode(scheme, H_hat[t], H[t], var, Q, dhpnn, exp, ex_rng)
            fails = int(np.sum(~np.isfinite(se)))
            nm, ns = _mean_stderr(err)
            sm, ss = _mean_stderr(se)
            rows.append(MetricRow(scheme=scheme, snr_db=float(snr_db), k_slots=int(K),
                                  j_sparsity=int(J), n_trials=int(n), nmse_mean=nm,
                                  nmse_stderr=ns, se_mean=sm, se_stderr=ss,
                                  fail_count=fails))
    return rows


def _estimate_per_trial(flat, block, dictionary, phi, scheme, J, var, cenn, exp, rec, n, U):
    # slow path: isolate the trials whose least-squares fits are singular
    out = np.zeros((n, U, flat.shape[1]), dtype=np.complex128)
    bad = np.zeros(n, bool)
    r = rec.r.reshape(n, U, -1)
    for t in range(n):
        sub = type(rec)(r=r[t], phi=phi, c=None, noise_var=var)
        try:
            out[t] = estimate_all_users(flat[t * U:(t + 1) * U], block, dictionary, phi,
                                        scheme, J, var, None, net=cenn,
                                        normalize=exp.normalize_input, record=sub)
        except SingularSystemError:
            bad[t] = True
    return out, bad


def _precode(scheme, H_hat, H, var, Q, dhpnn, exp, rng):
    N_A = H.shape[1]
    try:
        if scheme == "exhaustion":
            res = exhaustion(H_hat, exp.exhaustion_draws, Q, var, rng)
            pair = PrecoderPair(res.F_R, res.F_B)
        else:
            if scheme == "dlqp":
                F_R = np.exp(1j * phases(dhpnn, H_hat))
                F_R = F_R.T
            else:
                q = Q if scheme == "qals" else int(scheme[5:])
                F_R = stack_analog([qals(h, N_A, q) for h in H_hat])
            pair = PrecoderPair(F_R, zf_digital(H_hat, F_R).F_B)
    except SingularSystemError:
        return float("nan")
    return hybrid_se(pair, H, var)


def run_sweep(exp, train_missing=False, log=None, models=None):
    """Evaluate every (SNR, K) cell of ``exp``.

    Models come from ``models`` (a dict keyed by ``("cenn"|"thpnn", snr, K)``)
    or from the checkpoint directory; missing checkpoints raise
    :class:`ModelMissingError` unless ``train_missing`` is set.

    Returns
    -------
    list of MetricRow
        Ordered by SNR, then K, then J, then scheme as configured.
    """
    models = models or {}
    rows = []
    for snr in exp.snr_db:
        for K in exp.k_slots:
            cenn = thpnn = None
            if _needs_cenn(exp.schemes):
                cenn = models.get(("cenn", snr, K)) or ensure_cenn(exp, snr, K, train_missing, log)
            if _needs_thpnn(exp.schemes):
                thpnn = models.get(("thpnn", snr, K)) or ensure_thpnn(exp, snr, K, train_missing, log)
            rows += evaluate_cell(exp, snr, K, cenn=cenn, thpnn=thpnn)
    return rows


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(rows, path=None):
    """Write rows with the fixed column order; returns the CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        w.writerow([_fmt(v) for v in row.as_csv()])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
