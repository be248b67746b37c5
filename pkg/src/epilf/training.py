"""Training-set construction and momentum SGD for the restoration network."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import BlurKernel, blur_epi
from .lightfield import LightField4D, horizontal_epis, luma, resample_angular, vertical_epis
from .network import Network, loss_and_gradients

DEFAULT_SCHEDULE = ((0, 0.01), (250_000, 0.001), (500_000, 0.0001))
OPTIMIZERS = ("sgd", "adam")


@dataclass
class TrainConfig:
    batch_size: int = 64
    momentum: float = 0.9
    lr_schedule: tuple = DEFAULT_SCHEDULE
    total_iterations: int = 800_000
    seed: int = 0
    init_std: float = 1e-3
    patch_size: int = 17
    patch_stride: int = 14
    flip: bool = False
    spatial_downsample: bool = False
    gaussian_noise: bool = False
    scale_augmentation: bool = False
    noise_std: float = 0.01
    log_every: int = 100
    dtype: str = "float32"
    optimizer: str = "sgd"
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        self.lr_schedule = tuple((int(it), float(lr)) for it, lr in self.lr_schedule)
        if not self.lr_schedule:
            raise ValueError("lr_schedule is empty")
        thresholds = [it for it, _ in self.lr_schedule]
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise ValueError("lr_schedule thresholds must be strictly increasing")
        if any(lr <= 0 for _, lr in self.lr_schedule):
            raise ValueError("learning rates must be positive")
        if self.total_iterations < 0:
            raise ValueError("total_iterations must be >= 0")
        if self.patch_size < 1 or self.patch_stride < 1:
            raise ValueError("patch size and stride must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if not all(0 <= b < 1 for b in self.adam_betas) or not self.adam_eps > 0:
            raise ValueError("adam_betas must lie in [0, 1) and adam_eps must be positive")

    def learning_rate(self, iteration: int) -> float:
        lr = self.lr_schedule[0][1]
        for threshold, value in self.lr_schedule:
            if iteration >= threshold:
                lr = value
        return lr


@dataclass
class PatchPair:
    input: np.ndarray
    target_residual: np.ndarray


@dataclass
class TrainState:
    velocity: list
    momentum: float = 0.9
    iteration: int = 0
    losses: list = field(default_factory=list)
    loss_history: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)

    @classmethod
    def for_network(cls, net: Network, momentum: float = 0.9) -> "TrainState":
        return cls([np.zeros_like(p) for p in net.params()], momentum)


def sgd_step(net: Network, grads, state: TrainState, lr: float) -> None:
    """``v <- momentum * v - lr * g; w <- w + v`` for every parameter, in place."""
    if not lr > 0:
        raise ValueError("learning rate must be positive")
    params = net.params()
    if len(grads) != len(params) or len(state.velocity) != len(params):
        raise ValueError("gradient list does not match the network parameters")
    for p, g, v in zip(params, grads, state.velocity):
        if g.shape != p.shape or v.shape != p.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, velocity {v.shape}")
        v *= state.momentum
        v -= lr * g
        p += v
    state.iteration += 1


def adam_step(net: Network, grads, state: TrainState, lr: float, betas=(0.9, 0.999),
              eps: float = 1e-8) -> None:
    """Bias-corrected Adam update, in place.

    ``state.velocity`` holds the first moment and ``state.second_moment`` the
    second (created on first use).
    """
    if not lr > 0:
        raise ValueError("learning rate must be positive")
    params = net.params()
    if not state.second_moment:
        state.second_moment = [np.zeros_like(p) for p in params]
    if not len(grads) == len(params) == len(state.velocity) == len(state.second_moment):
        raise ValueError("gradient list does not match the network parameters")
    b1, b2 = betas
    t = state.iteration + 1
    c1, c2 = 1 - b1 ** t, 1 - b2 ** t
    for p, g, m, v in zip(params, grads, state.velocity, state.second_moment):
        if g.shape != p.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}")
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype)
    state.iteration = t


# ---------------------------------------------------------------------------
# Training pairs


def tile_positions(length: int, size: int, stride: int) -> list:
    if length < size:
        return []
    return list(range(0, length - size + 1, stride))


def tile_pairs(inputs: np.ndarray, targets: np.ndarray, size: int, stride: int) -> list:
    """Cut aligned tiles from (N, A, W) stacks.

    Stacks with at least ``size`` angular rows are tiled in both directions;
    shorter ones give full-height ``A x size`` tiles along x only.
    """
    n, a, w = inputs.shape
    xs = tile_positions(w, size, stride)
    rows = tile_positions(a, size, stride) if a >= size else [0]
    height = size if a >= size else a
    pairs = []
    for i in range(n):
        for r in rows:
            for c in xs:
                inp = inputs[i, r:r + height, c:c + size]
                tgt = targets[i, r:r + height, c:c + size]
                pairs.append(PatchPair(inp.copy(), tgt - inp))
    return pairs


def _lf_epis(samples: np.ndarray) -> list:
    """Horizontal and (when T > 1) vertical EPI stacks of (T, S, H, W) samples."""
    T, S, H, W = samples.shape
    stacks = [horizontal_epis(samples).reshape(T * H, S, W)]
    if T > 1:
        stacks.append(vertical_epis(samples).reshape(S * W, T, H))
    return stacks


def _half_resolution(samples: np.ndarray) -> np.ndarray:
    T, S, H, W = samples.shape
    h, w = H // 2 * 2, W // 2 * 2
    s = samples[:, :, :h, :w]
    return 0.25 * (s[:, :, 0::2, 0::2] + s[:, :, 1::2, 0::2] + s[:, :, 0::2, 1::2] + s[:, :, 1::2, 1::2])


def _pairs_from_stack(dense, kernel, factors, cfg, rng):
    blurred = blur_epi(dense, kernel)
    n_views = dense.shape[1]
    jobs = []
    for f in sorted(factors):
        if (n_views - 1) % f or (n_views - 1) // f < 2:
            raise ValueError(f"{n_views} views cannot be downsampled by factor {f}")
        jobs.append((blurred[:, ::f], blurred))
    if cfg.scale_augmentation and (n_views - 1) % 4 == 0 and (n_views - 1) // 4 >= 2:
        jobs.append((blurred[:, ::4], blurred[:, ::2]))
    pairs = []
    for sparse, target in jobs:
        up = resample_angular(sparse, target.shape[1])
        if cfg.gaussian_noise:
            up = up + rng.normal(0.0, cfg.noise_std, up.shape)
        pairs.extend(tile_pairs(up, target, cfg.patch_size, cfg.patch_stride))
    return pairs


def build_training_set(dense_lfs, kernel: BlurKernel, factors, cfg: TrainConfig) -> list:
    """Patch pairs of blurred/upsampled inputs and residual targets (Y channel).

    For every EPI of every dense light field and every factor ``f``: blur,
    keep every ``f``-th view, resample back to the dense view count and tile
    together with the blurred dense EPI.
    """
    rng = np.random.default_rng(cfg.seed)
    pairs = []
    for lf in dense_lfs:
        samples = luma(lf) if isinstance(lf, LightField4D) else np.asarray(lf, dtype=np.float64)
        variants = [samples]
        if cfg.spatial_downsample and min(samples.shape[2:]) >= 2:
            variants.append(_half_resolution(samples))
        for variant in variants:
            for stack in _lf_epis(variant):
                stacks = [stack]
                if cfg.flip:
                    stacks += [stack[:, :, ::-1], stack[:, ::-1, :]]
                for s in stacks:
                    pairs.extend(_pairs_from_stack(np.ascontiguousarray(s), kernel, factors, cfg, rng))
    return pairs


# ---------------------------------------------------------------------------


def _batches(groups, batch_size, rng):
    """One epoch of batches: each group shuffled and chunked, batch order shuffled."""
    batches = []
    for key in sorted(groups):
        idx = rng.permutation(len(groups[key][0]))
        for start in range(0, len(idx), batch_size):
            batches.append((key, idx[start:start + batch_size]))
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def train(net: Network, pairs, cfg: TrainConfig, state: TrainState | None = None,
          progress=None):
    """Mini-batch momentum SGD (or Adam, per ``cfg.optimizer``) on the residual loss.

    Pairs of different patch shapes are batched separately. Returns a trained
    copy of ``net`` and the final :class:`TrainState`.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty training set")
    dtype = np.dtype(cfg.dtype)
    net = net.astype(dtype)
    if state is None:
        state = TrainState.for_network(net, cfg.momentum)
    groups = {}
    for p in pairs:
        groups.setdefault(p.input.shape, []).append(p)
    groups = {
        key: (np.stack([p.input for p in ps]).astype(dtype), np.stack([p.target_residual for p in ps]).astype(dtype))
        for key, ps in groups.items()
    }
    rng = np.random.default_rng(cfg.seed)
    queue = []
    window = []
    while state.iteration < cfg.total_iterations:
        if not queue:
            queue = _batches(groups, cfg.batch_size, rng)
        key, idx = queue.pop()
        inputs, targets = groups[key]
        loss, grads = loss_and_gradients(net, inputs[idx], targets[idx])
        lr = cfg.learning_rate(state.iteration)
        if cfg.optimizer == "adam":
            adam_step(net, grads, state, lr, cfg.adam_betas, cfg.adam_eps)
        else:
            sgd_step(net, grads, state, lr)
        state.losses.append(loss)
        window.append(loss)
        if state.iteration % cfg.log_every == 0:
            state.loss_history.append((state.iteration, float(np.mean(window))))
            window = []
            if progress is not None:
                progress(state)
    return net, state


def smoothed(values, alpha: float = 0.01) -> np.ndarray:
    """Exponential moving average."""
    out = np.empty(len(values))
    acc = values[0] if len(values) else 0.0
    for i, v in enumerate(values):
        acc = alpha * v + (1 - alpha) * acc
        out[i] = acc
    return out
