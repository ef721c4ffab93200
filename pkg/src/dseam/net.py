"""Small encoder-decoder mask network, written against numpy with manual backprop.

Three 2x2 max-pool stages down, three nearest-upsample + 3x3 conv stages
up, skip connections by channel concatenation at equal resolution. Every
conv is 3x3, stride 1, replicate-padded and followed by ReLU except the
single-channel head, whose logistic output is the A-mask weight.
"""
from __future__ import annotations

import csv
import json
import struct
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from .imgcore import RegionPartition, region_partition, resize_image, resize_mask, rgb_to_gray, sobel_edges
from .loss import LossBreakdown, LossSpace, LossWeights, SelectionConsistencyLoss, prepare_loss_space
from .optimizer import Adam, binarize_mask

MAGIC = b"DSEAMNET"
VERSION = 1


class NetError(RuntimeError):
    pass


@dataclass(frozen=True)
class NetConfig:
    height: int = 256
    width: int = 256
    widths: tuple[int, int, int] = (8, 16, 32)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(c) for c in self.widths))
        if len(self.widths) != 3:
            raise ValueError("exactly three encoder widths are required")
        if self.height % 8 or self.width % 8:
            raise ValueError("input size must be divisible by 8 (three pooling stages)")

    def layer_shapes(self) -> list[tuple[str, int, int]]:
        """(name, in_channels, out_channels) in declaration order."""
        c1, c2, c3 = self.widths
        return [("enc1", 1, c1), ("enc2", c1, c2), ("enc3", c2, c3), ("mid", c3, c3),
                ("dec3", c3, c3), ("dec2", 2 * c3, c2), ("dec1", 2 * c2, c1), ("head", 2 * c1, 1)]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    decay: float = 0.96
    decay_every: int = 1000
    iterations: int = 20000
    batch_size: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    space: str = "edge"

    def __post_init__(self):
        if self.batch_size != 1:
            raise ValueError("only batch size 1 is supported")


class NetWeights:
    """Ordered conv kernels (out, in, 3, 3) and biases."""

    def __init__(self, cfg: NetConfig, params: dict[str, np.ndarray] | None = None):
        self.cfg = cfg
        if params is None:
            params = {}
            rng = np.random.default_rng(cfg.seed)
            for name, cin, cout in cfg.layer_shapes():
                bound = np.sqrt(6.0 / (cin * 9))
                params[f"{name}.w"] = rng.uniform(-bound, bound, size=(cout, cin, 3, 3))
                params[f"{name}.b"] = np.zeros(cout)
        self.params = params
        for name, cin, cout in cfg.layer_shapes():
            if self.params[f"{name}.w"].shape != (cout, cin, 3, 3):
                raise NetError(f"weight {name}.w has shape {self.params[f'{name}.w'].shape}")

    def names(self) -> list[str]:
        return [f"{n}.{k}" for n, _, _ in self.cfg.layer_shapes() for k in ("w", "b")]

    def arrays(self) -> list[np.ndarray]:
        return [self.params[n] for n in self.names()]

    def copy(self) -> "NetWeights":
        return NetWeights(self.cfg, {k: v.copy() for k, v in self.params.items()})

    @classmethod
    def zeros(cls, cfg: NetConfig) -> "NetWeights":
        w = cls(cfg)
        for v in w.params.values():
            v[...] = 0.0
        return w


def save_weights(w: NetWeights, path) -> None:
    header = json.dumps(asdict(w.cfg), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        for arr in w.arrays():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_weights(path) -> NetWeights:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise NetError(f"{path} is not a weight file")
        version, n = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise NetError(f"unsupported weight file version {version}")
        cfg_d = json.loads(fh.read(n))
        cfg = NetConfig(**cfg_d)
        params = {}
        for name, cin, cout in cfg.layer_shapes():
            for key, shape in (("w", (cout, cin, 3, 3)), ("b", (cout,))):
                size = int(np.prod(shape))
                buf = fh.read(size * 8)
                if len(buf) != size * 8:
                    raise NetError(f"{path} is truncated")
                params[f"{name}.{key}"] = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(np.float64)
        if fh.read(1):
            raise NetError(f"{path} has trailing data")
    return NetWeights(cfg, params)


# -- layers -----------------------------------------------------------------

def _im2col(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)), mode="edge")
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))  # c, h, w, 3, 3
    return win.transpose(0, 3, 4, 1, 2).reshape(c * 9, h * w)


def _col2im(cols: np.ndarray, c: int, h: int, w: int) -> np.ndarray:
    g = cols.reshape(c, 3, 3, h, w)
    gp = np.zeros((c, h + 2, w + 2))
    for i in range(3):
        for j in range(3):
            gp[:, i:i + h, j:j + w] += g[:, i, j]
    # fold the replicated border back onto the edge pixels
    out = gp[:, 1:-1, 1:-1].copy()
    out[:, 0, :] += gp[:, 0, 1:-1]
    out[:, -1, :] += gp[:, -1, 1:-1]
    out[:, :, 0] += gp[:, 1:-1, 0]
    out[:, :, -1] += gp[:, 1:-1, -1]
    out[:, 0, 0] += gp[:, 0, 0]
    out[:, 0, -1] += gp[:, 0, -1]
    out[:, -1, 0] += gp[:, -1, 0]
    out[:, -1, -1] += gp[:, -1, -1]
    return out


def _conv(x, w, b):
    c, h, wd = x.shape
    cols = _im2col(x)
    y = (w.reshape(w.shape[0], -1) @ cols + b[:, None]).reshape(w.shape[0], h, wd)
    return y, cols


def _conv_back(dy, cols, w, x_shape):
    cout = w.shape[0]
    dyf = dy.reshape(cout, -1)
    dw = (dyf @ cols.T).reshape(w.shape)
    db = dyf.sum(axis=1)
    dx = _col2im(w.reshape(cout, -1).T @ dyf, *x_shape)
    return dx, dw, db


def _pool(x):
    c, h, w = x.shape
    blocks = x.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h // 2, w // 2, 4)
    arg = blocks.argmax(axis=3)
    return np.take_along_axis(blocks, arg[..., None], axis=3)[..., 0], arg


def _pool_back(dy, arg):
    c, h2, w2 = dy.shape
    blocks = np.zeros((c, h2, w2, 4))
    np.put_along_axis(blocks, arg[..., None], dy[..., None], axis=3)
    return blocks.reshape(c, h2, w2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, 2 * h2, 2 * w2)


def _up(x):
    return x.repeat(2, axis=1).repeat(2, axis=2)


def _up_back(dy):
    c, h, w = dy.shape
    return dy.reshape(c, h // 2, 2, w // 2, 2).sum(axis=(2, 4))


# -- network ----------------------------------------------------------------

def make_input(img_a, img_b) -> np.ndarray:
    """Difference of Sobel edge maps of the grayscale images, (H, W, 1), unnormalized."""
    a, b = np.asarray(img_a, float), np.asarray(img_b, float)
    if a.shape != b.shape:
        raise NetError(f"image shapes differ: {a.shape} vs {b.shape}")
    ga = rgb_to_gray(a) if a.ndim == 3 and a.shape[2] == 3 else a
    gb = rgb_to_gray(b) if b.ndim == 3 and b.shape[2] == 3 else b
    return sobel_edges(ga) - sobel_edges(gb)


def net_forward(w: NetWeights, x, cache: dict | None = None) -> np.ndarray:
    """Soft A-mask in (0, 1), shape (H, W). Fills ``cache`` for :func:`net_backward`."""
    x = np.asarray(x, float)
    if x.ndim == 3:
        x = x[:, :, 0]
    if x.shape != (w.cfg.height, w.cfg.width):
        raise NetError(f"input shape {x.shape} does not match the configured {(w.cfg.height, w.cfg.width)}")
    p = w.params
    keep = cache is not None
    acts = {}

    def conv_relu(name, inp, relu=True):
        z, cols = _conv(inp, p[f"{name}.w"], p[f"{name}.b"])
        out = np.maximum(z, 0.0) if relu else z
        if keep:
            acts[name] = (cols, inp.shape, z)
        return out

    x0 = x[None]
    e1 = conv_relu("enc1", x0)
    p1, a1 = _pool(e1)
    e2 = conv_relu("enc2", p1)
    p2, a2 = _pool(e2)
    e3 = conv_relu("enc3", p2)
    p3, a3 = _pool(e3)
    m = conv_relu("mid", p3)
    d3 = conv_relu("dec3", _up(m))
    d2 = conv_relu("dec2", _up(np.concatenate([d3, e3])))
    d1 = conv_relu("dec1", _up(np.concatenate([d2, e2])))
    logits = conv_relu("head", np.concatenate([d1, e1]), relu=False)[0]
    soft = expit(logits)
    if keep:
        cache.clear()
        cache.update(acts=acts, args=(a1, a2, a3), soft=soft,
                     widths=(e1.shape[0], e2.shape[0], e3.shape[0], d3.shape[0], d2.shape[0], d1.shape[0]))
    return soft


def net_backward(w: NetWeights, cache: dict, d_soft: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every parameter, given d loss / d soft."""
    p = w.params
    acts = cache["acts"]
    a1, a2, a3 = cache["args"]
    c1, c2, c3, cd3, cd2, cd1 = cache["widths"]
    soft = cache["soft"]
    grads = {}

    def back(name, dout, relu=True):
        cols, in_shape, z = acts[name]
        dz = dout * (z > 0) if relu else dout
        dx, dw, db = _conv_back(dz, cols, p[f"{name}.w"], in_shape)
        grads[f"{name}.w"], grads[f"{name}.b"] = dw, db
        return dx

    dlogit = (d_soft * soft * (1.0 - soft))[None]
    dcat1 = back("head", dlogit, relu=False)
    dd1, de1 = dcat1[:cd1], dcat1[cd1:]
    dcat2 = _up_back(back("dec1", dd1))
    dd2, de2 = dcat2[:cd2], dcat2[cd2:]
    dcat3 = _up_back(back("dec2", dd2))
    dd3, de3 = dcat3[:cd3], dcat3[cd3:]
    dm = _up_back(back("dec3", dd3))
    dp3 = back("mid", dm)
    de3 = de3 + _pool_back(dp3, a3)
    dp2 = back("enc3", de3)
    de2 = de2 + _pool_back(dp2, a2)
    dp1 = back("enc2", de2)
    de1 = de1 + _pool_back(dp1, a1)
    back("enc1", de1)
    return grads


# -- training ---------------------------------------------------------------

@dataclass
class TrainingPair:
    """One pair resampled to the network resolution, with its loss prepared."""
    x: np.ndarray
    loss: SelectionConsistencyLoss
    part: RegionPartition

    @classmethod
    def build(cls, img_a, img_b, valid_a, valid_b, cfg: NetConfig,
              weights: LossWeights = LossWeights(), space=LossSpace.EDGE) -> "TrainingPair":
        shape = (cfg.height, cfg.width)
        va, vb = resize_mask(valid_a, shape), resize_mask(valid_b, shape)
        a = resize_image(img_a, shape) * va[..., None]
        b = resize_image(img_b, shape) * vb[..., None]
        part = region_partition(va, vb, endpoints=False)
        la, lb = prepare_loss_space(a, b, space, va, vb)
        return cls(make_input(a, b), SelectionConsistencyLoss(la, lb, part, weights), part)


def pair_loss(w: NetWeights, pair: TrainingPair, gradient: bool = True):
    """(LossBreakdown, parameter gradients or None) for one pair."""
    cache = {} if gradient else None
    soft = net_forward(w, pair.x, cache)
    br, gs = pair.loss.evaluate(soft, gradient=gradient)
    if not gradient:
        return br, None
    return br, net_backward(w, cache, gs)


class Trainer:
    """Adam over the network parameters; state persists across :meth:`step` calls."""

    def __init__(self, w: NetWeights, tcfg: TrainConfig = TrainConfig()):
        self.w = w
        self.tcfg = tcfg
        self.opt = Adam(w.arrays(), lr=tcfg.lr, beta1=tcfg.beta1, beta2=tcfg.beta2, eps=tcfg.eps,
                        decay=tcfg.decay, decay_every=tcfg.decay_every)

    def rate(self) -> float:
        return self.opt.rate()

    def step(self, pair: TrainingPair) -> LossBreakdown:
        br, grads = pair_loss(self.w, pair)
        g = [grads[n] for n in self.w.names()]
        if not np.isfinite(br.total) or not all(np.all(np.isfinite(x)) for x in g):
            raise NetError(f"non-finite loss or gradient at iteration {self.opt.t}: {br}")
        self.opt.step(g)
        return br


def train_step(w: NetWeights, pair: TrainingPair, trainer: Trainer) -> LossBreakdown:
    if trainer.w is not w:
        raise NetError("trainer is bound to different weights")
    return trainer.step(pair)


@dataclass
class TrainResult:
    weights: NetWeights
    curve: list[LossBreakdown] = field(default_factory=list)
    seconds: float = 0.0

    def write_curve(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["iteration", "loss_non", "loss_patch", "total"])
            for i, br in enumerate(self.curve):
                out.writerow([i, repr(br.loss_non), repr(br.loss_patch), repr(br.total)])


def train(pairs: list[TrainingPair], ncfg: NetConfig, tcfg: TrainConfig = TrainConfig(),
          progress=None) -> TrainResult:
    """Iterate single-pair Adam steps over a seeded reshuffle of ``pairs`` each epoch."""
    if not pairs:
        raise NetError("empty training corpus")
    w = NetWeights(ncfg)
    trainer = Trainer(w, tcfg)
    rng = np.random.default_rng(tcfg.seed)
    result = TrainResult(w)
    t0 = time.perf_counter()
    order: list[int] = []
    for it in range(tcfg.iterations):
        if not order:
            order = list(rng.permutation(len(pairs)))
        result.curve.append(trainer.step(pairs[order.pop(0)]))
        if progress is not None:
            progress(it, result.curve[-1])
    result.seconds = time.perf_counter() - t0
    return result


def predict_soft(w: NetWeights, img_a, img_b, valid_a, valid_b) -> np.ndarray:
    """Soft A-mask at native resolution (nearest upsampling of the network output)."""
    shape = (w.cfg.height, w.cfg.width)
    va, vb = resize_mask(valid_a, shape), resize_mask(valid_b, shape)
    a = resize_image(img_a, shape) * va[..., None]
    b = resize_image(img_b, shape) * vb[..., None]
    soft = net_forward(w, make_input(a, b))
    return resize_mask(soft, np.shape(valid_a))


def predict(w: NetWeights, img_a, img_b, part: RegionPartition, threshold: float = 0.5):
    soft = predict_soft(w, img_a, img_b, part.valid_a, part.valid_b)
    return binarize_mask(soft, part, threshold)
