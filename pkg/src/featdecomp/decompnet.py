"""Decomposition network: two encoders, a decoder, and a linear classifier.

The shared-path encoder and discriminative-path encoder both read the input
feature vector; the decoder reconstructs the input from the *sum* of the two
codes; the classifier sees only the discriminative code. All arithmetic is
float64. Backpropagation is hand-written and returns exact gradients for
every parameter plus the input, so callers can chain an upstream extractor.

Sub-networks may be absent (``None``) to express reduced graphs: an
inference export keeps only the discriminative encoder and classifier, and
an absent discriminative encoder means the classifier reads the raw input.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CapabilityError,
    FeatureFormatError,
    ParameterError,
    StateError,
)

NET_MAGIC = b"GSFN"
NET_VERSION = 1

ACTIVATIONS = ("relu", "tanh")

# A sub-network is a list of (weights, bias) affine layers with the
# configured activation between them (none after the last layer).
Layer = tuple[np.ndarray, np.ndarray]
Mlp = list[Layer]


@dataclass
class NetConfig:
    """Shapes and seeds for the decomposition head.

    ``code_dim`` is the width of both codes and of the feature centers; it
    defaults to ``input_dim``. ``hidden_dims`` is applied to each encoder
    and, in the same order, to the decoder; the classifier is always a
    single affine layer.
    """

    input_dim: int
    num_classes: int
    code_dim: int | None = None
    hidden_dims: tuple[int, ...] = (32,)
    activation: str = "relu"
    init_seed: int = 0

    def __post_init__(self):
        if self.code_dim is None:
            self.code_dim = self.input_dim
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        if self.activation not in ACTIVATIONS:
            raise ParameterError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        for name, v in (
            ("input_dim", self.input_dim),
            ("num_classes", self.num_classes),
            ("code_dim", self.code_dim),
        ):
            if v < 1:
                raise ParameterError(f"{name} must be >= 1, got {v}")
        if any(h < 1 for h in self.hidden_dims):
            raise ParameterError(f"zero-dimension hidden layer in {self.hidden_dims}")


@dataclass(eq=False)
class DecompositionNet:
    """Parameters of the four sub-networks. Absent parts are ``None``."""

    encoder_s: Mlp | None
    encoder_d: Mlp | None
    decoder: Mlp | None
    classifier: Mlp
    config: NetConfig

    def parts(self) -> dict[str, Mlp | None]:
        return {
            "encoder_s": self.encoder_s,
            "encoder_d": self.encoder_d,
            "decoder": self.decoder,
            "classifier": self.classifier,
        }

    def flat_params(self) -> list[np.ndarray]:
        """All parameter arrays in a fixed traversal order (live references)."""
        out: list[np.ndarray] = []
        for mlp in self.parts().values():
            if mlp is not None:
                for w, b in mlp:
                    out.extend((w, b))
        return out


@dataclass(eq=False)
class ForwardRecord:
    """Values and caches of one forward pass over a batch.

    ``y_shd``/``y_hat`` are ``None`` when the corresponding sub-networks are
    absent. Caches hold per-layer (input, preactivation) pairs and are
    required by :func:`backward`.
    """

    y: np.ndarray
    y_shd: np.ndarray | None
    y_dis: np.ndarray
    y_hat: np.ndarray | None
    logits: np.ndarray
    probs: np.ndarray
    cache_s: list | None = field(default=None, repr=False)
    cache_d: list | None = field(default=None, repr=False)
    cache_dec: list | None = field(default=None, repr=False)
    cache_clf: list | None = field(default=None, repr=False)


@dataclass(eq=False)
class NetGradients:
    """Per-parameter gradients mirroring DecompositionNet, plus d/d(input)."""

    encoder_s: list[Layer] | None
    encoder_d: list[Layer] | None
    decoder: list[Layer] | None
    classifier: list[Layer]
    input_grad: np.ndarray

    def flat(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for part in (self.encoder_s, self.encoder_d, self.decoder, self.classifier):
            if part is not None:
                for dw, db in part:
                    out.extend((dw, db))
        return out


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activate_grad(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0).astype(np.float64)
    t = np.tanh(z)
    return 1.0 - t * t


def init_mlp(dims: list[int], rng: np.random.Generator) -> Mlp:
    """Affine stack with variance-scaled uniform weights and zero biases.

    Weights are uniform on (-limit, limit) with limit = sqrt(6/(fan_in+fan_out)),
    giving per-layer weight variance 2/(fan_in+fan_out).
    """
    if any(d < 1 for d in dims):
        raise ParameterError(f"zero-dimension layer in {dims}")
    layers: Mlp = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        b = np.zeros(fan_out, dtype=np.float64)
        layers.append((w, b))
    return layers


def mlp_forward(layers: Mlp, x: np.ndarray, activation: str) -> tuple[np.ndarray, list]:
    """Evaluate the stack and cache (input, preactivation) per layer."""
    a = x
    cache = []
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        z = a @ w + b
        cache.append((a, z))
        a = _activate(z, activation) if i < last else z
    return a, cache


def mlp_eval(layers: Mlp, x: np.ndarray, activation: str) -> np.ndarray:
    """Forward pass without caching; arithmetic identical to mlp_forward."""
    a = x
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        z = a @ w + b
        a = _activate(z, activation) if i < last else z
    return a


def mlp_backward(
    layers: Mlp, cache: list, grad_out: np.ndarray, activation: str
) -> tuple[list[Layer], np.ndarray]:
    """Reverse pass: gradient of (sum of grad_out * output) for each layer
    parameter, plus the gradient with respect to the stack input."""
    grads: list[Layer] = [None] * len(layers)  # type: ignore[list-item]
    g = grad_out
    for i in range(len(layers) - 1, -1, -1):
        a_in, _ = cache[i]
        grads[i] = (a_in.T @ g, g.sum(axis=0))
        g = g @ layers[i][0].T
        if i > 0:
            g = g * _activate_grad(cache[i - 1][1], activation)
    return grads, g


def zero_grads(layers: Mlp) -> list[Layer]:
    return [(np.zeros_like(w), np.zeros_like(b)) for w, b in layers]


def init_net(config: NetConfig) -> DecompositionNet:
    """Fresh network; deterministic for a given config and init_seed."""
    rng = np.random.default_rng(config.init_seed)
    enc_dims = [config.input_dim, *config.hidden_dims, config.code_dim]
    dec_dims = [config.code_dim, *config.hidden_dims, config.input_dim]
    encoder_s = init_mlp(enc_dims, rng)
    encoder_d = init_mlp(enc_dims, rng)
    decoder = init_mlp(dec_dims, rng)
    classifier = init_mlp([config.code_dim, config.num_classes], rng)
    return DecompositionNet(encoder_s, encoder_d, decoder, classifier, config)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row softmax with max subtraction; safe for |logits| up to ~1e4."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(net: DecompositionNet, y: np.ndarray, cache: bool = True) -> ForwardRecord:
    """Full forward pass: both codes, reconstruction, logits, probabilities."""
    y = np.ascontiguousarray(y, dtype=np.float64)
    if y.ndim != 2 or y.shape[1] != net.config.input_dim:
        raise ParameterError(
            f"input must have shape (B, {net.config.input_dim}), got {y.shape}"
        )
    act = net.config.activation
    y_shd = cache_s = None
    if net.encoder_s is not None:
        y_shd, cache_s = mlp_forward(net.encoder_s, y, act)
    if net.encoder_d is not None:
        y_dis, cache_d = mlp_forward(net.encoder_d, y, act)
    else:
        y_dis, cache_d = y, None
    y_hat = cache_dec = None
    if net.decoder is not None and y_shd is not None:
        y_hat, cache_dec = mlp_forward(net.decoder, y_shd + y_dis, act)
    logits, cache_clf = mlp_forward(net.classifier, y_dis, act)
    probs = softmax(logits)
    if not cache:
        cache_s = cache_d = cache_dec = cache_clf = None
    return ForwardRecord(y, y_shd, y_dis, y_hat, logits, probs,
                         cache_s, cache_d, cache_dec, cache_clf)


def backward(
    net: DecompositionNet,
    record: ForwardRecord,
    grad_y_shd: np.ndarray | None = None,
    grad_y_dis: np.ndarray | None = None,
    grad_y_hat: np.ndarray | None = None,
    grad_logits: np.ndarray | None = None,
) -> NetGradients:
    """Exact reverse-mode gradients for the scalar whose partials with
    respect to the four heads are the given cotangents.

    A ``None`` cotangent means that head contributes nothing; the
    corresponding paths are skipped, leaving exact zeros. Both encoders read
    the same input and the decoder reads the sum of codes, so cotangents fan
    in accordingly.
    """
    act = net.config.activation

    def acc(cur, add):
        return add if cur is None else cur + add

    g_shd = grad_y_shd
    g_dis = grad_y_dis

    clf_grads = zero_grads(net.classifier)
    if grad_logits is not None:
        if record.cache_clf is None:
            raise StateError("forward record carries no classifier cache")
        clf_grads, g_in = mlp_backward(net.classifier, record.cache_clf, grad_logits, act)
        g_dis = acc(g_dis, g_in)

    dec_grads = zero_grads(net.decoder) if net.decoder is not None else None
    if grad_y_hat is not None:
        if net.decoder is None:
            raise CapabilityError("network has no decoder to receive a reconstruction cotangent")
        if record.cache_dec is None:
            raise StateError("forward record carries no decoder cache")
        dec_grads, g_sum = mlp_backward(net.decoder, record.cache_dec, grad_y_hat, act)
        g_shd = acc(g_shd, g_sum)
        g_dis = acc(g_dis, g_sum)

    input_grad = np.zeros_like(record.y)

    encs_grads = zero_grads(net.encoder_s) if net.encoder_s is not None else None
    if g_shd is not None:
        if net.encoder_s is None:
            raise CapabilityError("network has no shared encoder to receive a code cotangent")
        if record.cache_s is None:
            raise StateError("forward record carries no shared-encoder cache")
        encs_grads, g_in = mlp_backward(net.encoder_s, record.cache_s, g_shd, act)
        input_grad = input_grad + g_in

    encd_grads = zero_grads(net.encoder_d) if net.encoder_d is not None else None
    if g_dis is not None:
        if net.encoder_d is not None:
            if record.cache_d is None:
                raise StateError("forward record carries no discriminative-encoder cache")
            encd_grads, g_in = mlp_backward(net.encoder_d, record.cache_d, g_dis, act)
            input_grad = input_grad + g_in
        else:  # identity encoder: cotangent passes straight through
            input_grad = input_grad + g_dis

    return NetGradients(encs_grads, encd_grads, dec_grads, clf_grads, input_grad)


def discriminative_logits(net: DecompositionNet, y: np.ndarray) -> np.ndarray:
    """Inference path: discriminative encoder (or identity) then classifier.

    Shared encoder and decoder are never evaluated; the result is
    bit-identical to the ``logits`` field of a full forward pass.
    """
    y = np.ascontiguousarray(y, dtype=np.float64)
    if y.ndim != 2 or y.shape[1] != net.config.input_dim:
        raise ParameterError(
            f"input must have shape (B, {net.config.input_dim}), got {y.shape}"
        )
    act = net.config.activation
    y_dis = mlp_eval(net.encoder_d, y, act) if net.encoder_d is not None else y
    return mlp_eval(net.classifier, y_dis, act)


def reconstruct(net: DecompositionNet, y: np.ndarray) -> np.ndarray:
    """Decoder output for ``y``; errors if the decomposition path is absent."""
    if net.encoder_s is None or net.decoder is None:
        raise CapabilityError("reconstruction requires the shared encoder and decoder")
    rec = forward(net, y, cache=False)
    return rec.y_hat


def strip_decomposition(net: DecompositionNet) -> DecompositionNet:
    """Reduced copy keeping only the inference path (discriminative encoder
    and classifier)."""
    encoder_d = [(w.copy(), b.copy()) for w, b in net.encoder_d] if net.encoder_d else None
    classifier = [(w.copy(), b.copy()) for w, b in net.classifier]
    return DecompositionNet(None, encoder_d, None, classifier, net.config)


# -- checkpoint format (magic GSFN) -----------------------------------------

_FLAG_ENC_S, _FLAG_ENC_D, _FLAG_DEC, _FLAG_CLF, _FLAG_EXTRACTOR = 1, 2, 4, 8, 16


def _write_array(fh, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    fh.write(struct.pack("<I", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(arr.tobytes())


def _read_array(fh) -> np.ndarray:
    (ndim,) = struct.unpack("<I", _read_exact(fh, 4))
    shape = struct.unpack(f"<{ndim}Q", _read_exact(fh, 8 * ndim))
    count = int(np.prod(shape)) if ndim else 1
    data = _read_exact(fh, 8 * count)
    return np.frombuffer(data, dtype="<f8").reshape(shape).copy()


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FeatureFormatError(f"checkpoint truncated: wanted {n} bytes, got {len(data)}")
    return data


def write_mlp(fh, layers: Mlp) -> None:
    fh.write(struct.pack("<I", len(layers)))
    for w, b in layers:
        _write_array(fh, w)
        _write_array(fh, b)


def read_mlp(fh) -> Mlp:
    (n,) = struct.unpack("<I", _read_exact(fh, 4))
    return [(_read_array(fh), _read_array(fh)) for _ in range(n)]


def write_config(fh, config: NetConfig) -> None:
    fh.write(
        struct.pack(
            "<IIIBq",
            config.input_dim,
            config.code_dim,
            config.num_classes,
            ACTIVATIONS.index(config.activation),
            config.init_seed,
        )
    )
    fh.write(struct.pack("<I", len(config.hidden_dims)))
    for h in config.hidden_dims:
        fh.write(struct.pack("<I", h))


def read_config(fh) -> NetConfig:
    input_dim, code_dim, num_classes, act_idx, init_seed = struct.unpack(
        "<IIIBq", _read_exact(fh, 21)
    )
    (n_hidden,) = struct.unpack("<I", _read_exact(fh, 4))
    hidden = struct.unpack(f"<{n_hidden}I", _read_exact(fh, 4 * n_hidden))
    return NetConfig(
        input_dim=input_dim,
        num_classes=num_classes,
        code_dim=code_dim,
        hidden_dims=tuple(hidden),
        activation=ACTIVATIONS[act_idx],
        init_seed=init_seed,
    )


def save_net(path, net: DecompositionNet, extractor: Mlp | None = None) -> None:
    """Serialize a (possibly reduced) network, optionally with an upstream
    extractor stack, to the GSFN binary format."""
    flags = _FLAG_CLF
    flags |= _FLAG_ENC_S if net.encoder_s is not None else 0
    flags |= _FLAG_ENC_D if net.encoder_d is not None else 0
    flags |= _FLAG_DEC if net.decoder is not None else 0
    flags |= _FLAG_EXTRACTOR if extractor is not None else 0
    with open(path, "wb") as fh:
        fh.write(NET_MAGIC)
        fh.write(struct.pack("<HB", NET_VERSION, flags))
        write_config(fh, net.config)
        for part in (net.encoder_s, net.encoder_d, net.decoder, net.classifier):
            if part is not None:
                write_mlp(fh, part)
        if extractor is not None:
            write_mlp(fh, extractor)


def load_net(path) -> tuple[DecompositionNet, Mlp | None]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != NET_MAGIC:
            raise FeatureFormatError(f"{path}: bad magic {magic!r}, expected {NET_MAGIC!r}")
        version, flags = struct.unpack("<HB", _read_exact(fh, 3))
        if version != NET_VERSION:
            raise FeatureFormatError(f"{path}: unsupported version {version}")
        config = read_config(fh)
        encoder_s = read_mlp(fh) if flags & _FLAG_ENC_S else None
        encoder_d = read_mlp(fh) if flags & _FLAG_ENC_D else None
        decoder = read_mlp(fh) if flags & _FLAG_DEC else None
        classifier = read_mlp(fh)
        extractor = read_mlp(fh) if flags & _FLAG_EXTRACTOR else None
    return DecompositionNet(encoder_s, encoder_d, decoder, classifier, config), extractor
