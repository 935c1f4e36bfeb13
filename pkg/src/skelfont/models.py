"""Generator and discriminator construction.

One code path serves both paper scale (128px, width 64, 9 residual
blocks) and desk scale; only the ModelSpec values differ.

Generator: 7x7 stem conv, two stride-2 down convs, n residual blocks
(conv-bn-relu-conv-bn plus skip), two stride-2 transposed convs, 7x7
output conv into tanh. Every conv except the output one is followed by
batch norm. Input is 4xHxW (RGB + skeleton channel), output 3xHxW in
[-1, 1].

Discriminator: six hidden convs (4x4 stride 2 while the map is >= 8px,
3x3 stride 1 after) with leaky relu, batch norm from the second hidden
layer on, then a two-conv output head producing a patch score map
through sigmoid. Kernel sizes and the patch-level head are
conventional choices; downstream contracts depend only on shapes,
ranges, and the layer count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from skelfont import autodiff as ad
from skelfont.autodiff import Tensor
from skelfont.errors import InvalidSpec

GEN_IN_CHANNELS = 4
DISC_IN_CHANNELS = 3


@dataclass(frozen=True)
class ModelSpec:
    """Architecture knobs; paper_scale pins the published configuration."""

    image_size: int = 128
    base_width: int = 64
    n_residual_blocks: int = 9
    paper_scale: bool = False

    def validate(self):
        if self.base_width < 4:
            raise InvalidSpec(f"base_width must be >= 4, got {self.base_width}")
        if self.n_residual_blocks < 1:
            raise InvalidSpec(
                f"n_residual_blocks must be >= 1, got {self.n_residual_blocks}"
            )
        if self.image_size < 8 or self.image_size % 4 != 0:
            raise InvalidSpec(
                f"image_size must be a multiple of 4 and >= 8, got {self.image_size}"
            )
        if self.paper_scale and (
            self.image_size != 128 or self.n_residual_blocks != 9
        ):
            raise InvalidSpec(
                "paper_scale requires image_size=128 and n_residual_blocks=9"
            )


def desk_spec(image_size: int = 32, base_width: int = 8, n_residual_blocks: int = 2) -> ModelSpec:
    return ModelSpec(
        image_size=image_size,
        base_width=base_width,
        n_residual_blocks=n_residual_blocks,
        paper_scale=False,
    )


def paper_spec() -> ModelSpec:
    return ModelSpec(image_size=128, base_width=64, n_residual_blocks=9, paper_scale=True)


class ConvUnit:
    """One convolution with optional batch norm and activation."""

    def __init__(self, c_in, c_out, k, stride, pad, norm=True, act=None,
                 transpose=False, dtype=np.float32):
        self.c_in = c_in
        self.c_out = c_out
        self.k = k
        self.stride = stride
        self.pad = pad
        self.norm = norm
        self.act = act
        self.transpose = transpose
        wshape = (c_in, c_out, k, k) if transpose else (c_out, c_in, k, k)
        self.w = Tensor(np.zeros(wshape, dtype=dtype), requires_grad=True)
        self.b = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True)
        if norm:
            self.gamma = Tensor(np.ones(c_out, dtype=dtype), requires_grad=True)
            self.beta = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True)
            self.running_mean = np.zeros(c_out, dtype=dtype)
            self.running_var = np.ones(c_out, dtype=dtype)

    def forward(self, x: Tensor, training: bool) -> Tensor:
        if self.transpose:
            y = ad.conv2d_transpose(x, self.w, self.b, self.stride, self.pad)
        else:
            y = ad.conv2d(x, self.w, self.b, self.stride, self.pad)
        if self.norm:
            y = ad.batch_norm(
                y, self.gamma, self.beta,
                running_mean=self.running_mean, running_var=self.running_var,
                training=training,
            )
        if self.act == "relu":
            y = ad.relu(y)
        elif self.act == "leaky":
            y = ad.leaky_relu(y, 0.2)
        elif self.act == "tanh":
            y = ad.tanh(y)
        elif self.act == "sigmoid":
            y = ad.sigmoid(y)
        return y

    def named_params(self, prefix):
        yield f"{prefix}.w", self.w
        yield f"{prefix}.b", self.b
        if self.norm:
            yield f"{prefix}.gamma", self.gamma
            yield f"{prefix}.beta", self.beta

    def named_buffers(self, prefix):
        if self.norm:
            yield f"{prefix}.running_mean", self.running_mean
            yield f"{prefix}.running_var", self.running_var

    def init(self, rng: np.random.Generator):
        dtype = self.w.data.dtype
        self.w.data = rng.normal(0.0, 0.02, self.w.data.shape).astype(dtype)
        self.b.data = np.zeros_like(self.b.data)
        if self.norm:
            self.gamma.data = rng.normal(1.0, 0.02, self.gamma.data.shape).astype(dtype)
            self.beta.data = np.zeros_like(self.beta.data)
            self.running_mean[:] = 0.0
            self.running_var[:] = 1.0


class Network:
    """Flat container of named ConvUnits plus a forward program."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.units: list[tuple[str, ConvUnit]] = []

    def _add(self, name: str, unit: ConvUnit) -> ConvUnit:
        self.units.append((name, unit))
        return unit

    def named_params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, unit in self.units:
            out.update(unit.named_params(name))
        return out

    def named_buffers(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for name, unit in self.units:
            out.update(unit.named_buffers(name))
        return out

    def set_buffer(self, name: str, value: np.ndarray):
        prefix, _, attr = name.rpartition(".")
        for uname, unit in self.units:
            if uname == prefix:
                getattr(unit, attr)[:] = value
                return
        raise KeyError(name)

    def zero_grads(self):
        for p in self.named_params().values():
            p.zero_grad()

    def param_count(self) -> int:
        return sum(p.data.size for p in self.named_params().values())


class Generator(Network):
    def __init__(self, spec: ModelSpec, dtype=np.float32):
        super().__init__(spec)
        w = spec.base_width
        self.stem = self._add(
            "stem", ConvUnit(GEN_IN_CHANNELS, w, 7, 1, 3, act="relu", dtype=dtype))
        self.down1 = self._add(
            "down1", ConvUnit(w, 2 * w, 3, 2, 1, act="relu", dtype=dtype))
        self.down2 = self._add(
            "down2", ConvUnit(2 * w, 4 * w, 3, 2, 1, act="relu", dtype=dtype))
        self.res = []
        for i in range(spec.n_residual_blocks):
            first = self._add(
                f"res{i}.conv1", ConvUnit(4 * w, 4 * w, 3, 1, 1, act="relu", dtype=dtype))
            second = self._add(
                f"res{i}.conv2", ConvUnit(4 * w, 4 * w, 3, 1, 1, act=None, dtype=dtype))
            self.res.append((first, second))
        self.up1 = self._add(
            "up1", ConvUnit(4 * w, 2 * w, 4, 2, 1, act="relu", transpose=True, dtype=dtype))
        self.up2 = self._add(
            "up2", ConvUnit(2 * w, w, 4, 2, 1, act="relu", transpose=True, dtype=dtype))
        self.out = self._add(
            "out", ConvUnit(w, 3, 7, 1, 3, norm=False, act="tanh", dtype=dtype))

    def forward(self, x: Tensor, training: bool) -> Tensor:
        z = self.stem.forward(x, training)
        z = self.down1.forward(z, training)
        z = self.down2.forward(z, training)
        for first, second in self.res:
            z = ad.add(z, second.forward(first.forward(z, training), training))
        z = self.up1.forward(z, training)
        z = self.up2.forward(z, training)
        return self.out.forward(z, training)


class Discriminator(Network):
    def __init__(self, spec: ModelSpec, dtype=np.float32):
        super().__init__(spec)
        w = spec.base_width
        widths = [w, 2 * w, 4 * w, 8 * w, 8 * w, 8 * w]
        self.hidden = []
        c_in = DISC_IN_CHANNELS
        size = spec.image_size
        for i, c_out in enumerate(widths):
            if size >= 8:
                k, stride, pad = 4, 2, 1
                size //= 2
            else:
                k, stride, pad = 3, 1, 1
            unit = self._add(
                f"hidden{i}",
                ConvUnit(c_in, c_out, k, stride, pad, norm=(i > 0), act="leaky", dtype=dtype),
            )
            self.hidden.append(unit)
            c_in = c_out
        self.head1 = self._add(
            "head1", ConvUnit(c_in, 4 * w, 3, 1, 1, norm=False, act="leaky", dtype=dtype))
        self.head2 = self._add(
            "head2", ConvUnit(4 * w, 1, 3, 1, 1, norm=False, act="sigmoid", dtype=dtype))

    def forward(self, x: Tensor, training: bool) -> Tensor:
        z = x
        for unit in self.hidden:
            z = unit.forward(z, training)
        z = self.head1.forward(z, training)
        return self.head2.forward(z, training)


def build_generator(spec: ModelSpec, dtype=np.float32) -> Generator:
    spec.validate()
    return Generator(spec, dtype=dtype)


def build_discriminator(spec: ModelSpec, dtype=np.float32) -> Discriminator:
    spec.validate()
    return Discriminator(spec, dtype=dtype)


def init_params(net: Network, seed: int) -> Network:
    """Deterministic initialization: conv weights ~ N(0, 0.02), batch-norm
    gamma ~ N(1, 0.02), all biases and betas zero."""
    rng = np.random.default_rng(seed)
    for _, unit in net.units:
        unit.init(rng)
    return net
