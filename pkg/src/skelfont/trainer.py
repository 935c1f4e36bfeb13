"""Training loop over two generators and two discriminators.

One step runs the forward pipeline

    in_x = expand(x);  y~ = G_y(in_x);  x~ = G_x(expand(y~))

plus the mirrored path from y, updates the discriminators against
detached fakes, then updates the generators on the adversarial,
cycle, and skeleton terms. Each discriminator scores its domain's
real batch, the translated fakes from the mirrored cycle, and the
reconstructed fakes from its own cycle, matching the loss definitions
trained symmetrically in both directions.

With the skeleton channel disabled the fourth generator input channel
is the constant -1 and the skeleton weight is forced to 0, which is
exactly the plain cycle-consistent baseline on the same architecture.

Training is a pure function of (config, dataset bytes, seed):
permutations are derived per (seed, epoch, domain), the update order
is fixed, and checkpoints capture parameters, optimizer moments, RNG
state, and the step counter, so a resumed run is bit-identical to an
uninterrupted one.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from skelfont import autodiff as ad
from skelfont.autodiff import AdamState, Tensor, adam_step
from skelfont.checkpoint import load_container, save_container
from skelfont.data import LoadedDataset, epoch_permutation
from skelfont.errors import DataEmpty, NonFiniteLoss, ShapeMismatch
from skelfont.expansion import batch_skeleton_masks
from skelfont.imgcore import KIND_RGB, RasterImage
from skelfont.losses import (
    GAN_LOSS_MODES,
    LossBreakdown,
    LossWeights,
    SKE_GRAD_MODES,
    adv_loss_d,
    adv_loss_g,
    cycle_loss,
    ske_loss,
    total_loss,
)
from skelfont.models import (
    Discriminator,
    Generator,
    ModelSpec,
    build_discriminator,
    build_generator,
    desk_spec,
    init_params,
)
from skelfont.skeleton import ske

LOG_HEADER = "step,adv_x,adv_y,cyc,ske,total"

DIRECTION_XY = "xy"
DIRECTION_YX = "yx"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1
    max_steps: int | None = None
    batch_size: int = 4
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    weights: LossWeights = field(default_factory=LossWeights)
    spec: ModelSpec = field(default_factory=desk_spec)
    seed: int = 0
    threshold: float = 0.5
    skeleton_channel: bool = True
    gan_loss: str = "nonsat"
    ske_grad: str = "masked-intensity"
    checkpoint_every: int = 0

    def validate(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.gan_loss not in GAN_LOSS_MODES:
            raise ValueError(f"gan_loss must be one of {GAN_LOSS_MODES}")
        if self.ske_grad not in SKE_GRAD_MODES:
            raise ValueError(f"ske_grad must be one of {SKE_GRAD_MODES}")
        self.weights.validate()
        self.spec.validate()

    def effective_weights(self) -> LossWeights:
        if self.skeleton_channel:
            return self.weights
        return replace(self.weights, lambda_ske=0.0)

    def to_dict(self) -> dict:
        return asdict(self)


def config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    d["weights"] = LossWeights(**d["weights"])
    d["spec"] = ModelSpec(**d["spec"])
    return TrainConfig(**d)


@dataclass
class ModelBundle:
    """The four networks, the two optimizer states, and the step counter."""

    g_y: Generator
    g_x: Generator
    d_x: Discriminator
    d_y: Discriminator
    opt_g: AdamState
    opt_d: AdamState
    rng: np.random.Generator
    step: int = 0

    def generators(self) -> dict[str, Generator]:
        return {"g_y": self.g_y, "g_x": self.g_x}

    def discriminators(self) -> dict[str, Discriminator]:
        return {"d_x": self.d_x, "d_y": self.d_y}

    def networks(self) -> dict:
        return {**self.generators(), **self.discriminators()}


def build_bundle(cfg: TrainConfig) -> ModelBundle:
    cfg.validate()
    seeds = np.random.SeedSequence(cfg.seed).generate_state(5)
    g_y = init_params(build_generator(cfg.spec), int(seeds[0]))
    g_x = init_params(build_generator(cfg.spec), int(seeds[1]))
    d_x = init_params(build_discriminator(cfg.spec), int(seeds[2]))
    d_y = init_params(build_discriminator(cfg.spec), int(seeds[3]))
    opt = dict(lr=cfg.learning_rate, beta1=cfg.beta1, beta2=cfg.beta2)
    return ModelBundle(
        g_y=g_y, g_x=g_x, d_x=d_x, d_y=d_y,
        opt_g=AdamState(**opt), opt_d=AdamState(**opt),
        rng=np.random.default_rng(int(seeds[4])),
    )


# --- batch construction ---

def images_to_model_batch(images) -> np.ndarray:
    """Stack RasterImages into an (N, 3, H, W) float32 batch in [-1, 1]."""
    arrs = [img.data.transpose(2, 0, 1) for img in images]
    return np.stack(arrs, axis=0) * np.float32(2.0) - np.float32(1.0)


def source_masks(images, cfg: TrainConfig) -> np.ndarray | None:
    if not cfg.skeleton_channel:
        return None
    bits = np.stack([ske(img, cfg.threshold).bits for img in images], axis=0)
    return bits[:, None, :, :].astype(np.float32)


def _skeleton_plane(masks: np.ndarray | None, shape) -> np.ndarray:
    """Fourth input channel: 2*mask - 1, or constant -1 when disabled."""
    n, _, h, w = shape
    if masks is None:
        return np.full((n, 1, h, w), -1.0, dtype=np.float32)
    return masks * np.float32(2.0) - np.float32(1.0)


def expanded_input(rgb_batch: np.ndarray, masks: np.ndarray | None) -> Tensor:
    plane = _skeleton_plane(masks, rgb_batch.shape)
    return Tensor(np.concatenate([rgb_batch, plane.astype(rgb_batch.dtype)], axis=1))


def expanded_from_generated(generated: Tensor, cfg: TrainConfig) -> Tensor:
    """Expansion inside the cycle; the skeleton plane is gradient-opaque."""
    if cfg.skeleton_channel:
        masks = batch_skeleton_masks(generated.data, cfg.threshold)
    else:
        masks = None
    plane = _skeleton_plane(masks, generated.data.shape).astype(generated.data.dtype)
    return ad.concat(generated, Tensor(plane), axis=1)


def _params_and_grads(nets: dict) -> tuple[dict, dict]:
    params: dict[str, np.ndarray] = {}
    grads: dict[str, np.ndarray] = {}
    for net_name, net in nets.items():
        for pname, p in net.named_params().items():
            key = f"{net_name}/{pname}"
            params[key] = p.data
            grads[key] = p.grad
    return params, grads


def _zero_all(nets: dict):
    for net in nets.values():
        net.zero_grads()


def train_step(batch_x, batch_y, bundle: ModelBundle, cfg: TrainConfig,
               masks_x: np.ndarray | None = None,
               masks_y: np.ndarray | None = None) -> LossBreakdown:
    """One full update: discriminators first, then both generators.

    masks_x/masks_y may carry precomputed skeleton masks of the source
    batches ((N, 1, H, W) {0,1} floats); they are recomputed here when
    omitted.
    """
    if len(batch_x) != len(batch_y):
        raise ShapeMismatch(
            f"unpaired batches must have equal size, got {len(batch_x)} vs {len(batch_y)}"
        )
    rgb_x = images_to_model_batch(batch_x)
    rgb_y = images_to_model_batch(batch_y)
    if masks_x is None:
        masks_x = source_masks(batch_x, cfg)
    if masks_y is None:
        masks_y = source_masks(batch_y, cfg)
    x_real = Tensor(rgb_x)
    y_real = Tensor(rgb_y)

    # forward pipeline, both directions
    y_tilde = bundle.g_y.forward(expanded_input(rgb_x, masks_x), training=True)
    x_tilde = bundle.g_x.forward(expanded_from_generated(y_tilde, cfg), training=True)
    x_hat = bundle.g_x.forward(expanded_input(rgb_y, masks_y), training=True)
    y_hat = bundle.g_y.forward(expanded_from_generated(x_hat, cfg), training=True)

    # discriminator update on detached fakes
    _zero_all(bundle.networks())
    fakes_x = Tensor(np.concatenate([x_tilde.data, x_hat.data], axis=0))
    fakes_y = Tensor(np.concatenate([y_tilde.data, y_hat.data], axis=0))
    adv_x_t = adv_loss_d(bundle.d_x.forward(x_real, True),
                         bundle.d_x.forward(fakes_x, True))
    adv_y_t = adv_loss_d(bundle.d_y.forward(y_real, True),
                         bundle.d_y.forward(fakes_y, True))
    ad.add(adv_x_t, adv_y_t).backward()
    d_params, d_grads = _params_and_grads(bundle.discriminators())
    adam_step(d_params, d_grads, bundle.opt_d)

    # generator update against the refreshed discriminators
    _zero_all(bundle.networks())
    g_scores_x = bundle.d_x.forward(ad.concat(x_tilde, x_hat, axis=0), True)
    g_scores_y = bundle.d_y.forward(ad.concat(y_tilde, y_hat, axis=0), True)
    g_adv = ad.add(adv_loss_g(g_scores_x, cfg.gan_loss),
                   adv_loss_g(g_scores_y, cfg.gan_loss))
    cyc_t = ad.add(cycle_loss(x_real, x_tilde), cycle_loss(y_real, y_hat))
    weights = cfg.effective_weights()
    g_obj = ad.add(g_adv, ad.mul_scalar(cyc_t, weights.lambda_cyc))
    if cfg.skeleton_channel and weights.lambda_ske != 0.0:
        ske_t = ad.add(
            ske_loss(None, x_tilde, cfg.threshold, cfg.ske_grad, x_masks=masks_x),
            ske_loss(None, y_hat, cfg.threshold, cfg.ske_grad, x_masks=masks_y),
        )
        g_obj = ad.add(g_obj, ad.mul_scalar(ske_t, weights.lambda_ske))
        ske_value = ske_t.item()
    else:
        ske_value = 0.0
    g_obj.backward()
    g_params, g_grads = _params_and_grads(bundle.generators())
    adam_step(g_params, g_grads, bundle.opt_g)
    _zero_all(bundle.networks())

    breakdown = total_loss(adv_x_t.item(), adv_y_t.item(), cyc_t.item(),
                           ske_value, weights)
    if not breakdown.is_finite():
        raise NonFiniteLoss(
            f"non-finite loss at step {bundle.step}: {breakdown}"
        )
    return breakdown


# --- checkpointing ---

def _bundle_tensors(bundle: ModelBundle) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {}
    for net_name, net in bundle.networks().items():
        for pname, p in net.named_params().items():
            tensors[f"{net_name}/{pname}"] = p.data
        for bname, buf in net.named_buffers().items():
            tensors[f"{net_name}/{bname}"] = buf
    for opt_name, state in (("opt_g", bundle.opt_g), ("opt_d", bundle.opt_d)):
        for key in sorted(state.m):
            tensors[f"{opt_name}/m/{key}"] = state.m[key]
            tensors[f"{opt_name}/v/{key}"] = state.v[key]
        tensors[f"{opt_name}/t"] = np.array(state.t, dtype=np.uint64)
    return tensors


def _state_blob(bundle: ModelBundle, cfg: TrainConfig) -> bytes:
    payload = {
        "config": cfg.to_dict(),
        "rng": bundle.rng.bit_generator.state,
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_bundle(path, bundle: ModelBundle, cfg: TrainConfig):
    save_container(path, _bundle_tensors(bundle), step=bundle.step,
                   blob=_state_blob(bundle, cfg))


def load_bundle(path) -> tuple[ModelBundle, TrainConfig]:
    tensors, step, blob = load_container(path)
    payload = json.loads(blob.decode("utf-8"))
    cfg = config_from_dict(payload["config"])
    bundle = build_bundle(cfg)
    for net_name, net in bundle.networks().items():
        for pname, p in net.named_params().items():
            p.data = tensors[f"{net_name}/{pname}"].copy()
        for bname in net.named_buffers():
            net.set_buffer(bname, tensors[f"{net_name}/{bname}"])
    for opt_name, state in (("opt_g", bundle.opt_g), ("opt_d", bundle.opt_d)):
        state.t = int(tensors[f"{opt_name}/t"])
        prefix_m = f"{opt_name}/m/"
        for key in tensors:
            if key.startswith(prefix_m):
                short = key[len(prefix_m):]
                state.m[short] = tensors[key].copy()
                state.v[short] = tensors[f"{opt_name}/v/{short}"].copy()
    bundle.rng = np.random.default_rng(0)
    bundle.rng.bit_generator.state = payload["rng"]
    bundle.step = step
    return bundle, cfg


# --- the loop ---

def _steps_per_epoch(n: int, batch_size: int) -> int:
    return math.ceil(n / batch_size)


def train(cfg: TrainConfig, dataset: LoadedDataset, out_path,
          log_path=None, resume_path=None):
    """Run (or resume) training; returns (checkpoint path, breakdown rows)."""
    if resume_path is not None:
        bundle, cfg = load_bundle(resume_path)
    else:
        cfg.validate()
        bundle = build_bundle(cfg)
    nx, ny = len(dataset.train_x), len(dataset.train_y)
    n = min(nx, ny)
    if n == 0:
        raise DataEmpty("training split is empty")
    spe = _steps_per_epoch(n, cfg.batch_size)
    total = cfg.epochs * spe
    if cfg.max_steps is not None:
        total = min(total, cfg.max_steps)
    # source skeletons never change; extract each train image's mask once
    cache_x = cache_y = None
    if cfg.skeleton_channel:
        cache_x = [ske(img, cfg.threshold).bits.astype(np.float32)
                   for img in dataset.train_x]
        cache_y = [ske(img, cfg.threshold).bits.astype(np.float32)
                   for img in dataset.train_y]
    rows: list[tuple[int, LossBreakdown]] = []
    log_fh = None
    if log_path is not None:
        fresh = bundle.step == 0 or not os.path.exists(log_path)
        log_fh = open(log_path, "w" if fresh else "a", encoding="utf-8", newline="\n")
        if fresh:
            log_fh.write(LOG_HEADER + "\n")
    try:
        for step in range(bundle.step, total):
            epoch = step // spe
            offset = step % spe
            perm_x = epoch_permutation(nx, cfg.seed, epoch, 0)[:n]
            perm_y = epoch_permutation(ny, cfg.seed, epoch, 1)[:n]
            lo = offset * cfg.batch_size
            hi = min(lo + cfg.batch_size, n)
            idx_x = [int(i) for i in perm_x[lo:hi]]
            idx_y = [int(i) for i in perm_y[lo:hi]]
            batch_x = [dataset.train_x[i] for i in idx_x]
            batch_y = [dataset.train_y[i] for i in idx_y]
            masks_x = masks_y = None
            if cfg.skeleton_channel:
                masks_x = np.stack([cache_x[i] for i in idx_x])[:, None]
                masks_y = np.stack([cache_y[i] for i in idx_y])[:, None]
            breakdown = train_step(batch_x, batch_y, bundle, cfg,
                                   masks_x=masks_x, masks_y=masks_y)
            bundle.step = step + 1
            rows.append((step, breakdown))
            if log_fh is not None:
                log_fh.write(format_log_row(step, breakdown) + "\n")
            if (cfg.checkpoint_every and bundle.step % cfg.checkpoint_every == 0
                    and bundle.step < total):
                save_bundle(f"{out_path}.step{bundle.step}", bundle, cfg)
    finally:
        if log_fh is not None:
            log_fh.close()
    save_bundle(out_path, bundle, cfg)
    return out_path, rows


def format_log_row(step: int, b: LossBreakdown) -> str:
    return (f"{step},{b.adv_x:.9g},{b.adv_y:.9g},{b.cyc:.9g},"
            f"{b.ske:.9g},{b.total:.9g}")


# --- inference ---

def generate(bundle: ModelBundle, cfg: TrainConfig, images,
             direction: str = DIRECTION_XY, chunk: int = 16) -> list[RasterImage]:
    """Translate images through the selected generator in eval mode."""
    if direction not in (DIRECTION_XY, DIRECTION_YX):
        raise ValueError(f"direction must be 'xy' or 'yx', got {direction!r}")
    gen = bundle.g_y if direction == DIRECTION_XY else bundle.g_x
    out: list[RasterImage] = []
    for start in range(0, len(images), chunk):
        part = images[start:start + chunk]
        rgb = images_to_model_batch(part)
        masks = source_masks(part, cfg)
        result = gen.forward(expanded_input(rgb, masks), training=False)
        arr = np.clip((result.data + 1.0) / 2.0, 0.0, 1.0)
        for i in range(arr.shape[0]):
            hwc = arr[i].transpose(1, 2, 0).astype(np.float32)
            h, w, _ = hwc.shape
            out.append(RasterImage(width=w, height=h, channels=3,
                                   data=hwc, kind=KIND_RGB))
    return out


def generate_from_checkpoint(path, images, direction: str = DIRECTION_XY) -> list[RasterImage]:
    bundle, cfg = load_bundle(path)
    return generate(bundle, cfg, images, direction)


# --- mode-collapse diagnostic ---

def _mean_pairwise_distance(images) -> float:
    total = 0.0
    count = 0
    for i in range(len(images)):
        a = images[i].data
        for j in range(i + 1, len(images)):
            total += float(np.abs(a - images[j].data).mean())
            count += 1
    return total / count


def diversity_diagnostic(generated, reference,
                         duplicate_threshold: float = 0.01) -> tuple[float, dict]:
    """Normalized pairwise output diversity; values near 0 flag collapse.

    Mean pairwise L1 distance over generated images divided by the
    same statistic over the reference set, clipped to [0, 1]. The
    report lists clusters of outputs closer than duplicate_threshold.
    """
    if len(generated) < 2 or len(reference) < 2:
        raise DataEmpty("diversity needs at least 2 generated and 2 reference images")
    mean_gen = _mean_pairwise_distance(generated)
    mean_ref = _mean_pairwise_distance(reference)
    ratio = 0.0 if mean_ref == 0.0 else mean_gen / mean_ref
    score = min(ratio, 1.0)

    parent = list(range(len(generated)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    duplicate_pairs = 0
    for i in range(len(generated)):
        a = generated[i].data
        for j in range(i + 1, len(generated)):
            if float(np.abs(a - generated[j].data).mean()) < duplicate_threshold:
                duplicate_pairs += 1
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[rj] = ri
    clusters: dict[int, list[int]] = {}
    for i in range(len(generated)):
        clusters.setdefault(find(i), []).append(i)
    dup_clusters = sorted(
        (members for members in clusters.values() if len(members) > 1),
        key=lambda m: (-len(m), m),
    )
    report = {
        "generated_mean_distance": mean_gen,
        "reference_mean_distance": mean_ref,
        "ratio": ratio,
        "duplicate_pairs": duplicate_pairs,
        "duplicate_clusters": dup_clusters,
    }
    return score, report
