"""Adversarial training loop with physics feedback and domain adaptation.

Each step: run the generator on the degraded image (and, when domain
adaptation is on, the encoder on a random real underwater image), re-degrade
the output with the quad's stored transmission/background, take one update
of each discriminator, then one generator update on the combined objective.
Ablation flags cut whole loss paths; a cut term is absent from the
breakdown, never a computed zero.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
import torch

from . import datasets
from .errors import DataError, DivergenceError, ValidationError
from .losses import (
    LossBreakdown,
    LossWeights,
    adversarial_losses,
    coral_loss,
    cycle_loss,
    pixel_losses,
    total_loss,
)
from .models import (
    Generator,
    PatchDiscriminator,
    image_to_tensor,
    init_weights,
    tensor_to_image,
)

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "uwenhance-checkpoint-v1"
LOSS_LOG_NAME = "loss_log.jsonl"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 1
    epochs: int = 1
    max_steps: int | None = None  # overrides epochs when set
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    disable_da: bool = False
    disable_feedback: bool = False
    disable_pixel: bool = False
    checkpoint_every: int = 500

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "weights" in d and isinstance(d["weights"], dict):
            d["weights"] = LossWeights(**d["weights"])
        return cls(**d)


class TrainState:
    """Owns the networks, optimizers, counters, and rng streams."""

    def __init__(self, config: TrainConfig):
        self.config = config
        self.generator = init_weights(Generator(), seed=config.seed)
        self.disc_g = init_weights(PatchDiscriminator(), seed=config.seed + 1)
        self.disc_p = (
            None
            if config.disable_feedback
            else init_weights(PatchDiscriminator(), seed=config.seed + 2)
        )
        betas = (config.beta1, config.beta2)
        lr = config.learning_rate
        self.opt_g = torch.optim.Adam(self.generator.parameters(), lr=lr, betas=betas)
        self.opt_dg = torch.optim.Adam(self.disc_g.parameters(), lr=lr, betas=betas)
        self.opt_dp = (
            None
            if self.disc_p is None
            else torch.optim.Adam(self.disc_p.parameters(), lr=lr, betas=betas)
        )
        self.step = 0


def quad_to_tensors(quad: datasets.SyntheticQuad):
    """SyntheticQuad arrays -> (y, x, t, B) float32 training tensors."""
    y = image_to_tensor(quad.underwater)
    x = image_to_tensor(quad.ground_truth)
    t = image_to_tensor(quad.transmission)
    b = torch.tensor(np.asarray(quad.background, dtype=np.float32)).view(1, 3, 1, 1)
    return y, x, t, b


def _set_requires_grad(net, flag: bool):
    for p in net.parameters():
        p.requires_grad_(flag)


def train_step(
    state: TrainState,
    quad: datasets.SyntheticQuad,
    real_image: np.ndarray | None,
    config: TrainConfig | None = None,
) -> LossBreakdown:
    """One alternation: both discriminators, then the generator."""
    config = config or state.config
    if not config.disable_da and real_image is None:
        raise ValidationError("domain adaptation enabled but no real image supplied")
    y, x, t, b = quad_to_tensors(quad)

    g_y, feat_y = state.generator(y)
    use_feedback = not config.disable_feedback
    y_tilde = g_y * t + b * (1.0 - t) if use_feedback else None

    # discriminator updates on detached fakes
    dg_real = state.disc_g(x)
    dg_fake, dp_real, dp_fake = state.disc_g(g_y.detach()), None, None
    if use_feedback:
        dp_real = state.disc_p(y)
        dp_fake = state.disc_p(y_tilde.detach())
    l_d_g, l_d_p, _ = adversarial_losses(dg_real, dg_fake, dp_real, dp_fake)
    state.opt_dg.zero_grad()
    l_d_g.backward()
    state.opt_dg.step()
    if use_feedback:
        state.opt_dp.zero_grad()
        l_d_p.backward()
        state.opt_dp.step()

    # generator update against the just-updated, frozen discriminators
    _set_requires_grad(state.disc_g, False)
    if use_feedback:
        _set_requires_grad(state.disc_p, False)
    try:
        dg_fake_g = state.disc_g(g_y)
        dp_fake_g = state.disc_p(y_tilde) if use_feedback else None
        _, _, l_a = adversarial_losses(
            dg_real.detach(), dg_fake_g, dp_real.detach() if use_feedback else None, dp_fake_g
        )
        l_g = l_m = l_pixel = l_cycle = l_coral = None
        if not config.disable_pixel:
            if use_feedback:
                l_g, l_m, l_pixel = pixel_losses(g_y, x, y_tilde, y)
            else:
                # no regenerated image to compare; the pixel term is l_g alone
                l_g = (g_y - x).abs().mean()
                l_pixel = l_g
        if use_feedback:
            g_y_tilde, _ = state.generator(y_tilde)
            l_cycle = cycle_loss(g_y_tilde, x)
        if not config.disable_da:
            feat_r = state.generator.features(image_to_tensor(real_image))
            l_coral = coral_loss(feat_y, feat_r)

        total, breakdown = total_loss(
            l_a,
            config.weights,
            l_g=l_g,
            l_m=l_m,
            l_pixel=l_pixel,
            l_cycle=l_cycle,
            l_coral=l_coral,
            l_d_g=l_d_g,
            l_d_p=l_d_p,
        )
        state.opt_g.zero_grad()
        total.backward()
        state.opt_g.step()
    finally:
        _set_requires_grad(state.disc_g, True)
        if use_feedback:
            _set_requires_grad(state.disc_p, True)

    state.step += 1
    return breakdown


# --- checkpointing --------------------------------------------------------


def save_checkpoint(state: TrainState, path: str) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": state.config.to_dict(),
        "step": state.step,
        "generator": state.generator.state_dict(),
        "disc_g": state.disc_g.state_dict(),
        "disc_p": None if state.disc_p is None else state.disc_p.state_dict(),
        "opt_g": state.opt_g.state_dict(),
        "opt_dg": state.opt_dg.state_dict(),
        "opt_dp": None if state.opt_dp is None else state.opt_dp.state_dict(),
    }
    tmp = path + ".tmp"
    torch.save(payload, tmp)
    os.replace(tmp, path)


def load_checkpoint(path: str) -> TrainState:
    if not os.path.exists(path):
        raise DataError(f"checkpoint not found: {path}")
    payload = torch.load(path, weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"unrecognized checkpoint format in {path}")
    state = TrainState(TrainConfig.from_dict(payload["config"]))
    state.generator.load_state_dict(payload["generator"])
    state.disc_g.load_state_dict(payload["disc_g"])
    if state.disc_p is not None and payload["disc_p"] is not None:
        state.disc_p.load_state_dict(payload["disc_p"])
    state.opt_g.load_state_dict(payload["opt_g"])
    state.opt_dg.load_state_dict(payload["opt_dg"])
    if state.opt_dp is not None and payload["opt_dp"] is not None:
        state.opt_dp.load_state_dict(payload["opt_dp"])
    state.step = payload["step"]
    return state


# --- loop -----------------------------------------------------------------


def train_loop(
    dataset_dir: str,
    real_pool_dir: str | None,
    config: TrainConfig,
    out_dir: str,
    resume_from: str | None = None,
    preview_count: int = 4,
) -> str:
    """Train to completion; returns the final checkpoint path.

    Deterministic for a fixed (dataset, pool, config) on one platform. Writes
    a per-step loss log, cadenced checkpoints, and enhanced previews of the
    first few training quads.
    """
    manifest = datasets.load_manifest(dataset_dir)
    records = [r for r in manifest["records"] if r.get("split", "train") == "train"]
    if not records:
        raise ValidationError(f"no training records in {dataset_dir}")

    pool: list[np.ndarray] = []
    if not config.disable_da:
        if real_pool_dir is None:
            raise ValidationError("domain adaptation enabled but no real pool given")
        pool, _ = datasets.load_real_pool(real_pool_dir)
        if not pool:
            raise ValidationError(
                f"domain adaptation enabled but real pool {real_pool_dir} is empty"
            )

    os.makedirs(out_dir, exist_ok=True)
    state = load_checkpoint(resume_from) if resume_from else TrainState(config)
    total_steps = (
        config.max_steps if config.max_steps is not None else config.epochs * len(records)
    )
    log_path = os.path.join(out_dir, LOSS_LOG_NAME)
    log_mode = "a" if resume_from else "w"

    quads = {r["id"]: datasets.load_quad(dataset_dir, r) for r in records}
    record_ids = [r["id"] for r in records]
    last_breakdown: LossBreakdown | None = None
    with open(log_path, log_mode) as loss_log:
        while state.step < total_steps:
            # order and pool picks are pure functions of (seed, step) so a
            # resumed run replays the exact schedule of an uninterrupted one
            epoch, pos = divmod(state.step, len(record_ids))
            order = list(record_ids)
            np.random.default_rng([config.seed, 0xDA7A, epoch]).shuffle(order)
            rid = order[pos]
            real = None
            if not config.disable_da:
                pick = np.random.default_rng([config.seed, 0x9EA1, state.step])
                real = pool[int(pick.integers(len(pool)))]
            try:
                breakdown = train_step(state, quads[rid], real, config)
            except DivergenceError as exc:
                last = None if last_breakdown is None else last_breakdown.to_dict()
                raise DivergenceError(
                    f"divergence at step {state.step}: {exc}; last finite breakdown: {last}"
                ) from exc
            last_breakdown = breakdown
            loss_log.write(
                json.dumps({"step": state.step, "record": rid, **breakdown.to_dict()})
                + "\n"
            )
            if config.checkpoint_every and state.step % config.checkpoint_every == 0:
                save_checkpoint(state, os.path.join(out_dir, f"checkpoint_{state.step:07d}.pt"))

    final_path = os.path.join(out_dir, "checkpoint_final.pt")
    save_checkpoint(state, final_path)
    _write_previews(state, records[:preview_count], quads, out_dir)
    return final_path


def _write_previews(state, records, quads, out_dir):
    preview_dir = os.path.join(out_dir, "previews")
    os.makedirs(preview_dir, exist_ok=True)
    with torch.no_grad():
        for r in records:
            quad = quads[r["id"]]
            out, _ = state.generator(image_to_tensor(quad.underwater))
            datasets.save_image(
                os.path.join(preview_dir, f"{r['id']}_enhanced.png"), tensor_to_image(out)
            )


def enhance(
    checkpoint_path: str, images_dir: str, out_dir: str
) -> tuple[list[str], list[dict]]:
    """Run the generator blind (no physics parameters) over a directory."""
    state = load_checkpoint(checkpoint_path)
    if not os.path.isdir(images_dir):
        raise DataError(f"input directory not found: {images_dir}")
    os.makedirs(out_dir, exist_ok=True)
    written, skipped = [], []
    with torch.no_grad():
        for name in sorted(os.listdir(images_dir)):
            path = os.path.join(images_dir, name)
            if not os.path.isfile(path):
                continue
            try:
                img = datasets.load_image(path)
            except Exception as exc:
                skipped.append({"source": path, "reason": str(exc)})
                log.warning("skipping unreadable image %s: %s", path, exc)
                continue
            out, _ = state.generator(image_to_tensor(img))
            out_path = os.path.join(out_dir, os.path.splitext(name)[0] + ".png")
            datasets.save_image(out_path, tensor_to_image(out))
            written.append(out_path)
    return written, skipped
