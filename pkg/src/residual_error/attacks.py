"""Fast Gradient Sign Method against a trained :class:`PrimaryModel`."""
from dataclasses import dataclass

import numpy as np

from .autograd import ComputationTape, Tensor, backward
from .errors import DimensionError, NumericDivergenceError, ValidationError

PIXEL_SCALE = 255.0


@dataclass(frozen=True)
class AttackConfig:
    """FGSM budget on the raw 0-255 pixel scale.

    The step applied to normalized inputs is ``epsilon_raw / 255``.
    """

    epsilon_raw: float = 8.0
    value_range: tuple = (0.0, 1.0)
    clip: bool = True

    def __post_init__(self):
        if not self.epsilon_raw >= 0:
            raise ValidationError(f"epsilon_raw must be >= 0, got {self.epsilon_raw}")
        lo, hi = self.value_range
        if not lo < hi:
            raise ValidationError(f"value_range must satisfy min < max, got {self.value_range}")

    @property
    def epsilon(self):
        return self.epsilon_raw / PIXEL_SCALE

    def to_dict(self):
        return {"epsilon_raw": self.epsilon_raw, "value_range": list(self.value_range), "clip": self.clip}


def input_gradient(model, x, y):
    """Gradient of each sample's own loss with respect to its input row."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise DimensionError(f"model expects inputs of width {model.input_dim}, got shape {x.shape}")
    xt = Tensor(x, requires_grad=True)
    params = [Tensor(p) for p in model.parameters()]
    with ComputationTape() as tape:
        # summed loss: row i's gradient is exactly d loss_i / d x_i
        loss = model.loss(model.forward(xt, params), y, reduction="sum")
    return backward(tape, loss)[xt]


def fgsm(model, x, y, config=AttackConfig()):
    """x + eps * sign(grad_x loss(x, y)), with sign(0) = 0, optionally clipped.

    Accepts one sample (shape (d,)) with a scalar label, or a batch.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x.reshape(1, -1) if single else x
    yb = np.atleast_1d(np.asarray(y))
    if yb.shape[0] != xb.shape[0]:
        raise DimensionError(f"{yb.shape[0]} labels for {xb.shape[0]} inputs")
    lo, hi = config.value_range
    if xb.size and (xb.min() < lo - 1e-12 or xb.max() > hi + 1e-12):
        raise ValidationError(f"inputs fall outside value_range {config.value_range}")
    if config.epsilon_raw == 0:
        return x.copy()
    grad = input_gradient(model, xb, yb)
    if not np.all(np.isfinite(grad)):
        raise NumericDivergenceError("non-finite input gradient in fgsm")
    adv = xb + config.epsilon * np.sign(grad)
    # rounding can leave |adv - x| one ulp above eps; step those back toward x
    over = np.abs(adv - xb) > config.epsilon
    while over.any():
        adv[over] = np.nextafter(adv[over], xb[over])
        over = np.abs(adv - xb) > config.epsilon
    if config.clip:
        adv = np.clip(adv, lo, hi)
    return adv[0] if single else adv


def perturb_dataset(model, dataset, config=AttackConfig(), batch_size=512):
    """FGSM copy of ``dataset``: same labels and order, inputs replaced."""
    if len(dataset) == 0:
        raise ValidationError("cannot perturb an empty dataset")
    out = np.empty_like(dataset.inputs)
    for start in range(0, len(dataset), batch_size):
        stop = min(start + batch_size, len(dataset))
        try:
            out[start:stop] = fgsm(model, dataset.inputs[start:stop], dataset.labels[start:stop], config)
        except (ValidationError, NumericDivergenceError) as exc:
            bad = _first_bad_index(model, dataset, start, stop, config)
            raise type(exc)(f"sample {bad}: {exc}") from exc
    return dataset.with_inputs(out, name=f"{dataset.name}/fgsm{config.epsilon_raw:g}")


def _first_bad_index(model, dataset, start, stop, config):
    for i in range(start, stop):
        try:
            fgsm(model, dataset.inputs[i], dataset.labels[i], config)
        except (ValidationError, NumericDivergenceError):
            return i
    return start
