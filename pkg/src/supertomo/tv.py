"""Total variation of an image and bounded TV-nonascending perturbations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linops import Image


@dataclass(frozen=True)
class SuperiorizationParams:
    """Knobs of the perturbation generator.

    n_steps accepted moves are taken per call; each trial step has length
    base_step * decay**trials, where trials counts every step-length trial
    ever made, so the total perturbation budget is geometrically summable.
    """

    n_steps: int
    decay: float
    base_step: float

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be a positive integer")
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must lie strictly between 0 and 1")
        if self.base_step <= 0.0:
            raise ValueError("base_step must be positive")


@dataclass(frozen=True)
class SuperiorizationState:
    """Number of step-length trials consumed so far (the decay exponent)."""

    trials: int = 0


def tv_value(image: Image) -> float:
    """Isotropic total variation over interior down/right difference pairs.

    Degenerate single-row or single-column images have an empty sum.
    """
    g = image.grid()
    if g.shape[0] < 2 or g.shape[1] < 2:
        return 0.0
    dv = g[:-1, :] - g[1:, :]
    dh = g[:, :-1] - g[:, 1:]
    return float(np.sum(np.sqrt(dv[:, :-1] ** 2 + dh[:-1, :] ** 2)))


def tv_gradient(image: Image) -> tuple[np.ndarray, np.ndarray]:
    """Partial derivatives of tv_value and a mask of where they exist.

    A pixel's partial derivative is defined only when every square-root
    term it touches has a strictly positive argument (exact comparison);
    undefined components are returned as 0 with defined=False.
    """
    g = image.grid()
    l, c = g.shape
    grad = np.zeros((l, c))
    defined = np.ones((l, c), dtype=bool)
    if l < 2 or c < 2:
        # tv_value is constant, all partials are exactly zero
        return grad.ravel(), defined.ravel()

    dv = (g[:-1, :] - g[1:, :])[:, :-1]
    dh = (g[:, :-1] - g[:, 1:])[:-1, :]
    arg = dv * dv + dh * dh
    zero = arg == 0.0
    root = np.sqrt(np.where(zero, 1.0, arg))
    gv = dv / root
    gh = dh / root

    grad[:-1, :-1] += gv + gh
    grad[1:, :-1] -= gv
    grad[:-1, 1:] -= gh

    undef = np.zeros((l, c), dtype=bool)
    undef[:-1, :-1] |= zero
    undef[1:, :-1] |= zero
    undef[:-1, 1:] |= zero
    grad[undef] = 0.0
    defined = ~undef
    return grad.ravel(), defined.ravel()


def nonascending_vector(image: Image) -> np.ndarray:
    """Unit step direction along which tv_value does not increase locally.

    Negated partial derivatives where defined, zero elsewhere, normalized;
    the zero vector when no component survives.
    """
    grad, defined = tv_gradient(image)
    t_bar = np.where(defined, -grad, 0.0)
    n = float(np.linalg.norm(t_bar))
    if n == 0.0:
        return np.zeros_like(t_bar)
    return t_bar / n


def s_tv(
    image: Image,
    state: SuperiorizationState,
    params: SuperiorizationParams,
    max_trials: int = 1_000_000,
) -> tuple[np.ndarray, SuperiorizationState]:
    """One perturbation: n_steps accepted TV-nonascending moves from image.

    Each move retries with geometrically shrinking step lengths until the
    candidate's TV does not exceed the current TV, so tv_value(image + s)
    <= tv_value(image) holds by construction.  Returns the summed step s
    and the advanced trial counter.

    Raises RuntimeError if a single move exhausts max_trials candidates;
    that only happens when TV comparisons misbehave (e.g. NaN data).
    """
    x = image.data
    y = x.copy()
    trials = state.trials
    current_tv = tv_value(image)
    for _ in range(params.n_steps):
        t = nonascending_vector(Image(y, image.rows, image.cols))
        for _ in range(max_trials):
            step = params.base_step * params.decay**trials
            y_trial = y + step * t
            trials += 1
            trial_tv = tv_value(Image(y_trial, image.rows, image.cols))
            if trial_tv <= current_tv:
                y = y_trial
                current_tv = trial_tv
                break
        else:
            raise RuntimeError(
                f"step-length search exhausted {max_trials} trials "
                f"(tv={current_tv!r}); the image is flat to rounding or not finite"
            )
    return y - x, SuperiorizationState(trials)
