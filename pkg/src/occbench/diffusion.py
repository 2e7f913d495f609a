"""Desk-scale conditional DDPM: forward noising, epsilon-prediction loss with
exact backprop through a small perceptron, AdamW, EMA weights and ancestral
sampling. Everything is float64 numpy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import OccbenchError
from .rng import make_rng

Params = dict[str, np.ndarray]
PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")
TIME_FREQS = 4  # sinusoidal time features: sin/cos at pi * 2^k * t/T


@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray

    @property
    def T(self) -> int:
        return len(self.betas)

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> np.ndarray:
        return np.cumprod(self.alphas)

    def alpha_bar(self, t) -> np.ndarray:
        """alpha_bar at 1-based step(s) ``t``."""
        return self.alpha_bars[np.asarray(t) - 1]


def linear_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    if T < 1:
        raise OccbenchError("schedule needs T >= 1")
    betas = np.linspace(beta_start, beta_end, T) if T > 1 else np.array([beta_start])
    return NoiseSchedule(betas)


def q_sample(x0, t, eps, s: NoiseSchedule) -> np.ndarray:
    """Noisy sample at 1-based step ``t`` (scalar or one per row of ``x0``)."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise OccbenchError(f"x0 {x0.shape} and eps {eps.shape} differ in shape")
    t = np.asarray(t)
    if np.any(t < 1) or np.any(t > s.T):
        raise OccbenchError(f"timestep outside [1, {s.T}]")
    ab = s.alpha_bar(t)
    if ab.ndim == 1 and x0.ndim == 2:
        ab = ab[:, None]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


# ------------------------------------------------------------------ denoiser

def time_embedding(t, T: int) -> np.ndarray:
    tau = np.atleast_1d(np.asarray(t, dtype=np.float64)) / T
    freqs = np.pi * 2.0 ** np.arange(TIME_FREQS)
    ang = tau[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def init_params(data_dim: int, cond_dim: int, hidden: int = 64, seed: int = 0) -> Params:
    rng = make_rng(seed)
    n_in = data_dim + 2 * TIME_FREQS + cond_dim

    def dense(fan_in, fan_out):
        return rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))

    return {
        "W1": dense(n_in, hidden), "b1": np.zeros(hidden),
        "W2": dense(hidden, hidden), "b2": np.zeros(hidden),
        "W3": dense(hidden, data_dim), "b3": np.zeros(data_dim),
    }


def _forward(params: Params, x_t, t, cond, T: int):
    inp = np.concatenate([x_t, time_embedding(t, T) * np.ones((len(x_t), 1)), cond], axis=1)
    h1 = np.tanh(inp @ params["W1"] + params["b1"])
    h2 = np.tanh(h1 @ params["W2"] + params["b2"])
    out = h2 @ params["W3"] + params["b3"]
    return out, (inp, h1, h2)


def predict_eps(params: Params, x_t, t, cond, T: int) -> np.ndarray:
    return _forward(params, np.atleast_2d(x_t), t, np.atleast_2d(cond), T)[0]


def loss_and_grad(params: Params, x0, cond, t, eps, s: NoiseSchedule) -> tuple[float, Params]:
    """Batch mean of ||eps - eps_theta(x_t, t | cond)||^2 and its exact gradient."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    cond = np.atleast_2d(np.asarray(cond, dtype=np.float64))
    if len(x0) == 0:
        raise OccbenchError("empty batch")
    x_t = q_sample(x0, t, eps, s)
    out, (inp, h1, h2) = _forward(params, x_t, t, cond, s.T)
    if not np.all(np.isfinite(out)):
        raise OccbenchError("non-finite activations")
    resid = out - eps
    n = len(x0)
    loss = float(np.sum(resid * resid) / n)

    d_out = 2.0 * resid / n
    d_h2 = (d_out @ params["W3"].T) * (1.0 - h2 * h2)
    d_h1 = (d_h2 @ params["W2"].T) * (1.0 - h1 * h1)
    grads = {
        "W3": h2.T @ d_out, "b3": d_out.sum(axis=0),
        "W2": h1.T @ d_h2, "b2": d_h2.sum(axis=0),
        "W1": inp.T @ d_h1, "b1": d_h1.sum(axis=0),
    }
    return loss, grads


# ------------------------------------------------------------------ optimisation

@dataclass
class AdamState:
    m: Params
    v: Params
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Params, **kw) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, **kw)


def _check_aligned(a: Params, b: Params) -> None:
    if a.keys() != b.keys() or any(a[k].shape != b[k].shape for k in a):
        raise OccbenchError("parameter shapes are not aligned")


def adamw_step(params: Params, grads: Params, state: AdamState, lr: float, weight_decay: float = 0.0) -> tuple[Params, AdamState]:
    """One AdamW update with weight decay decoupled from the adaptive step."""
    _check_aligned(params, grads)
    _check_aligned(params, state.m)
    step = state.step + 1
    c1 = 1.0 - state.beta1 ** step
    c2 = 1.0 - state.beta2 ** step
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_p[k] = p * (1.0 - lr * weight_decay) - lr * update
        new_m[k], new_v[k] = m, v
    return new_p, AdamState(new_m, new_v, step, state.beta1, state.beta2, state.eps)


@dataclass
class EmaState:
    shadow: Params
    beta: float = 0.9999

    @classmethod
    def from_params(cls, params: Params, beta: float = 0.9999) -> "EmaState":
        return cls({k: p.copy() for k, p in params.items()}, beta)


def ema_update(ema: EmaState, params: Params) -> EmaState:
    _check_aligned(ema.shadow, params)
    b = ema.beta
    return EmaState({k: b * ema.shadow[k] + (1.0 - b) * params[k] for k in params}, b)


def param_norm(a: Params, b: Params | None = None) -> float:
    if b is None:
        return float(np.sqrt(sum(np.sum(a[k] ** 2) for k in a)))
    return float(np.sqrt(sum(np.sum((a[k] - b[k]) ** 2) for k in a)))


# ------------------------------------------------------------------ sampling

def ddpm_sample(params: Params, s: NoiseSchedule, cond, seed: int, data_dim: int = 2) -> np.ndarray:
    """Ancestral sampling from N(0, I) with sigma_t^2 = beta_t; one row per condition row."""
    cond = np.atleast_2d(np.asarray(cond, dtype=np.float64))
    rng = make_rng(seed)
    x = rng.standard_normal((len(cond), data_dim))
    alphas, alpha_bars = s.alphas, s.alpha_bars
    for t in range(s.T, 0, -1):
        eps = predict_eps(params, x, t, cond, s.T)
        beta = s.betas[t - 1]
        mean = (x - beta / np.sqrt(1.0 - alpha_bars[t - 1]) * eps) / np.sqrt(alphas[t - 1])
        if t > 1:
            x = mean + np.sqrt(beta) * rng.standard_normal(x.shape)
        else:
            x = mean
    return x


# ------------------------------------------------------------------ toy task

CLUSTER_MEANS = np.array([[-1.0, -0.5], [1.0, 0.5]])
CLUSTER_STD = 0.15


def toy_batch(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Points from two Gaussian clusters; returns (x0, one-hot condition, labels)."""
    labels = rng.integers(0, 2, size=n)
    x0 = CLUSTER_MEANS[labels] + CLUSTER_STD * rng.standard_normal((n, 2))
    return x0, np.eye(2)[labels], labels


def cluster_accuracy(samples: np.ndarray, labels: np.ndarray) -> float:
    d = np.linalg.norm(samples[:, None, :] - CLUSTER_MEANS[None, :, :], axis=2)
    return float(np.mean(np.argmin(d, axis=1) == labels))


@dataclass
class ToyRun:
    steps: int
    lr: float
    ema_beta: float
    seed: int
    batch_size: int
    hidden: int
    T: int
    weight_decay: float
    loss_trace: list[dict] = field(default_factory=list)
    initial_loss: float = 0.0
    final_loss: float = 0.0
    ema_gap: float = 0.0
    max_update: float = 0.0
    ema_gap_bound: float = 0.0
    sampler_accuracy: float = 0.0
    ema_sampler_accuracy: float = 0.0
    params: Params | None = None
    ema: EmaState | None = None

    def to_json(self) -> dict:
        return {
            "config": {
                "steps": self.steps, "lr": self.lr, "ema_beta": self.ema_beta, "seed": self.seed,
                "batch_size": self.batch_size, "hidden": self.hidden, "T": self.T,
                "weight_decay": self.weight_decay,
                "schedule": "linear beta 1e-4 -> 0.02",
                "objective": "epsilon prediction, batch mean of squared L2 residual",
                "optimizer": "AdamW(beta1=0.9, beta2=0.999, eps=1e-8)",
            },
            "loss_trace": self.loss_trace,
            "initial_loss": self.initial_loss,
            "final_loss": self.final_loss,
            "ema_gap": self.ema_gap,
            "max_update": self.max_update,
            "ema_gap_bound": self.ema_gap_bound,
            "sampler_accuracy": self.sampler_accuracy,
            "ema_sampler_accuracy": self.ema_sampler_accuracy,
        }


def train_toy(
    steps: int = 2000,
    lr: float = 1e-3,
    ema_beta: float = 0.9999,
    seed: int = 0,
    batch_size: int = 128,
    hidden: int = 64,
    T: int = 1000,
    weight_decay: float = 0.0,
    eval_size: int = 1024,
    n_samples: int = 500,
    log_every: int = 100,
) -> ToyRun:
    """Train the conditional denoiser on the two-cluster toy set.

    Loss is tracked on a fixed held-out batch (fixed x0, t and noise) so the
    trace is comparable step to step.
    """
    s = linear_schedule(T)
    params = init_params(2, 2, hidden, seed)
    ema = EmaState.from_params(params, ema_beta)
    opt = AdamState.zeros_like(params)

    eval_rng = make_rng(seed, 1)
    ex0, econd, _ = toy_batch(eval_rng, eval_size)
    et = eval_rng.integers(1, T + 1, size=eval_size)
    eeps = eval_rng.standard_normal(ex0.shape)

    def eval_loss(p):
        return loss_and_grad(p, ex0, econd, et, eeps, s)[0]

    run = ToyRun(steps, lr, ema_beta, seed, batch_size, hidden, T, weight_decay)
    run.initial_loss = eval_loss(params)
    run.loss_trace.append({"step": 0, "loss": run.initial_loss})
    train_rng = make_rng(seed, 2)
    for step in range(1, steps + 1):
        x0, cond, _ = toy_batch(train_rng, batch_size)
        t = train_rng.integers(1, T + 1, size=batch_size)
        eps = train_rng.standard_normal(x0.shape)
        _, grads = loss_and_grad(params, x0, cond, t, eps, s)
        new_params, opt = adamw_step(params, grads, opt, lr, weight_decay)
        run.max_update = max(run.max_update, param_norm(new_params, params))
        params = new_params
        ema = ema_update(ema, params)
        if step % log_every == 0 or step == steps:
            run.loss_trace.append({"step": step, "loss": eval_loss(params)})
    run.final_loss = eval_loss(params)
    run.ema_gap = param_norm(ema.shadow, params)
    run.ema_gap_bound = run.max_update / (1.0 - ema_beta)

    labels = np.arange(n_samples) % 2
    cond = np.eye(2)[labels]
    run.sampler_accuracy = cluster_accuracy(ddpm_sample(params, s, cond, seed + 1), labels)
    run.ema_sampler_accuracy = cluster_accuracy(ddpm_sample(ema.shadow, s, cond, seed + 1), labels)
    run.params, run.ema = params, ema
    return run
