"""Deep random trigonometric feature networks.

Each layer draws a bank of random feature functions
``xi(x; omega) = cos(omega.x)/2 + sin(omega.x)/2``, mixes the bank outputs
with a weight matrix averaged over several draws, and feeds the result to
the next layer.  Feature directions and mixing weights carry diagonal
Student's-t variational posteriors.  Training-time draws come from the
escort of each posterior through the deterministic reparameterization in
`tdist` (differentiable on the tape); prediction-time draws come from the
posteriors themselves.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np

from . import autodiff as ad
from .errors import DomainError, UsageError
from .rng import RngStream, sample_std_t
from .tdist import DiagStudentT, draw_noise, standard_prior

#: Largest magnitude any bank activation can reach: cos(z)/2 + sin(z)/2
#: equals sin(z + pi/4) * sqrt(2)/2.
FEATURE_BOUND = float(np.sqrt(2.0) / 2.0)


def _positive_int(value, name: str) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
        raise DomainError(f"{name} must be a positive integer, got {value!r}")
    if value <= 0:
        raise DomainError(f"{name} must be positive, got {value}")
    return int(value)


@dataclass(frozen=True)
class LayerParams:
    """Posteriors for one layer: feature directions and the mixing matrix.

    `q_omega` is the shared posterior a bank of `bank_size` feature
    directions is drawn from (each direction lives in R^d_in).  `q_w` is
    the posterior over the flattened out_width-by-bank_size mixing matrix.
    """

    q_omega: DiagStudentT
    q_w: DiagStudentT
    d_in: int
    out_width: int
    bank_size: int

    def __post_init__(self):
        for name in ("d_in", "out_width", "bank_size"):
            _positive_int(getattr(self, name), name)
        if self.q_omega.dim != self.d_in:
            raise DomainError(
                f"feature-direction posterior has dimension {self.q_omega.dim}, "
                f"expected d_in = {self.d_in}")
        if self.q_w.dim != self.out_width * self.bank_size:
            raise DomainError(
                f"mixing-weight posterior has dimension {self.q_w.dim}, "
                f"expected out_width * bank_size = "
                f"{self.out_width * self.bank_size}")


@dataclass(frozen=True)
class RegressionTask:
    """Gaussian observation head with isotropic noise variance."""

    sigma_y2: float

    def __post_init__(self):
        if not np.isfinite(self.sigma_y2) or self.sigma_y2 <= 0.0:
            raise DomainError(
                f"observation noise variance must be positive and finite, "
                f"got {self.sigma_y2!r}")


@dataclass(frozen=True)
class ClassificationTask:
    """Softmax observation head over a fixed number of classes."""

    num_classes: int

    def __post_init__(self):
        _positive_int(self.num_classes, "num_classes")


Task = Union[RegressionTask, ClassificationTask]


@dataclass(frozen=True)
class Network:
    """An ordered stack of layers plus the observation head."""

    layers: tuple
    task: Task
    prior_nu: float

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise DomainError("a network needs at least one layer")
        for i, layer in enumerate(self.layers):
            if not isinstance(layer, LayerParams):
                raise DomainError(f"layer {i} is not a LayerParams")
            if i > 0 and layer.d_in != self.layers[i - 1].out_width:
                raise DomainError(
                    f"layer {i} expects {layer.d_in} inputs but layer {i - 1} "
                    f"produces {self.layers[i - 1].out_width}")
        if not np.isfinite(self.prior_nu) or self.prior_nu <= 0.0:
            raise DomainError(
                f"prior dof must be positive and finite, got {self.prior_nu!r}")
        if isinstance(self.task, ClassificationTask):
            if self.layers[-1].out_width != self.task.num_classes:
                raise DomainError(
                    f"final layer width {self.layers[-1].out_width} must equal "
                    f"num_classes = {self.task.num_classes}")
        elif not isinstance(self.task, RegressionTask):
            raise DomainError(f"unknown task {self.task!r}")

    @property
    def input_dim(self) -> int:
        return self.layers[0].d_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_width


@dataclass(frozen=True)
class SampledLayer:
    """Concrete draws for one layer: the bank and the mixing-matrix draws."""

    omega_bank: np.ndarray  # (bank_size, d_in)
    w_draws: np.ndarray     # (k_draws, out_width, bank_size)

    def __post_init__(self):
        omega = np.asarray(self.omega_bank, dtype=float)
        w = np.asarray(self.w_draws, dtype=float)
        if omega.ndim != 2:
            raise DomainError(f"omega_bank must be 2-D, got shape {omega.shape}")
        if w.ndim != 3:
            raise DomainError(f"w_draws must be 3-D, got shape {w.shape}")
        if w.shape[0] < 1:
            raise DomainError("at least one mixing-matrix draw is required")
        if w.shape[2] != omega.shape[0]:
            raise DomainError(
                f"w_draws mixes {w.shape[2]} bank outputs but the bank has "
                f"{omega.shape[0]} members")
        object.__setattr__(self, "omega_bank", omega)
        object.__setattr__(self, "w_draws", w)


@dataclass(frozen=True)
class LayerNoise:
    """Fixed noise for one layer's escort-reparameterized training draws."""

    eps_omega: np.ndarray  # (bank_size, d_in)
    eps_w: np.ndarray      # (k_draws, out_width * bank_size)

    def __post_init__(self):
        eo = np.asarray(self.eps_omega, dtype=float)
        ew = np.asarray(self.eps_w, dtype=float)
        if eo.ndim != 2 or ew.ndim != 2:
            raise DomainError(
                f"layer noise must be two 2-D arrays, got shapes "
                f"{eo.shape} and {ew.shape}")
        if eo.shape[0] < 1 or ew.shape[0] < 1:
            raise DomainError("noise must contain at least one draw")
        object.__setattr__(self, "eps_omega", eo)
        object.__setattr__(self, "eps_w", ew)


class LayerNodes(NamedTuple):
    """One layer's posterior parameters as tape tensors (sigma is the scale,
    i.e. the square root of the diagonal variance)."""

    mu_omega: ad.Tensor
    sigma_omega: ad.Tensor
    nu_omega: ad.Tensor
    mu_w: ad.Tensor
    sigma_w: ad.Tensor
    nu_w: ad.Tensor


class ClassPrediction(NamedTuple):
    """Averaged class probabilities and the most probable label(s)."""

    probabilities: np.ndarray
    labels: np.ndarray


# -- feature bank and single-layer maps --------------------------------------

def feature(x, omega) -> float:
    """Random trigonometric feature: cos(omega.x)/2 + sin(omega.x)/2.

    Bounded by sqrt(2)/2 in absolute value for any input and direction.
    """
    x = np.asarray(x, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if x.ndim != 1 or omega.ndim != 1 or x.shape != omega.shape:
        raise UsageError(
            f"feature expects two equal-length vectors, got shapes "
            f"{x.shape} and {omega.shape}")
    z = float(x @ omega)
    return float(0.5 * np.cos(z) + 0.5 * np.sin(z))


def _bank_activation(z):
    return 0.5 * np.cos(z) + 0.5 * np.sin(z)


def layer_forward(h, sampled: SampledLayer) -> np.ndarray:
    """Map one input vector through a sampled layer.

    Applies every bank feature to `h`, then averages the mixing products
    over the stored weight draws: mean_j of W_j @ phi.
    """
    h = np.asarray(h, dtype=float)
    if h.ndim != 1 or h.shape[0] != sampled.omega_bank.shape[1]:
        raise UsageError(
            f"layer_forward expects a vector of length "
            f"{sampled.omega_bank.shape[1]}, got shape {h.shape}")
    phi = _bank_activation(sampled.omega_bank @ h)        # (S,)
    return (sampled.w_draws @ phi).mean(axis=0)           # (out_width,)


# -- training-time forward pass (tape) ----------------------------------------

def draw_train_noise(rng: RngStream, net: Network, k_draws: int,
                     skip_omega: bool = False):
    """Draw one iteration's escort noise for every layer of the network.

    With ``skip_omega`` the feature-direction noise is a zero placeholder
    (used when the banks are frozen constants and no draw is needed).
    """
    k_draws = _positive_int(k_draws, "k_draws")
    out = []
    for layer in net.layers:
        if skip_omega:
            eps_omega = np.zeros((layer.bank_size, layer.d_in))
        else:
            eps_omega = draw_noise(rng, layer.q_omega, layer.bank_size)
        out.append(LayerNoise(
            eps_omega=eps_omega,
            eps_w=draw_noise(rng, layer.q_w, k_draws)))
    return out


def draw_prior_banks(rng: RngStream, net: Network):
    """One frozen feature bank per layer, drawn from the standard prior.

    Returns a list of (bank_size, d_in) arrays.  Used by the ablation mode
    that keeps classic fixed random features: the banks are drawn once at
    model construction and never resampled or trained.
    """
    banks = []
    for layer in net.layers:
        prior = standard_prior(layer.d_in, net.prior_nu)
        banks.append(posterior_draw(rng, prior, layer.bank_size))
    return banks


def _check_fixed_banks(fixed_banks, n_layers: int):
    if fixed_banks is None:
        return [None] * n_layers
    if len(fixed_banks) != n_layers:
        raise UsageError(
            f"got {len(fixed_banks)} fixed banks for {n_layers} layers")
    return [None if b is None else np.asarray(b, dtype=float)
            for b in fixed_banks]


def escort_draw_nodes(mu: ad.Tensor, sigma: ad.Tensor, nu: ad.Tensor,
                      eps: np.ndarray) -> ad.Tensor:
    """Differentiable escort draw: mu + sqrt(nu/(nu+2)) * sigma * eps.

    The shrink factor turns unit-scale heavy-tailed noise (drawn with dof
    nu+2 by `tdist.draw_noise`) into a draw from the escort of the
    posterior; its dof appears only through the factor, so the noise array
    itself is treated as a constant.
    """
    shrink = ad.sqrt(nu / (nu + 2.0))
    return mu + shrink * sigma * np.asarray(eps, dtype=float)


def forward_train_nodes(x, layers: Sequence[LayerNodes],
                        noise: Sequence[LayerNoise], fixed_banks=None):
    """Escort-sampled forward pass on the tape.

    `x` is one input vector or a (batch, d_in) matrix of inputs sharing
    the same noise.  Returns the final-layer output tensor of shape
    (batch, eta_final) — the predictive mean for regression, logits for
    classification — together with the concrete per-layer draws.

    `fixed_banks` optionally gives per-layer constant (bank_size, d_in)
    feature banks; a layer with a fixed bank skips the escort draw of its
    feature directions (its noise entry is ignored) and takes no gradient
    through them.
    """
    if not layers or len(layers) != len(noise):
        raise UsageError(
            f"got {len(layers)} layers but {len(noise)} noise draws")
    banks = _check_fixed_banks(fixed_banks, len(layers))
    current = np.atleast_2d(np.asarray(x, dtype=float))
    if current.ndim != 2:
        raise UsageError(f"input must be a vector or matrix, got {current.shape}")
    width = current.shape[1]

    hidden = None
    sampled = []
    for nodes, eps, bank in zip(layers, noise, banks):
        bank_size, d_in = eps.eps_omega.shape
        k_draws, flat = eps.eps_w.shape
        if bank is None and nodes.mu_omega.shape != (d_in,):
            raise UsageError(
                f"feature-direction noise is {eps.eps_omega.shape} but the "
                f"posterior mean has shape {nodes.mu_omega.shape}")
        if bank is not None and bank.shape != (bank_size, d_in):
            raise UsageError(
                f"fixed bank has shape {bank.shape}, expected "
                f"{(bank_size, d_in)}")
        if flat % bank_size != 0 or nodes.mu_w.shape != (flat,):
            raise UsageError(
                f"mixing-weight noise is {eps.eps_w.shape}, incompatible with "
                f"bank size {bank_size} and posterior mean shape "
                f"{nodes.mu_w.shape}")
        if width != d_in:
            raise UsageError(
                f"layer expects {d_in} inputs but receives {width}")
        out_width = flat // bank_size

        if bank is None:
            omega = escort_draw_nodes(nodes.mu_omega, nodes.sigma_omega,
                                      nodes.nu_omega, eps.eps_omega)
            omega_t = ad.transpose(omega)
            bank_value = omega.value
        else:
            omega_t = nodes.mu_w.tape.constant(bank.T, "frozen_bank")
            bank_value = bank
        w_all = escort_draw_nodes(
            nodes.mu_w, nodes.sigma_w, nodes.nu_w, eps.eps_w)
        # The mixing output (1/K) sum_j W_j phi is linear in the draws, so
        # the averaged matrix produces it in a single product.
        w_bar = ad.reshape(ad.tmean(w_all, axis=0), (out_width, bank_size))

        z = ad.matmul(current if hidden is None else hidden,
                      omega_t)                             # (B, S)
        phi = 0.5 * ad.cos(z) + 0.5 * ad.sin(z)
        hidden = ad.matmul(phi, ad.transpose(w_bar))       # (B, out_width)
        width = out_width
        sampled.append(SampledLayer(
            omega_bank=np.array(bank_value, dtype=float),
            w_draws=w_all.value.reshape(k_draws, out_width, bank_size).copy()))
    return hidden, sampled


def network_leaves(tape: ad.Tape, net: Network):
    """Register every posterior parameter of `net` as a leaf on `tape`.

    Scales enter as sigma = sqrt(diagonal variance), matching what the
    divergence and draw nodes expect.
    """
    nodes = []
    for i, layer in enumerate(net.layers):
        qo, qw = layer.q_omega, layer.q_w
        nodes.append(LayerNodes(
            mu_omega=tape.leaf(qo.mu, f"mu_omega[{i}]"),
            sigma_omega=tape.leaf(np.sqrt(qo.sigma2), f"sigma_omega[{i}]"),
            nu_omega=tape.leaf(np.asarray(qo.nu), f"nu_omega[{i}]"),
            mu_w=tape.leaf(qw.mu, f"mu_w[{i}]"),
            sigma_w=tape.leaf(np.sqrt(qw.sigma2), f"sigma_w[{i}]"),
            nu_w=tape.leaf(np.asarray(qw.nu), f"nu_w[{i}]")))
    return nodes


def forward_train(x, net: Network, noise: Sequence[LayerNoise],
                  fixed_banks=None):
    """Value-level training forward pass.

    Convenience wrapper over `forward_train_nodes` on a throwaway tape;
    returns (output array, sampled layers).  A 1-D input yields a 1-D
    output.
    """
    tape = ad.Tape()
    out, sampled = forward_train_nodes(x, network_leaves(tape, net), noise,
                                       fixed_banks=fixed_banks)
    value = out.value
    if np.asarray(x).ndim == 1:
        value = value[0]
    return value.copy(), sampled


# -- prediction-time forward pass (posterior draws, plain arrays) -------------

def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def posterior_draw(rng: RngStream, q: DiagStudentT, n: int) -> np.ndarray:
    """n independent draws from the posterior itself: mu + sigma * eps with
    unit-scale heavy-tailed noise at the posterior's own dof."""
    eps = sample_std_t(rng, q.nu, n * q.dim).reshape(n, q.dim)
    return q.mu + np.sqrt(q.sigma2) * eps


def forward_predict(x, net: Network, rng: RngStream, mc_rounds: int,
                    k_draws: int = 100, fixed_banks=None):
    """Average the network output over posterior-sampled forward passes.

    Each round redraws every layer's bank and mixing matrices from the
    posteriors (not their escorts).  Regression returns the averaged
    output; classification returns averaged softmax probabilities and the
    most probable label(s).  A layer with an entry in `fixed_banks` keeps
    that constant bank in every round instead of redrawing.
    """
    mc_rounds = _positive_int(mc_rounds, "mc_rounds")
    k_draws = _positive_int(k_draws, "k_draws")
    banks = _check_fixed_banks(fixed_banks, len(net.layers))
    x_arr = np.asarray(x, dtype=float)
    batch = np.atleast_2d(x_arr)
    if batch.ndim != 2 or batch.shape[1] != net.input_dim:
        raise UsageError(
            f"input must have {net.input_dim} columns, got shape {x_arr.shape}")
    for layer, bank in zip(net.layers, banks):
        if bank is not None and bank.shape != (layer.bank_size, layer.d_in):
            raise UsageError(
                f"fixed bank has shape {bank.shape}, expected "
                f"{(layer.bank_size, layer.d_in)}")

    classify = isinstance(net.task, ClassificationTask)
    acc = np.zeros((batch.shape[0], net.output_dim))
    for _ in range(mc_rounds):
        h = batch
        for layer, bank in zip(net.layers, banks):
            if bank is None:
                omega = posterior_draw(rng, layer.q_omega, layer.bank_size)
            else:
                omega = bank
            w_bar = posterior_draw(rng, layer.q_w, k_draws).mean(axis=0)
            w_bar = w_bar.reshape(layer.out_width, layer.bank_size)
            h = _bank_activation(h @ omega.T) @ w_bar.T
        acc += _softmax_rows(h) if classify else h
    avg = acc / mc_rounds

    if not classify:
        return avg[0] if x_arr.ndim == 1 else avg
    labels = np.argmax(avg, axis=1)
    if x_arr.ndim == 1:
        return ClassPrediction(avg[0], int(labels[0]))
    return ClassPrediction(avg, labels)


# -- likelihood heads ----------------------------------------------------------

def log_lik_regression(y, mean, sigma_y2: float) -> float:
    """Gaussian log-density of `y` around `mean` with isotropic variance."""
    if not np.isfinite(sigma_y2) or sigma_y2 <= 0.0:
        raise DomainError(
            f"observation noise variance must be positive and finite, "
            f"got {sigma_y2!r}")
    y = np.asarray(y, dtype=float)
    mean = np.asarray(mean, dtype=float)
    if y.ndim != 1 or y.shape != mean.shape:
        raise UsageError(
            f"log_lik_regression expects two equal-length vectors, got "
            f"shapes {y.shape} and {mean.shape}")
    quad = float(np.sum((y - mean) ** 2))
    return -0.5 * y.size * np.log(2.0 * np.pi * sigma_y2) \
        - quad / (2.0 * sigma_y2)


def log_lik_classification(label: int, logits) -> float:
    """Log softmax probability of the true label, max-stabilized."""
    logits = np.asarray(logits, dtype=float)
    if logits.ndim != 1:
        raise UsageError(f"logits must be a vector, got shape {logits.shape}")
    if not isinstance(label, (int, np.integer)) or isinstance(label, bool):
        raise UsageError(f"label must be an integer, got {label!r}")
    if label < 0 or label >= logits.size:
        raise UsageError(
            f"label {label} outside the {logits.size} available classes")
    shifted = logits - logits.max()
    return float(shifted[label] - np.log(np.exp(shifted).sum()))


def regression_log_lik_nodes(mean: ad.Tensor, y, sigma_y2: float) -> ad.Tensor:
    """Summed Gaussian log-likelihood of a batch, differentiable in `mean`."""
    if not np.isfinite(sigma_y2) or sigma_y2 <= 0.0:
        raise DomainError(
            f"observation noise variance must be positive and finite, "
            f"got {sigma_y2!r}")
    y = np.asarray(y, dtype=float)
    if y.ndim == 1 and len(mean.shape) == 2 and mean.shape == (y.size, 1):
        y = y[:, None]
    y = np.atleast_2d(y)
    if mean.shape != y.shape:
        raise UsageError(
            f"predictive means have shape {mean.shape} but targets have "
            f"shape {y.shape}")
    diff = mean - y
    const = -0.5 * y.size * np.log(2.0 * np.pi * sigma_y2)
    return ad.tsum(diff * diff) * (-0.5 / sigma_y2) + const


def classification_log_lik_nodes(logits: ad.Tensor, labels) -> ad.Tensor:
    """Summed log softmax probabilities of a batch of integer labels."""
    return -ad.tsum(ad.softmax_cross_entropy(logits, np.asarray(labels)))
