"""Variational training: objective assembly, AdaM, initialization, fit loop.

The loss is the sum over layers of the closed-form heavy-tail divergence of
each posterior from its prior, minus the scaled minibatch estimate of the
expected log-likelihood computed through escort-sampled forward passes.
Positive parameters are optimized through unconstrained surrogates:
``sigma = softplus(rho_sigma)`` and ``nu = softplus(rho_nu) + NU_FLOOR``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DomainError, NumericsError, UsageError
from .model import (ClassificationTask, LayerNodes, LayerParams, Network,
                    RegressionTask, Task, classification_log_lik_nodes,
                    draw_prior_banks, draw_train_noise, forward_train_nodes,
                    network_leaves, regression_log_lik_nodes)
from .rng import RngStream
from .tdist import DiagStudentT, standard_prior
from .tdivergence import dt_closed_nodes

#: Additive floor keeping every optimized dof strictly positive.
NU_FLOOR = 0.1

#: Substream labels so the shuffle order and the noise draws never interact.
_SHUFFLE_STREAM = 0
_NOISE_STREAM = 1


@dataclass(frozen=True)
class FitConfig:
    """Training hyperparameters with the defaults used by the benchmarks."""

    epochs: int = 500
    batch_size: int = 64
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    bank_size: int = 100
    k_train: int = 10
    k_eval: int = 100
    prior_nu: float = 2.1
    sigma_y2: float = float(np.exp(-2.0))
    seed: int = 0
    likelihood_scale: str = "full-dataset"
    early_stop_patience: int = 20
    early_stop_rel_tol: float = 1e-4

    def __post_init__(self):
        if not isinstance(self.epochs, (int, np.integer)) or self.epochs < 0:
            raise ConfigError(f"epochs must be a nonnegative integer, "
                              f"got {self.epochs!r}")
        for name in ("batch_size", "bank_size", "k_train", "k_eval",
                     "early_stop_patience"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v <= 0:
                raise ConfigError(f"{name} must be a positive integer, "
                                  f"got {v!r}")
        for name in ("learning_rate", "adam_beta1", "adam_beta2", "adam_eps",
                     "prior_nu", "sigma_y2", "early_stop_rel_tol"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0.0:
                raise ConfigError(f"{name} must be positive and finite, "
                                  f"got {v!r}")
        if self.likelihood_scale not in ("full-dataset", "batch-mean"):
            raise ConfigError(
                f"likelihood_scale must be 'full-dataset' or 'batch-mean', "
                f"got {self.likelihood_scale!r}")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, "
                              f"got {self.seed!r}")


@dataclass
class AdamState:
    """Adaptive-moment accumulators, one pair per parameter array."""

    m: list
    v: list
    step: int = 0

    def __post_init__(self):
        if self.step < 0:
            raise DomainError(f"step must be nonnegative, got {self.step}")
        if len(self.m) != len(self.v):
            raise DomainError("first- and second-moment lists differ in length")
        for a, b in zip(self.m, self.v):
            if np.shape(a) != np.shape(b):
                raise DomainError("moment accumulators must share shapes")


@dataclass
class TrainReport:
    """Per-iteration series plus the final trained network."""

    objective: np.ndarray
    divergence: np.ndarray
    log_lik: np.ndarray
    wall_time: float
    epochs_run: int
    stopped_early: bool
    final_network: Optional[Network] = None

    def __post_init__(self):
        n = len(self.objective)
        if len(self.divergence) != n or len(self.log_lik) != n:
            raise DomainError("report series must have equal lengths")


def adam_init(params: Sequence[np.ndarray]) -> AdamState:
    return AdamState(m=[np.zeros_like(np.asarray(p, dtype=float))
                        for p in params],
                     v=[np.zeros_like(np.asarray(p, dtype=float))
                        for p in params],
                     step=0)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
              state: AdamState, cfg: FitConfig):
    """One bias-corrected adaptive-moment update on unconstrained arrays.

    Returns (new parameter list, new state); inputs are not mutated.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise UsageError("params, grads, and state must have matching lengths")
    step = state.step + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        p = np.asarray(p, dtype=float)
        g = np.asarray(g, dtype=float)
        if p.shape != g.shape:
            raise UsageError(
                f"gradient shape {g.shape} does not match parameter shape "
                f"{p.shape}")
        m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g
        v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g * g
        m_hat = m / (1.0 - cfg.adam_beta1 ** step)
        v_hat = v / (1.0 - cfg.adam_beta2 ** step)
        new_params.append(p - cfg.learning_rate * m_hat
                          / (np.sqrt(v_hat) + cfg.adam_eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(m=new_m, v=new_v, step=step)


# -- parameterization ---------------------------------------------------------

class LayerShape(NamedTuple):
    d_in: int
    out_width: int
    bank_size: int


def _softplus_np(x):
    return np.logaddexp(0.0, x)


def _softplus_inv_np(y):
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0.0):
        raise DomainError("softplus inverse needs strictly positive input")
    return y + np.log1p(-np.exp(-y))


def network_shapes(net: Network):
    return [LayerShape(l.d_in, l.out_width, l.bank_size) for l in net.layers]


def network_to_params(net: Network, train_omega: bool = True):
    """Unconstrained trainable arrays: six per layer, in layer order.

    Order per layer: mu_omega, rho_sigma_omega, rho_nu_omega, mu_w,
    rho_sigma_w, rho_nu_w.  With ``train_omega=False`` the feature-
    direction triple is omitted (three arrays per layer, mixing weights
    only — the frozen-bank ablation).
    """
    values = []
    for layer in net.layers:
        posts = (layer.q_omega, layer.q_w) if train_omega else (layer.q_w,)
        for q in posts:
            if q.nu <= NU_FLOOR:
                raise DomainError(
                    f"dof {q.nu} is at or below the optimization floor "
                    f"{NU_FLOOR} and cannot be represented")
            values.append(q.mu.copy())
            values.append(_softplus_inv_np(np.sqrt(q.sigma2)))
            values.append(np.asarray(_softplus_inv_np(q.nu - NU_FLOOR)))
    return values


def params_to_network(values: Sequence[np.ndarray],
                      shapes: Sequence[LayerShape], task: Task,
                      prior_nu: float,
                      frozen_q_omega: Optional[Sequence[DiagStudentT]] = None
                      ) -> Network:
    """Rebuild a Network from unconstrained arrays.

    With ``frozen_q_omega`` the values carry only the mixing-weight triple
    per layer and the given feature-direction posteriors are kept as-is.
    """
    per_layer = 3 if frozen_q_omega is not None else 6
    if len(values) != per_layer * len(shapes):
        raise UsageError(
            f"expected {per_layer * len(shapes)} parameter arrays for "
            f"{len(shapes)} layers, got {len(values)}")
    if frozen_q_omega is not None and len(frozen_q_omega) != len(shapes):
        raise UsageError(
            f"got {len(frozen_q_omega)} frozen posteriors for "
            f"{len(shapes)} layers")
    layers = []
    for i, shape in enumerate(shapes):
        chunk = values[per_layer * i:per_layer * (i + 1)]
        if frozen_q_omega is not None:
            q_omega = frozen_q_omega[i]
            mw, rsw, rnw = chunk
        else:
            mo, rso, rno, mw, rsw, rnw = chunk
            q_omega = DiagStudentT(np.asarray(mo, dtype=float),
                                   _softplus_np(np.asarray(rso)) ** 2,
                                   float(_softplus_np(rno)) + NU_FLOOR)
        q_w = DiagStudentT(np.asarray(mw, dtype=float),
                           _softplus_np(np.asarray(rsw)) ** 2,
                           float(_softplus_np(rnw)) + NU_FLOOR)
        layers.append(LayerParams(
            q_omega=q_omega, q_w=q_w, d_in=shape.d_in,
            out_width=shape.out_width, bank_size=shape.bank_size))
    return Network(layers=tuple(layers), task=task, prior_nu=prior_nu)


def param_leaves(tape: ad.Tape, values: Sequence[np.ndarray],
                 shapes: Sequence[LayerShape], train_omega: bool = True):
    """Register unconstrained arrays on the tape and build the transformed
    per-layer nodes (sigma and nu through their positivity maps).

    With ``train_omega=False`` the values carry only the mixing-weight
    triple per layer; the feature-direction entries of each LayerNodes are
    None (the forward pass must then receive fixed banks).
    """
    leaves, nodes = [], []
    per_layer = 6 if train_omega else 3
    for i in range(len(shapes)):
        chunk = values[per_layer * i:per_layer * (i + 1)]
        if train_omega:
            mo, rso, rno, mw, rsw, rnw = chunk
            layer_leaves = [tape.leaf(mo, f"mu_omega[{i}]"),
                            tape.leaf(rso, f"rho_sigma_omega[{i}]"),
                            tape.leaf(np.asarray(rno), f"rho_nu_omega[{i}]"),
                            tape.leaf(mw, f"mu_w[{i}]"),
                            tape.leaf(rsw, f"rho_sigma_w[{i}]"),
                            tape.leaf(np.asarray(rnw), f"rho_nu_w[{i}]")]
            lmo, lrso, lrno, lmw, lrsw, lrnw = layer_leaves
            omega_nodes = (lmo, ad.softplus(lrso),
                           ad.softplus(lrno) + NU_FLOOR)
        else:
            mw, rsw, rnw = chunk
            layer_leaves = [tape.leaf(mw, f"mu_w[{i}]"),
                            tape.leaf(rsw, f"rho_sigma_w[{i}]"),
                            tape.leaf(np.asarray(rnw), f"rho_nu_w[{i}]")]
            lmw, lrsw, lrnw = layer_leaves
            omega_nodes = (None, None, None)
        leaves.extend(layer_leaves)
        nodes.append(LayerNodes(
            mu_omega=omega_nodes[0], sigma_omega=omega_nodes[1],
            nu_omega=omega_nodes[2],
            mu_w=lmw, sigma_w=ad.softplus(lrsw),
            nu_w=ad.softplus(lrnw) + NU_FLOOR))
    return leaves, nodes


# -- objective ------------------------------------------------------------------

class ObjectiveValue(NamedTuple):
    """Loss and its two ingredients (likelihood as the per-example mean)."""

    loss: float
    divergence: float
    log_lik_mean: float


def objective_nodes(x, y, layer_nodes, noise, task: Task, lam: float,
                    prior_nu: float, fixed_banks=None):
    """Build the full loss on the tape.

    Returns (loss, divergence total, summed log-likelihood) as tensors:
    loss = sum of per-posterior divergences − lam * (log-lik sum / batch).
    Layers with a fixed bank contribute no feature-direction divergence
    (that posterior is not inferred in the frozen-bank ablation).
    """
    batch = np.atleast_2d(np.asarray(x, dtype=float)).shape[0]
    banks = ([None] * len(layer_nodes) if fixed_banks is None
             else list(fixed_banks))
    div_total = None
    for nodes, bank in zip(layer_nodes, banks):
        triples = [(nodes.mu_w, nodes.sigma_w, nodes.nu_w)]
        if bank is None:
            triples.insert(0, (nodes.mu_omega, nodes.sigma_omega,
                               nodes.nu_omega))
        for mu, sigma, nu in triples:
            term = dt_closed_nodes(mu, sigma, nu, prior_nu)
            div_total = term if div_total is None else div_total + term
    out, _ = forward_train_nodes(x, layer_nodes, noise,
                                 fixed_banks=fixed_banks)
    if isinstance(task, RegressionTask):
        ll_sum = regression_log_lik_nodes(out, y, task.sigma_y2)
    else:
        ll_sum = classification_log_lik_nodes(out, y)
    loss = div_total - ll_sum * (float(lam) / batch)
    return loss, div_total, ll_sum


def _likelihood_lam(cfg: FitConfig, dataset_size, batch: int) -> float:
    if cfg.likelihood_scale == "full-dataset":
        if dataset_size is None:
            raise UsageError(
                "full-dataset likelihood scaling needs the dataset size")
        return float(dataset_size)
    return float(batch)


def objective(batch, net: Network, noise, cfg: FitConfig,
              dataset_size=None, fixed_banks=None) -> ObjectiveValue:
    """Evaluate the loss for one minibatch at the network's parameters."""
    x, y = batch
    n_rows = np.atleast_2d(np.asarray(x, dtype=float)).shape[0]
    if n_rows == 0:
        raise UsageError("batch must be nonempty")
    lam = _likelihood_lam(cfg, dataset_size, n_rows)
    tape = ad.Tape()
    loss, div, ll = objective_nodes(x, y, network_leaves(tape, net), noise,
                                    net.task, lam, net.prior_nu,
                                    fixed_banks=fixed_banks)
    return ObjectiveValue(loss=float(loss.value), divergence=float(div.value),
                          log_lik_mean=float(ll.value) / n_rows)


# -- initialization ---------------------------------------------------------------

def init_from_prior(structure: Sequence[int], cfg: FitConfig,
                    task: Optional[Task] = None) -> Network:
    """Network whose every posterior equals the standard prior.

    `structure` lists the layer widths, input first — e.g. (13, 3, 1) is a
    two-layer network on 13 inputs with a 3-wide hidden layer and one
    output.  The divergence part of the loss is exactly zero here.
    """
    widths = [int(w) for w in structure]
    if len(widths) < 2 or any(w <= 0 for w in widths):
        raise UsageError(
            f"structure must list at least two positive widths, got "
            f"{structure!r}")
    if task is None:
        task = RegressionTask(cfg.sigma_y2)
    layers = []
    for d_in, out_width in zip(widths[:-1], widths[1:]):
        layers.append(LayerParams(
            q_omega=standard_prior(d_in, cfg.prior_nu),
            q_w=standard_prior(out_width * cfg.bank_size, cfg.prior_nu),
            d_in=d_in, out_width=out_width, bank_size=cfg.bank_size))
    return Network(layers=tuple(layers), task=task, prior_nu=cfg.prior_nu)


# -- fit loop ----------------------------------------------------------------------

def _as_xy(train):
    if isinstance(train, tuple) and len(train) == 2:
        x, y = train
    elif hasattr(train, "features") and hasattr(train, "targets"):
        x, y = train.features, train.targets
    else:
        raise UsageError(
            "training data must be an (inputs, targets) pair or expose "
            ".features and .targets")
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] == 0:
        raise UsageError(f"inputs must be a nonempty matrix, got {x.shape}")
    y = np.asarray(y)
    if y.shape[0] != x.shape[0]:
        raise UsageError(
            f"inputs have {x.shape[0]} rows but targets have {y.shape[0]}")
    return x, y


def _prepare_targets(y: np.ndarray, task: Task, output_dim: int):
    if isinstance(task, ClassificationTask):
        if not np.issubdtype(np.asarray(y).dtype, np.integer):
            raise UsageError("classification targets must be integer labels")
        if np.any(y < 0) or np.any(y >= task.num_classes):
            raise UsageError(
                f"labels must lie in [0, {task.num_classes}), got range "
                f"[{np.min(y)}, {np.max(y)}]")
        return np.asarray(y)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[1] != output_dim:
        raise UsageError(
            f"targets have {y.shape[1]} columns but the network produces "
            f"{output_dim}")
    return y


def fit(train, cfg: FitConfig, structure, task: Optional[Task] = None,
        fixed_banks=None, resample_prior_banks: bool = False):
    """Minimize the objective with AdaM; deterministic given cfg.seed.

    `structure` is either a width sequence (passed to init_from_prior) or
    an already-built Network used as the starting point.  Returns the
    trained network and the per-iteration report.  Two consecutive
    non-finite losses abort with a diagnostic; a single one skips the
    update and continues.

    `fixed_banks` (one (bank_size, d_in) array per layer) switches to the
    frozen-bank ablation: the given banks replace escort draws of the
    feature directions, whose posteriors are left untouched at their
    starting values; only the mixing-weight posteriors are inferred.
    `resample_prior_banks` is the companion comparison mode: the feature
    posteriors are likewise left untouched, but the banks are redrawn from
    them fresh each iteration instead of staying frozen.
    """
    x_all, y_all = _as_xy(train)
    if isinstance(structure, Network):
        net = structure
        if task is not None and task != net.task:
            raise UsageError("task conflicts with the provided network")
    else:
        net = init_from_prior(structure, cfg, task=task)
    if x_all.shape[1] != net.input_dim:
        raise UsageError(
            f"data has {x_all.shape[1]} columns but the network expects "
            f"{net.input_dim}")
    x_all = np.asarray(x_all, dtype=float)
    y_all = _prepare_targets(y_all, net.task, net.output_dim)

    if resample_prior_banks and fixed_banks is not None:
        raise UsageError(
            "fixed_banks and resample_prior_banks are mutually exclusive")
    train_omega = fixed_banks is None and not resample_prior_banks
    frozen_q = None
    if fixed_banks is not None:
        if len(fixed_banks) != len(net.layers):
            raise UsageError(
                f"got {len(fixed_banks)} fixed banks for "
                f"{len(net.layers)} layers")
        fixed_banks = [np.asarray(b, dtype=float) for b in fixed_banks]
        for bank, layer in zip(fixed_banks, net.layers):
            if bank.shape != (layer.bank_size, layer.d_in):
                raise UsageError(
                    f"fixed bank has shape {bank.shape}, expected "
                    f"{(layer.bank_size, layer.d_in)}")
    if not train_omega:
        frozen_q = [layer.q_omega for layer in net.layers]

    shapes = network_shapes(net)
    values = network_to_params(net, train_omega=train_omega)
    state = adam_init(values)

    root = RngStream(cfg.seed)
    shuffle_gen = root.split(_SHUFFLE_STREAM).generator
    noise_stream = root.split(_NOISE_STREAM)

    n = x_all.shape[0]
    objective_series, divergence_series, loglik_series = [], [], []
    epochs_run = 0
    stopped_early = False
    best_epoch_objective = np.inf
    stall_count = 0
    consecutive_bad = 0
    started = time.perf_counter()

    for epoch in range(cfg.epochs):
        order = shuffle_gen.permutation(n)
        epoch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = x_all[idx], y_all[idx]
            lam = _likelihood_lam(cfg, n, len(idx))
            current = params_to_network(values, shapes, net.task,
                                        net.prior_nu,
                                        frozen_q_omega=frozen_q)
            if resample_prior_banks:
                iter_banks = draw_prior_banks(noise_stream, current)
            else:
                iter_banks = fixed_banks
            noise = draw_train_noise(noise_stream, current, cfg.k_train,
                                     skip_omega=not train_omega)
            try:
                tape = ad.Tape()
                leaves, layer_nodes = param_leaves(tape, values, shapes,
                                                   train_omega=train_omega)
                loss, div, ll = objective_nodes(
                    xb, yb, layer_nodes, noise, net.task, lam, net.prior_nu,
                    fixed_banks=iter_banks)
                if not np.isfinite(loss.value):
                    raise NumericsError(
                        f"non-finite loss value {loss.value!r}")
                tape.backward(loss)
            except NumericsError as err:
                consecutive_bad += 1
                objective_series.append(np.nan)
                divergence_series.append(np.nan)
                loglik_series.append(np.nan)
                if consecutive_bad >= 2:
                    raise NumericsError(
                        f"training aborted at epoch {epoch}: two consecutive "
                        f"non-finite losses (last error: {err}); "
                        f"{len(objective_series)} iterations completed"
                    ) from err
                continue
            consecutive_bad = 0
            objective_series.append(float(loss.value))
            divergence_series.append(float(div.value))
            loglik_series.append(float(ll.value) / len(idx))
            epoch_losses.append(float(loss.value))
            grads = [leaf.grad for leaf in leaves]
            values, state = adam_step(values, grads, state, cfg)
        epochs_run = epoch + 1

        if epoch_losses:
            epoch_objective = float(np.mean(epoch_losses))
            scale = max(abs(best_epoch_objective), 1e-12)
            if best_epoch_objective - epoch_objective \
                    >= cfg.early_stop_rel_tol * scale:
                best_epoch_objective = min(best_epoch_objective,
                                           epoch_objective)
                stall_count = 0
            else:
                best_epoch_objective = min(best_epoch_objective,
                                           epoch_objective)
                stall_count += 1
                if stall_count >= cfg.early_stop_patience:
                    stopped_early = True
                    break

    final = params_to_network(values, shapes, net.task, net.prior_nu,
                              frozen_q_omega=frozen_q)
    report = TrainReport(
        objective=np.asarray(objective_series),
        divergence=np.asarray(divergence_series),
        log_lik=np.asarray(loglik_series),
        wall_time=time.perf_counter() - started,
        epochs_run=epochs_run,
        stopped_early=stopped_early,
        final_network=final)
    return final, report
