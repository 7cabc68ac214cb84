"""Training loops, evaluation sweeps, mismatch experiments, CSV reports.

Training fixes the shadowing state per batch and draws one gain per symbol;
the adaptable variant additionally samples one condition per batch uniformly
from its condition list. Evaluation derives an independent generator per
(image, trial) pair from the master seed, so results do not depend on loop
order and sweeps could be parallelized.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import checkpoint
from .channel import sample_loo
from .errors import NumericError, ParameterError
from .linkbudget import noise_sigma, sample_awgn
from .model import (ConditionScaler, ConditionSpec, DjsccNetwork, ModelConfig,
                    psnr)

CSV_HEADER = ("model,trained_env,trained_state,trained_elev,eval_env,"
              "eval_state,eval_elev,snr_db,ratio,mean_psnr_db,n_trials")

FADING_MODES = ("loo", "unit", "zero")


@dataclass(frozen=True)
class TrainSpec:
    model: ModelConfig
    conditions: tuple
    epochs: int
    seed: int = 0
    batch_size: int = 32
    learning_rate: float = 1e-3
    learning_rate_after_drop: float = 1e-4
    lr_drop_epoch: int = 50
    fading: str = "loo"

    def __post_init__(self):
        object.__setattr__(self, "conditions", tuple(self.conditions))
        if not self.conditions:
            raise ParameterError("at least one training condition is required")
        if self.learning_rate <= 0 or self.learning_rate_after_drop <= 0:
            raise ParameterError("learning rates must be > 0")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.fading not in FADING_MODES:
            raise ParameterError(f"fading must be one of {FADING_MODES}")


@dataclass
class TrainResult:
    network: DjsccNetwork
    epoch_losses: list
    steps: int


def _draw_gains(condition: ConditionSpec, fading, batch, symbols, rng):
    if fading == "unit":
        return np.ones((batch, symbols), dtype=complex)
    if fading == "zero":
        return np.zeros((batch, symbols), dtype=complex)
    return sample_loo(condition.loo_params, batch * symbols, rng) \
        .reshape(batch, symbols)


def _draw_noise(condition: ConditionSpec, power, batch, symbols, rng):
    spec = noise_sigma(condition.snr_db, power)
    return sample_awgn(spec, batch * symbols, rng).reshape(batch, symbols)


def train(spec: TrainSpec, dataset):
    """Train a network on [N,H,W,bands] images; returns net plus loss log.

    One condition is drawn per batch (uniform over the spec's list), fresh
    gains and noise per step. The learning rate drops once at the configured
    epoch. A NaN loss aborts with the failing step index.
    """
    images = np.asarray(dataset, dtype=np.float32)
    n = images.shape[0]
    if spec.batch_size > n:
        raise ParameterError(
            f"batch_size {spec.batch_size} exceeds dataset size {n}"
        )
    rng = np.random.default_rng(spec.seed)
    scaler = ConditionScaler.from_conditions(spec.conditions) \
        if spec.model.attention_enabled else ConditionScaler()
    network = DjsccNetwork(spec.model, seed=spec.seed, condition_scaler=scaler)
    adam = ad.Adam(network.graph.parameters, learning_rate=spec.learning_rate)
    symbols = network.code.symbols
    power = spec.model.power_constraint
    steps_per_epoch = max(1, n // spec.batch_size)

    epoch_losses = []
    step = 0
    for epoch in range(spec.epochs):
        if epoch == spec.lr_drop_epoch:
            adam.learning_rate = spec.learning_rate_after_drop
        order = rng.permutation(n)
        total = 0.0
        for chunk in range(steps_per_epoch):
            batch_idx = order[chunk * spec.batch_size:(chunk + 1) * spec.batch_size]
            batch = images[batch_idx]
            if len(spec.conditions) > 1:
                condition = spec.conditions[rng.integers(len(spec.conditions))]
            else:
                condition = spec.conditions[0]
            gains = _draw_gains(condition, spec.fading, len(batch_idx), symbols, rng)
            noise = _draw_noise(condition, power, len(batch_idx), symbols, rng)
            x = ad.Tensor(batch)
            restored, _, _ = network.forward(
                x, gains, noise,
                condition=condition if spec.model.attention_enabled else None,
            )
            loss = ad.mse(restored, x)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NumericError(f"training diverged (loss {value}) at step {step}")
            grads = network.graph.backward(loss)
            adam.step(grads)
            total += value
            step += 1
        epoch_losses.append(total / steps_per_epoch)
    return TrainResult(network=network, epoch_losses=epoch_losses, steps=step)


# --- evaluation ------------------------------------------------------------------

@dataclass
class EvalResult:
    mean_psnr_db: float
    per_trial: list  # (image_index, trial_index, psnr_db)

    @property
    def n_trials(self):
        return len(self.per_trial)


def _task_rng(seed, image_index, trial_index):
    # counter-based derivation: every (image, trial) task owns a stream
    return np.random.default_rng([seed, image_index, trial_index])


def evaluate(network: DjsccNetwork, condition: ConditionSpec, dataset,
             trials_per_image=10, seed=0, fading="loo", assumed=None):
    """Mean PSNR of encode -> channel -> decode over images and trials.

    `assumed` (default: `condition`) is what the attention modules are told;
    the channel itself always runs at `condition`. Passing a different
    assumed condition realizes the estimation-error experiments.
    """
    if fading not in FADING_MODES:
        raise ParameterError(f"fading must be one of {FADING_MODES}")
    if trials_per_image < 1:
        raise ParameterError("trials_per_image must be >= 1")
    images = np.asarray(dataset, dtype=np.float32)
    n = images.shape[0]
    if n < 1:
        raise ParameterError("dataset is empty")
    if assumed is None:
        assumed = condition
    symbols = network.code.symbols
    power = network.config.power_constraint
    attention = network.config.attention_enabled
    records = []
    for trial in range(trials_per_image):
        gains = np.empty((n, symbols), dtype=complex)
        noise = np.empty((n, symbols), dtype=complex)
        for i in range(n):
            rng = _task_rng(seed, i, trial)
            gains[i] = _draw_gains(condition, fading, 1, symbols, rng)[0]
            noise[i] = _draw_noise(condition, power, 1, symbols, rng)[0]
        restored, _, _ = network.forward(
            images, gains, noise, condition=assumed if attention else None,
        )
        for i in range(n):
            records.append((i, trial, psnr(images[i], restored.data[i])))
    mean = float(np.mean([r[2] for r in records]))
    return EvalResult(mean_psnr_db=mean, per_trial=records)


@dataclass(frozen=True)
class EvalRow:
    model: str
    trained_env: str
    trained_state: str
    trained_elev: str
    eval_env: str
    eval_state: str
    eval_elev: str
    snr_db: float
    ratio: float
    mean_psnr_db: float
    n_trials: int

    def as_csv(self):
        return (f"{self.model},{self.trained_env},{self.trained_state},"
                f"{self.trained_elev},{self.eval_env},{self.eval_state},"
                f"{self.eval_elev},{self.snr_db:.4f},{self.ratio:.6f},"
                f"{self.mean_psnr_db:.6f},{self.n_trials}")


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    trials: dict = field(default_factory=dict)  # row index -> per-trial records

    def add(self, row: EvalRow, per_trial=None):
        self.rows.append(row)
        if per_trial is not None:
            self.trials[len(self.rows) - 1] = list(per_trial)

    def to_csv(self):
        out = io.StringIO()
        out.write(CSV_HEADER + "\n")
        for row in self.rows:
            out.write(row.as_csv() + "\n")
        return out.getvalue()

    def write_csv(self, path):
        with open(path, "w") as handle:
            handle.write(self.to_csv())

    def write_trials_csv(self, path):
        with open(path, "w") as handle:
            handle.write("row,image_index,trial_index,psnr_db\n")
            for row_index in sorted(self.trials):
                for image_index, trial_index, value in self.trials[row_index]:
                    handle.write(
                        f"{row_index},{image_index},{trial_index},{value:.6f}\n"
                    )


def _trained_fields(conditions):
    if len(conditions) == 1:
        c = conditions[0]
        return c.environment, c.state.label, f"{c.elevation_deg:g}"
    return "multi", "multi", "multi"


def make_row(model_id, trained_conditions, evaluated: ConditionSpec,
             ratio, result: EvalResult):
    env, state, elev = _trained_fields(tuple(trained_conditions))
    return EvalRow(
        model=model_id,
        trained_env=env,
        trained_state=state,
        trained_elev=elev,
        eval_env=evaluated.environment,
        eval_state=evaluated.state.label,
        eval_elev=f"{evaluated.elevation_deg:g}",
        snr_db=evaluated.snr_db,
        ratio=ratio,
        mean_psnr_db=result.mean_psnr_db,
        n_trials=result.n_trials,
    )


def snr_mismatch_sweep(network, trained_condition: ConditionSpec, snr_list,
                       dataset, trials_per_image=10, seed=0, fading="loo",
                       model_id="model"):
    """Evaluate across SNRs holding fading (and the assumed condition) fixed.

    The channel runs at each swept SNR while attention, if present, keeps
    seeing the trained condition: the receiver believes its estimate.
    """
    report = EvalReport()
    for snr_db in snr_list:
        actual = ConditionSpec(
            environment=trained_condition.environment,
            state=trained_condition.state,
            elevation_deg=trained_condition.elevation_deg,
            alpha_db=trained_condition.alpha_db,
            psi_db=trained_condition.psi_db,
            mp_db=trained_condition.mp_db,
            snr_db=float(snr_db),
        )
        result = evaluate(network, actual, dataset, trials_per_image, seed,
                          fading, assumed=trained_condition)
        report.add(
            make_row(model_id, (trained_condition,), actual,
                     network.code.realized_ratio, result),
            per_trial=result.per_trial,
        )
    return report


def state_mismatch(network, assumed: ConditionSpec, actual: ConditionSpec,
                   dataset, trials_per_image=10, seed=0, fading="loo",
                   model_id="model"):
    """One report row where the channel state estimate is wrong.

    Attention inputs use `assumed`; gains and noise come from `actual`.
    """
    result = evaluate(network, actual, dataset, trials_per_image, seed,
                      fading, assumed=assumed)
    report = EvalReport()
    report.add(
        make_row(model_id, (assumed,), actual, network.code.realized_ratio,
                 result),
        per_trial=result.per_trial,
    )
    return report


# --- storage accounting ------------------------------------------------------------

@dataclass(frozen=True)
class StorageEntry:
    model: str
    parameters: int
    attention_parameters: int
    checkpoint_bytes: int


@dataclass
class StorageReport:
    adaptable: StorageEntry
    per_condition: list

    @property
    def attention_share(self):
        return self.adaptable.attention_parameters / self.adaptable.parameters

    @property
    def per_condition_total_bytes(self):
        return sum(e.checkpoint_bytes for e in self.per_condition)

    def lines(self):
        out = [
            f"adaptable: {self.adaptable.parameters} params "
            f"({self.adaptable.attention_parameters} attention, "
            f"{self.attention_share:.4%}), {self.adaptable.checkpoint_bytes} bytes",
        ]
        for entry in self.per_condition:
            out.append(
                f"{entry.model}: {entry.parameters} params, "
                f"{entry.checkpoint_bytes} bytes"
            )
        out.append(
            f"sum of {len(self.per_condition)} per-condition checkpoints: "
            f"{self.per_condition_total_bytes} bytes"
        )
        return out


def _storage_entry(name, network):
    return StorageEntry(
        model=name,
        parameters=network.parameter_count(),
        attention_parameters=network.attention_parameter_count(),
        checkpoint_bytes=len(checkpoint.dumps(network.state_dict())),
    )


def compare_storage(adaptable: DjsccNetwork, per_condition_networks):
    """Parameter counts, attention share, and checkpoint sizes side by side."""
    per_condition = [
        _storage_entry(f"per_condition_{i}", net)
        for i, net in enumerate(per_condition_networks)
    ]
    return StorageReport(
        adaptable=_storage_entry("adaptable", adaptable),
        per_condition=per_condition,
    )
