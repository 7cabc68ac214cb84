"""Encoder/decoder with power-normalized complex symbols and channel attention.

The encoder is four residual blocks (strides 2,2,1,1 by default) followed by
a terminal convolution whose channel count realizes the requested compression
ratio; adjacent channel pairs (2i, 2i+1) are the real and imaginary parts of
symbol i. The decoder mirrors the encoder with transposed convolutions and a
sigmoid output. With attention enabled, a module after every residual block
rescales feature channels from pooled context plus the current channel
descriptor (ray mean/std, multipath power, SNR).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import checkpoint
from .channel import EnvironmentTable, LooParameters, ShadowState
from .errors import ConfigError, ParameterError, ShapeError
from .linkbudget import LinkParameters, expected_snr_db

PSNR_CAP_DB = 200.0


@dataclass(frozen=True)
class ModelConfig:
    input_shape: tuple  # (height, width, bands)
    compression_ratio: float
    filters_per_block: int = 16
    kernel: int = 3
    block_strides: tuple = (2, 2, 1, 1)
    attention_enabled: bool = False
    attention_hidden: int = 16
    power_constraint: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "block_strides", tuple(int(s) for s in self.block_strides))
        h, w, bands = self.input_shape
        if h < 4 or w < 4 or bands < 1:
            raise ConfigError(f"input_shape too small: {self.input_shape}")
        if len(self.block_strides) != 4 or any(s < 1 for s in self.block_strides):
            raise ConfigError(f"block_strides must be four ints >= 1, got {self.block_strides}")
        d = self.downsample
        if h % d or w % d:
            raise ConfigError(
                f"input {h}x{w} not divisible by total downsampling factor {d}"
            )
        if not 0.0 < self.compression_ratio < 1.0:
            raise ConfigError(
                f"compression_ratio must lie in (0, 1), got {self.compression_ratio}"
            )
        if self.filters_per_block < 1 or self.attention_hidden < 1:
            raise ConfigError("filters_per_block and attention_hidden must be >= 1")
        if self.kernel != 3:
            raise ConfigError(f"kernel is fixed at 3, got {self.kernel}")
        if self.power_constraint <= 0:
            raise ConfigError(f"power_constraint must be > 0, got {self.power_constraint}")

    @property
    def downsample(self):
        d = 1
        for s in self.block_strides:
            d *= s
        return d

    def to_dict(self):
        return {
            "input_shape": list(self.input_shape),
            "compression_ratio": self.compression_ratio,
            "filters_per_block": self.filters_per_block,
            "kernel": self.kernel,
            "block_strides": list(self.block_strides),
            "attention_enabled": self.attention_enabled,
            "attention_hidden": self.attention_hidden,
            "power_constraint": self.power_constraint,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            input_shape=tuple(doc["input_shape"]),
            compression_ratio=doc["compression_ratio"],
            filters_per_block=doc.get("filters_per_block", 16),
            kernel=doc.get("kernel", 3),
            block_strides=tuple(doc.get("block_strides", (2, 2, 1, 1))),
            attention_enabled=doc.get("attention_enabled", False),
            attention_hidden=doc.get("attention_hidden", 16),
            power_constraint=doc.get("power_constraint", 1.0),
        )


@dataclass(frozen=True)
class CodeShape:
    """Realized bottleneck: c terminal channels, k symbols, n source values."""

    channels: int
    symbols: int
    source_values: int
    realized_ratio: float


def derive_channel_count(config: ModelConfig, tolerance=0.20):
    """Terminal channel count for the requested compression ratio.

    c = round(2 * ratio * n / bottleneck_pixels), rounded up to the nearest
    even integer >= 2; rejects configs whose realized k/n deviates from the
    request by more than `tolerance`.
    """
    h, w, bands = config.input_shape
    d = config.downsample
    n = h * w * bands
    bottleneck = (h // d) * (w // d)
    c = round(2.0 * config.compression_ratio * n / bottleneck)
    if c % 2:
        c += 1
    c = max(c, 2)
    k = bottleneck * c // 2
    realized = k / n
    deviation = abs(realized - config.compression_ratio) / config.compression_ratio
    if deviation > tolerance:
        raise ConfigError(
            f"image too small for ratio {config.compression_ratio}: realized "
            f"{realized:.6f} deviates {deviation:.1%} (> {tolerance:.0%})"
        )
    return CodeShape(channels=c, symbols=k, source_values=n, realized_ratio=realized)


@dataclass(frozen=True)
class ConditionSpec:
    """One channel condition with its resolved parameter vector."""

    environment: str
    state: ShadowState
    elevation_deg: float
    alpha_db: float
    psi_db: float
    mp_db: float
    snr_db: float

    @classmethod
    def resolve(cls, table: EnvironmentTable, state: ShadowState, elevation_deg,
                snr_db=None, link: LinkParameters | None = None,
                snr_db_override=None):
        """Look up Loo parameters and settle the SNR.

        Precedence for the SNR: explicit `snr_db`, then the link section's
        override, then the composed budget at this elevation.
        """
        params = table.lookup(state, elevation_deg)
        if snr_db is None:
            if snr_db_override is not None:
                snr_db = snr_db_override
            elif link is not None:
                snr_db = expected_snr_db(link, elevation_deg)
            else:
                raise ConfigError(
                    "cannot resolve SNR: provide snr_db, snr_db_override, or "
                    "link parameters"
                )
        return cls(
            environment=table.environment,
            state=state,
            elevation_deg=float(elevation_deg),
            alpha_db=params.alpha_db,
            psi_db=params.psi_db,
            mp_db=params.mp_db,
            snr_db=float(snr_db),
        )

    @property
    def loo_params(self):
        return LooParameters(
            alpha_db=self.alpha_db, psi_db=self.psi_db, mp_db=self.mp_db
        )

    def vector(self):
        return np.array([self.alpha_db, self.psi_db, self.mp_db, self.snr_db])


@dataclass(frozen=True)
class ConditionScaler:
    """Fixed affine maps taking each channel descriptor component to ~[-1, 1]."""

    alpha_db: tuple = (-25.0, 5.0)
    psi_db: tuple = (0.0, 6.0)
    mp_db: tuple = (-30.0, 0.0)
    snr_db: tuple = (0.0, 30.0)

    def vector(self, condition: ConditionSpec):
        raw = condition.vector()
        out = np.empty(4)
        for i, (lo, hi) in enumerate(
            (self.alpha_db, self.psi_db, self.mp_db, self.snr_db)
        ):
            out[i] = 0.0 if hi == lo else 2.0 * (raw[i] - lo) / (hi - lo) - 1.0
        return out

    @classmethod
    def from_conditions(cls, conditions):
        stacked = np.stack([c.vector() for c in conditions])
        lows = stacked.min(axis=0)
        highs = stacked.max(axis=0)
        return cls(
            alpha_db=(float(lows[0]), float(highs[0])),
            psi_db=(float(lows[1]), float(highs[1])),
            mp_db=(float(lows[2]), float(highs[2])),
            snr_db=(float(lows[3]), float(highs[3])),
        )

    def to_dict(self):
        return {
            "alpha_db": list(self.alpha_db),
            "psi_db": list(self.psi_db),
            "mp_db": list(self.mp_db),
            "snr_db": list(self.snr_db),
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            alpha_db=tuple(doc["alpha_db"]),
            psi_db=tuple(doc["psi_db"]),
            mp_db=tuple(doc["mp_db"]),
            snr_db=tuple(doc["snr_db"]),
        )


@dataclass
class SymbolVector:
    """Complex symbols as a [B, k, 2] real tensor (2i real, 2i+1 imaginary)."""

    tensor: ad.Tensor
    symbols: int
    power: float

    def average_power(self):
        """Per-batch-row mean |z_i|^2."""
        data = self.tensor.data
        return (data * data).reshape(data.shape[0], -1).sum(axis=1) / self.symbols


def power_normalize(raw: ad.Tensor, symbols, power):
    """Scale raw paired-real symbols to the average power constraint."""
    if symbols < 1:
        raise ParameterError(f"symbols must be >= 1, got {symbols}")
    out = ad.normalize_power(raw, power)
    return SymbolVector(tensor=out, symbols=symbols, power=float(power))


def apply_channel(symbols: SymbolVector, gains, noise):
    """Per-symbol complex multiply by the gains plus additive noise.

    `gains` and `noise` may be complex arrays of shape [B, k] or flat
    length B*k (a GainSeries' samples, for instance).
    """
    tensor = symbols.tensor
    b, k, _ = tensor.shape
    gains = _as_batch_complex(np.asarray(getattr(gains, "samples", gains)), b, k, "gains")
    noise = _as_batch_complex(np.asarray(getattr(noise, "samples", noise)), b, k, "noise")
    out = ad.complex_channel(tensor, gains, noise)
    return SymbolVector(tensor=out, symbols=symbols.symbols, power=symbols.power)


def _as_batch_complex(values, b, k, what):
    if values.shape == (b, k):
        return values
    if values.ndim == 1 and values.size == b * k:
        return values.reshape(b, k)
    raise ShapeError(
        f"{what} must have shape ({b}, {k}) or length {b * k}, got {values.shape}"
    )


def psnr(reference, reconstruction, max_value=1.0, cap_db=PSNR_CAP_DB):
    """Peak SNR in dB, capped at `cap_db` for (near-)exact reconstructions."""
    reference = np.asarray(reference, dtype=np.float64)
    reconstruction = np.asarray(reconstruction, dtype=np.float64)
    if reference.shape != reconstruction.shape:
        raise ShapeError(
            f"psnr: shapes {reference.shape} and {reconstruction.shape} differ"
        )
    mean_sq = float(np.mean((reference - reconstruction) ** 2))
    if mean_sq <= max_value ** 2 * 10.0 ** (-cap_db / 10.0):
        return cap_db
    return 10.0 * math.log10(max_value ** 2 / mean_sq)


# --- the network ------------------------------------------------------------------

def _glorot(rng, shape, fan_in, fan_out, dtype):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape).astype(dtype)


class DjsccNetwork:
    """Realized encoder/decoder parameter set for one ModelConfig."""

    def __init__(self, config: ModelConfig, seed=0, dtype=np.float32,
                 condition_scaler: ConditionScaler | None = None):
        self.config = config
        self.code = derive_channel_count(config)
        self.dtype = np.dtype(dtype)
        self.condition_scaler = condition_scaler or ConditionScaler()
        self.graph = ad.Graph()
        self._build(np.random.default_rng(seed))

    # parameter construction -------------------------------------------------

    def _conv_param(self, rng, name, kh, kw, cin, cout):
        kernel = _glorot(rng, (kh, kw, cin, cout), kh * kw * cin, kh * kw * cout,
                         self.dtype)
        self.graph.parameter(f"{name}.kernel", kernel, dtype=self.dtype)
        self.graph.parameter(f"{name}.bias", np.zeros(cout, dtype=self.dtype),
                             dtype=self.dtype)

    def _tconv_param(self, rng, name, kh, kw, cin, cout):
        # kernel oriented as the paired forward conv: output has cin channels
        kernel = _glorot(rng, (kh, kw, cin, cout), kh * kw * cout, kh * kw * cin,
                         self.dtype)
        self.graph.parameter(f"{name}.kernel", kernel, dtype=self.dtype)
        self.graph.parameter(f"{name}.bias", np.zeros(cin, dtype=self.dtype),
                             dtype=self.dtype)

    def _prelu_param(self, name, channels):
        self.graph.parameter(f"{name}.slope",
                             np.full(channels, 0.25, dtype=self.dtype),
                             dtype=self.dtype)

    def _attention_params(self, rng, name, features):
        hidden = self.config.attention_hidden
        self.graph.parameter(
            f"{name}.dense1.weight",
            _glorot(rng, (features + 4, hidden), features + 4, hidden, self.dtype),
            dtype=self.dtype,
        )
        self.graph.parameter(f"{name}.dense1.bias",
                             np.zeros(hidden, dtype=self.dtype), dtype=self.dtype)
        self.graph.parameter(
            f"{name}.dense2.weight",
            _glorot(rng, (hidden, features), hidden, features, self.dtype),
            dtype=self.dtype,
        )
        self.graph.parameter(f"{name}.dense2.bias",
                             np.zeros(features, dtype=self.dtype), dtype=self.dtype)

    def _build(self, rng):
        cfg = self.config
        f = cfg.filters_per_block
        kk = cfg.kernel
        _, _, bands = cfg.input_shape
        cin = bands
        for i, stride in enumerate(cfg.block_strides, start=1):
            name = f"enc.block{i}"
            self._conv_param(rng, f"{name}.conv1", kk, kk, cin, f)
            self._prelu_param(f"{name}.prelu1", f)
            self._conv_param(rng, f"{name}.conv2", kk, kk, f, f)
            if stride != 1 or cin != f:
                self._conv_param(rng, f"{name}.proj", 1, 1, cin, f)
            self._prelu_param(f"{name}.prelu2", f)
            if cfg.attention_enabled:
                self._attention_params(rng, f"{name}.att", f)
            cin = f
        self._conv_param(rng, "enc.head", kk, kk, f, self.code.channels)

        self._tconv_param(rng, "dec.stem", kk, kk, f, self.code.channels)
        for i, stride in enumerate(reversed(cfg.block_strides), start=1):
            name = f"dec.block{i}"
            self._tconv_param(rng, f"{name}.conv1", kk, kk, f, f)
            self._prelu_param(f"{name}.prelu1", f)
            self._tconv_param(rng, f"{name}.conv2", kk, kk, f, f)
            if stride != 1:
                self._tconv_param(rng, f"{name}.proj", 1, 1, f, f)
            self._prelu_param(f"{name}.prelu2", f)
            if cfg.attention_enabled:
                self._attention_params(rng, f"{name}.att", f)
        self._tconv_param(rng, "dec.head", kk, kk, bands, f)

    # forward passes -----------------------------------------------------------

    def _p(self, name):
        return self.graph.parameters[name]

    def _condition_tensor(self, condition, batch):
        vec = self.condition_scaler.vector(condition).astype(self.dtype)
        return ad.Tensor(np.tile(vec, (batch, 1)), dtype=self.dtype)

    def _attention(self, features, name, condition_tensor):
        pooled = ad.global_avg_pool(features)
        ctx = ad.concat([pooled, condition_tensor])
        hidden = ad.relu(ad.dense(ctx, self._p(f"{name}.dense1.weight"),
                                  self._p(f"{name}.dense1.bias")))
        scales = ad.sigmoid(ad.dense(hidden, self._p(f"{name}.dense2.weight"),
                                     self._p(f"{name}.dense2.bias")))
        return ad.mul_channels(features, scales)

    def _enc_block(self, x, name, stride):
        y = ad.conv2d(x, self._p(f"{name}.conv1.kernel"),
                      self._p(f"{name}.conv1.bias"), stride=stride)
        y = ad.prelu(y, self._p(f"{name}.prelu1.slope"))
        y = ad.conv2d(y, self._p(f"{name}.conv2.kernel"),
                      self._p(f"{name}.conv2.bias"), stride=1)
        if f"{name}.proj.kernel" in self.graph.parameters:
            skip = ad.conv2d(x, self._p(f"{name}.proj.kernel"),
                             self._p(f"{name}.proj.bias"), stride=stride)
        else:
            skip = x
        return ad.prelu(ad.add(y, skip), self._p(f"{name}.prelu2.slope"))

    def _dec_block(self, x, name, stride):
        y = ad.conv2d_transpose(x, self._p(f"{name}.conv1.kernel"),
                                self._p(f"{name}.conv1.bias"), stride=stride)
        y = ad.prelu(y, self._p(f"{name}.prelu1.slope"))
        y = ad.conv2d_transpose(y, self._p(f"{name}.conv2.kernel"),
                                self._p(f"{name}.conv2.bias"), stride=1)
        if f"{name}.proj.kernel" in self.graph.parameters:
            skip = ad.conv2d_transpose(x, self._p(f"{name}.proj.kernel"),
                                       self._p(f"{name}.proj.bias"), stride=stride)
        else:
            skip = x
        return ad.prelu(ad.add(y, skip), self._p(f"{name}.prelu2.slope"))

    def _require_condition(self, condition, use_attention):
        if use_attention and condition is None:
            raise ParameterError(
                "this network has attention enabled; encode/decode need a "
                "ConditionSpec"
            )

    def encode(self, images, condition=None, force_unit_attention=False):
        """Map images [B,H,W,bands] in [0,1] to a power-normalized SymbolVector."""
        x = images if isinstance(images, ad.Tensor) else ad.Tensor(images, dtype=self.dtype)
        h, w, bands = self.config.input_shape
        if x.data.ndim != 4 or x.shape[1:] != (h, w, bands):
            raise ShapeError(
                f"encode: expected [B,{h},{w},{bands}], got {x.shape}"
            )
        use_attention = self.config.attention_enabled and not force_unit_attention
        self._require_condition(condition, use_attention)
        cond = self._condition_tensor(condition, x.shape[0]) if use_attention else None
        for i, stride in enumerate(self.config.block_strides, start=1):
            x = self._enc_block(x, f"enc.block{i}", stride)
            if use_attention:
                x = self._attention(x, f"enc.block{i}.att", cond)
        x = ad.conv2d(x, self._p("enc.head.kernel"), self._p("enc.head.bias"), stride=1)
        b = x.shape[0]
        raw = ad.reshape(x, (b, self.code.symbols, 2))
        return power_normalize(raw, self.code.symbols, self.config.power_constraint)

    def decode(self, symbols, condition=None, force_unit_attention=False):
        """Reconstruct images from received symbols; output is sigmoid-bounded."""
        tensor = symbols.tensor if isinstance(symbols, SymbolVector) else symbols
        if not isinstance(tensor, ad.Tensor):
            tensor = ad.Tensor(tensor, dtype=self.dtype)
        b = tensor.shape[0]
        if tensor.shape[1:] != (self.code.symbols, 2):
            raise ShapeError(
                f"decode: expected [B,{self.code.symbols},2], got {tensor.shape}"
            )
        use_attention = self.config.attention_enabled and not force_unit_attention
        self._require_condition(condition, use_attention)
        cond = self._condition_tensor(condition, b) if use_attention else None
        h, w, _ = self.config.input_shape
        d = self.config.downsample
        x = ad.reshape(tensor, (b, h // d, w // d, self.code.channels))
        x = ad.conv2d_transpose(x, self._p("dec.stem.kernel"),
                                self._p("dec.stem.bias"), stride=1)
        for i, stride in enumerate(reversed(self.config.block_strides), start=1):
            x = self._dec_block(x, f"dec.block{i}", stride)
            if use_attention:
                x = self._attention(x, f"dec.block{i}.att", cond)
        x = ad.conv2d_transpose(x, self._p("dec.head.kernel"),
                                self._p("dec.head.bias"), stride=1)
        return ad.sigmoid(x)

    def forward(self, images, gains, noise, condition=None,
                force_unit_attention=False):
        """encode -> channel -> decode; returns (reconstruction, sent, received)."""
        sent = self.encode(images, condition, force_unit_attention)
        received = apply_channel(sent, gains, noise)
        restored = self.decode(received, condition, force_unit_attention)
        return restored, sent, received

    # accounting / persistence ---------------------------------------------------

    def parameter_count(self):
        return self.graph.parameter_count()

    def attention_parameter_count(self):
        return sum(
            int(t.data.size) for name, t in self.graph.parameters.items()
            if ".att." in name
        )

    def state_dict(self):
        return {name: t.data for name, t in self.graph.parameters.items()}

    def save(self, weights_path, sidecar_path):
        checkpoint.save(self.state_dict(), weights_path)
        doc = {
            "model": self.config.to_dict(),
            "condition_scaler": self.condition_scaler.to_dict(),
        }
        with open(sidecar_path, "w") as handle:
            json.dump(doc, handle, indent=2, sort_keys=True)
            handle.write("\n")

    @classmethod
    def load(cls, weights_path, sidecar_path):
        with open(sidecar_path) as handle:
            doc = json.load(handle)
        config = ModelConfig.from_dict(doc["model"])
        scaler = ConditionScaler.from_dict(doc["condition_scaler"])
        net = cls(config, seed=0, condition_scaler=scaler)
        weights = checkpoint.load(weights_path)
        own = net.graph.parameters
        if set(weights) != set(own):
            missing = sorted(set(own) - set(weights))
            extra = sorted(set(weights) - set(own))
            raise ConfigError(
                f"checkpoint does not match architecture (missing {missing}, "
                f"extra {extra})"
            )
        for name, values in weights.items():
            if own[name].data.shape != values.shape:
                raise ShapeError(
                    f"parameter {name!r}: checkpoint shape {values.shape} vs "
                    f"model {own[name].data.shape}"
                )
            own[name].data = values.astype(net.dtype)
        return net


def attention_parameter_formula(features, hidden, modules=8):
    """Closed-form attention parameter count: modules * [(F+4)H + H + HF + F]."""
    return modules * ((features + 4) * hidden + hidden + hidden * features + features)
