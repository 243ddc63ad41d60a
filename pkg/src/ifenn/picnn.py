"""Physics-informed CNN mapping a history (H) pixel map to a phase-field map.

The network is a plain stack of 5x5 convolutions whose kernels are invariant
under the 8 symmetries of the square, so each kernel has 6 free entries.
It is trained without labels by minimizing the 2-norm of the finite-difference
residual of the phase-field equation on the pixel grid.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .elasticity import MaterialParams

MODEL_FORMAT = "ifenn-picnn"
MODEL_VERSION = 1
DEFAULT_CHANNELS = (1, 24, 24, 24, 1)

# orbit index of each kernel entry: corners a=0, edge-next-to-corner b=1,
# edge centers c=2, inner diagonal d=3, inner edge e=4, center f=5
KERNEL_ORBITS = np.array(
    [[0, 1, 2, 1, 0],
     [1, 3, 4, 3, 1],
     [2, 4, 5, 4, 2],
     [1, 3, 4, 3, 1],
     [0, 1, 2, 1, 0]]
)
_ORBIT_INDEX = torch.from_numpy(KERNEL_ORBITS.ravel())

_STENCIL_WEIGHTS = {
    "K5": ([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]], 0.0),
    "K9": ([[1 / 6, 2 / 3, 1 / 6], [2 / 3, -10 / 3, 2 / 3], [1 / 6, 2 / 3, 1 / 6]], 0.0),
    # h^2 * K9 + 3 * delta; the 3 phi is subtracted again when applied
    "K9star": ([[1 / 6, 2 / 3, 1 / 6], [2 / 3, -1 / 3, 2 / 3], [1 / 6, 2 / 3, 1 / 6]], 3.0),
}


class ModelError(ValueError):
    """Malformed model file or incompatible model input."""


class TrainingError(RuntimeError):
    pass


def expand_kernel(params):
    """Expand trailing-axis 6-vectors into D4-symmetric 5x5 kernels.

    Works on numpy arrays and torch tensors; for tensors the backward pass
    sums the gradient of every kernel entry into its orbit parameter.
    """
    if isinstance(params, torch.Tensor):
        out = params.index_select(-1, _ORBIT_INDEX.to(params.device))
        return out.reshape(*params.shape[:-1], 5, 5)
    params = np.asarray(params)
    if params.shape[-1] != 6:
        raise ValueError(f"expected 6 kernel parameters, got trailing dim {params.shape[-1]}")
    return params[..., KERNEL_ORBITS]


@dataclass(frozen=True)
class LaplacianStencil:
    kind: str = "K9star"
    h: float = 1.0

    def __post_init__(self):
        if self.kind not in _STENCIL_WEIGHTS:
            raise ValueError(f"unknown stencil {self.kind!r}; choose from {sorted(_STENCIL_WEIGHTS)}")
        if not self.h > 0:
            raise ValueError("stencil spacing must be positive")

    @property
    def weights(self) -> np.ndarray:
        return np.array(_STENCIL_WEIGHTS[self.kind][0])

    @property
    def center_offset(self) -> float:
        return _STENCIL_WEIGHTS[self.kind][1]

    def apply(self, phi: torch.Tensor) -> torch.Tensor:
        """Laplacian of ``phi`` (..., rows, cols) with mirrored (zero-flux) edges.

        The stencil is accumulated entry by entry in row-major order so that
        a scalar loop evaluating the same sum reproduces it bit for bit.
        """
        shape = phi.shape
        x = phi.reshape(-1, 1, shape[-2], shape[-1])
        # one-cell replicate padding equals a mirror about the outer pixel faces
        padded = F.pad(x, (1, 1, 1, 1), mode="replicate")
        rows, cols = shape[-2], shape[-1]
        acc = None
        for di, row in enumerate(self.weights):
            for dj, w in enumerate(row):
                term = float(w) * padded[..., di:di + rows, dj:dj + cols]
                acc = term if acc is None else acc + term
        acc = acc - self.center_offset * x
        return (acc / self.h**2).reshape(shape)


def pde_residual(phi, h_map, mat: MaterialParams, stencil: LaplacianStencil):
    """Pointwise residual (gc/lc) phi - gc lc lap(phi) - 2 (1 - phi) H."""
    phi = torch.as_tensor(phi)
    h_map = torch.as_tensor(h_map, dtype=phi.dtype)
    lap = stencil.apply(phi)
    return (mat.gc / mat.lc) * phi - (mat.gc * mat.lc) * lap - 2.0 * (1.0 - phi) * h_map


def residual_loss(residual: torch.Tensor, kind: str = "norm") -> torch.Tensor:
    """2-norm of the residual over all pixels and samples (``kind="mse"`` for the mean square)."""
    if kind == "norm":
        # vector_norm has a zero subgradient at the origin, unlike sqrt(sum(r^2))
        return torch.linalg.vector_norm(residual.reshape(-1))
    if kind == "mse":
        return torch.mean(residual**2)
    raise ValueError(f"unknown loss {kind!r}")


class PicnnModel(nn.Module):
    """Stack of D4-symmetric 5x5 convolutions: tanh between layers, sigmoid at the end."""

    def __init__(self, channels=DEFAULT_CHANNELS, seed: int = 0, dtype=torch.float32):
        super().__init__()
        channels = tuple(int(c) for c in channels)
        if len(channels) < 2 or min(channels) < 1:
            raise ModelError(f"invalid channel plan {channels}")
        self.channels = channels
        self.seed = int(seed)
        self.dtype = dtype
        gen = torch.Generator().manual_seed(self.seed)
        self.kernels = nn.ParameterList()
        self.biases = nn.ParameterList()
        for cin, cout in zip(channels[:-1], channels[1:]):
            bound = (cin * 25) ** -0.5
            k = (2.0 * torch.rand(cout, cin, 6, generator=gen, dtype=torch.float64) - 1.0) * bound
            b = (2.0 * torch.rand(cout, generator=gen, dtype=torch.float64) - 1.0) * bound
            self.kernels.append(nn.Parameter(k.to(dtype)))
            self.biases.append(nn.Parameter(b.to(dtype)))
        self.metadata: dict = {}

    @property
    def n_layers(self) -> int:
        return len(self.kernels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """``x`` has shape (N, 1, rows, cols); the output has the same shape."""
        x = x.to(self.dtype).contiguous(memory_format=torch.channels_last)
        last = self.n_layers - 1
        for i, (k, b) in enumerate(zip(self.kernels, self.biases)):
            w = expand_kernel(k).contiguous(memory_format=torch.channels_last)
            x = F.conv2d(x, w, b, padding=2)
            x = torch.sigmoid(x) if i == last else torch.tanh(x)
        return x

    @torch.no_grad()
    def predict(self, h_map: np.ndarray) -> np.ndarray:
        """Phase-field map for a single 2D history map."""
        h_map = np.asarray(h_map)
        if h_map.ndim != 2:
            raise ModelError(f"expected a 2D map, got shape {h_map.shape}")
        x = torch.as_tensor(h_map, dtype=self.dtype)[None, None]
        out = self.forward(x)[0, 0].contiguous().numpy().astype(np.float64)
        if not np.all(np.isfinite(out)):
            raise ModelError("network produced non-finite values")
        return out

    def parameter_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (k, b) in enumerate(zip(self.kernels, self.biases)):
            out[f"kernel{i}"] = k.detach().numpy().copy()
            out[f"bias{i}"] = b.detach().numpy().copy()
        return out


def _as_batch(h_maps, dtype) -> torch.Tensor:
    arr = np.asarray(h_maps, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"expected a batch of 2D maps, got shape {arr.shape}")
    return torch.as_tensor(arr, dtype=dtype)[:, None]


def loss_and_grad(model: PicnnModel, h_maps, mat: MaterialParams, stencil: LaplacianStencil, loss_kind: str = "norm"):
    """Residual loss of ``model`` on a batch of H maps and its parameter gradients."""
    x = _as_batch(h_maps, model.dtype)
    model.zero_grad(set_to_none=True)
    phi = model(x)
    loss = residual_loss(pde_residual(phi, x, mat, stencil), loss_kind)
    loss.backward()
    grads = {}
    for i, (k, b) in enumerate(zip(model.kernels, model.biases)):
        for name, p in ((f"kernel{i}", k), (f"bias{i}", b)):
            g = p.grad.detach().numpy().copy()
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient for {name}")
            grads[name] = g
    return float(loss.detach()), grads


@dataclass
class TrainConfig:
    epochs: int = 10000
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 42
    dtype: str = "float32"
    stencil: str = "K9star"
    loss: str = "norm"
    h_cap: float = 1e5
    channels: tuple = DEFAULT_CHANNELS

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")
        self.channels = tuple(self.channels)

    @property
    def torch_dtype(self):
        return getattr(torch, self.dtype)


@dataclass
class TrainResult:
    model: PicnnModel
    history: list[float] = field(default_factory=list)
    final_loss: float = math.nan


def train(model: PicnnModel, h_maps, mat: MaterialParams, h_px: float, cfg: TrainConfig, log_every: int = 0, log=print) -> TrainResult:
    """Adam on the residual loss; ``history[k]`` is the loss before update ``k+1``.

    ``h_maps`` are capped at ``cfg.h_cap`` before training. ``final_loss`` is
    evaluated after the last update.
    """
    maps = np.asarray(h_maps, dtype=np.float64)
    if maps.ndim != 3:
        raise ValueError(f"expected a batch of 2D maps, got shape {maps.shape}")
    x = _as_batch(np.clip(maps, 0.0, cfg.h_cap), model.dtype)
    stencil = LaplacianStencil(cfg.stencil, h_px)
    opt = torch.optim.Adam(
        model.parameters(), lr=cfg.learning_rate,
        betas=(cfg.adam_beta1, cfg.adam_beta2), eps=cfg.adam_eps,
    )
    history = []
    for epoch in range(1, cfg.epochs + 1):
        opt.zero_grad(set_to_none=True)
        loss = residual_loss(pde_residual(model(x), x, mat, stencil), cfg.loss)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise TrainingError(f"loss became non-finite at epoch {epoch}")
        loss.backward()
        opt.step()
        history.append(value)
        if log_every and (epoch % log_every == 0 or epoch == 1):
            log(f"epoch {epoch:6d}  loss {value:.6e}")
    with torch.no_grad():
        final = float(residual_loss(pde_residual(model(x), x, mat, stencil), cfg.loss))
    model.metadata = {
        "epochs": cfg.epochs,
        "learning_rate": cfg.learning_rate,
        "adam": [cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps],
        "loss": cfg.loss,
        "stencil": cfg.stencil,
        "h_cap": cfg.h_cap,
        "h_px": h_px,
        "material": asdict(mat),
        "train_shape": list(maps.shape),
        "initial_loss": history[0] if history else None,
        "final_loss": final,
    }
    return TrainResult(model, history, final)


def model_to_dict(model: PicnnModel, provenance: dict | None = None) -> dict:
    """Serializable description; ``provenance`` (tool version, config hash) is stored verbatim."""
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "provenance": dict(provenance or {}),
        "architecture": {
            "channels": list(model.channels),
            "kernel_size": 5,
            "kernel_symmetry": "D4 (6 parameters: corner, edge-off-center, edge-center, inner-diagonal, inner-edge, center)",
            "padding": "zero, width 2",
            "activations": ["tanh"] * (model.n_layers - 1) + ["sigmoid"],
            "bias": True,
        },
        "dtype": str(model.dtype).replace("torch.", ""),
        "init": {"scheme": "uniform(-s, s), s = (fan_in * 25)^-1/2, kernels and biases", "seed": model.seed},
        "training": model.metadata,
        "layers": [
            {
                "kernels": k.detach().double().tolist(),
                "bias": b.detach().double().tolist(),
            }
            for k, b in zip(model.kernels, model.biases)
        ],
    }


def save_model(model: PicnnModel, path, provenance: dict | None = None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model, provenance), indent=1) + "\n")


def model_from_dict(data: dict) -> PicnnModel:
    if data.get("format") != MODEL_FORMAT:
        raise ModelError(f"not a PICNN model file (format={data.get('format')!r})")
    if data.get("version") != MODEL_VERSION:
        raise ModelError(f"unsupported model version {data.get('version')!r}")
    try:
        channels = tuple(data["architecture"]["channels"])
        dtype = getattr(torch, data["dtype"])
        layers = data["layers"]
        seed = data["init"]["seed"]
    except (KeyError, TypeError, AttributeError) as exc:
        raise ModelError(f"model file is missing a field: {exc}") from exc
    if len(layers) != len(channels) - 1:
        raise ModelError(f"channel plan {channels} needs {len(channels) - 1} layers, file has {len(layers)}")
    model = PicnnModel(channels, seed=seed, dtype=dtype)
    with torch.no_grad():
        for i, (layer, cin, cout) in enumerate(zip(layers, channels[:-1], channels[1:])):
            k = torch.tensor(layer["kernels"], dtype=torch.float64)
            b = torch.tensor(layer["bias"], dtype=torch.float64)
            if k.shape != (cout, cin, 6) or b.shape != (cout,):
                raise ModelError(
                    f"layer {i}: expected kernels {(cout, cin, 6)} and bias {(cout,)}, "
                    f"got {tuple(k.shape)} and {tuple(b.shape)}"
                )
            model.kernels[i].copy_(k.to(dtype))
            model.biases[i].copy_(b.to(dtype))
    model.metadata = dict(data.get("training") or {})
    return model


def load_model(path) -> PicnnModel:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(data)
