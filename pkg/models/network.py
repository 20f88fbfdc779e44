"""Small classifiers (2-layer MLP, 2-layer CNN) over a flat parameter vector"""

from dataclasses import dataclass, field
from math import isfinite, prod, sqrt
from typing import TYPE_CHECKING, List, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F

from models.layout import LayerLayout, SegmentKind
from models.param_vector import ParamVector
from utils.errors import DimensionError, EmptyInputError, InvalidParameterError, LabelRangeError, NonFiniteError

if TYPE_CHECKING:
    from models.mask import SparseMask

SUPPORTED_ARCHITECTURES = ("mlp2", "cnn2")

DEFAULT_SHAPES = {
    "mlp2": {"input_shape": (784,), "hidden": (64,), "classes": 10},
    "cnn2": {"input_shape": (1, 28, 28), "hidden": (16, 32), "classes": 10},
}

KERNEL = 3
ACCURACY_CHUNK = 2048

Batch = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class ModelSpec:
    """
    Architecture description

    mlp2: input -> fc1 (hidden[0]) -> ReLU -> fc2 -> C
    cnn2: conv1 (hidden[0] ch, 3x3 pad 1) -> ReLU -> maxpool 2 ->
          conv2 (hidden[1] ch) -> ReLU -> maxpool 2 -> fc -> C
    """

    arch: str
    input_shape: Tuple[int, ...]
    classes: int
    hidden: Tuple[int, ...]
    seed: int = 0

    def __post_init__(self):
        if self.arch not in SUPPORTED_ARCHITECTURES:
            raise InvalidParameterError(f"Unsupported architecture '{self.arch}'")
        if self.classes < 2:
            raise InvalidParameterError(f"Class count must be >= 2, got {self.classes}")
        if any(h < 1 for h in self.hidden):
            raise InvalidParameterError(f"Hidden sizes must be >= 1, got {self.hidden}")
        expected_hidden = 1 if self.arch == "mlp2" else 2
        if len(self.hidden) != expected_hidden:
            raise InvalidParameterError(
                f"{self.arch} takes {expected_hidden} hidden size(s), got {len(self.hidden)}"
            )
        if self.arch == "cnn2":
            if len(self.input_shape) != 3:
                raise InvalidParameterError(f"cnn2 input shape must be (channels, H, W), got {self.input_shape}")
            if self.input_shape[1] < 4 or self.input_shape[2] < 4:
                raise InvalidParameterError(f"cnn2 input must be at least 4x4, got {self.input_shape}")

    @classmethod
    def default(cls, arch: str, seed: int = 0) -> "ModelSpec":
        if arch not in DEFAULT_SHAPES:
            raise InvalidParameterError(f"Unsupported architecture '{arch}'")
        shapes = DEFAULT_SHAPES[arch]
        return cls(arch, shapes["input_shape"], shapes["classes"], shapes["hidden"], seed)

    @property
    def input_size(self) -> int:
        return prod(self.input_shape)

    def describe(self) -> str:
        """Compact form accepted back by the config parser"""
        if self.arch == "mlp2":
            return f"mlp2:{self.input_size}-{self.hidden[0]}-{self.classes}"
        shape = "x".join(str(s) for s in self.input_shape)
        return f"cnn2:{shape}-{self.hidden[0]}-{self.hidden[1]}-{self.classes}"


@dataclass(frozen=True)
class Model:
    """Architecture plus its current parameters"""

    spec: ModelSpec
    params: ParamVector = field(repr=False)

    def __post_init__(self):
        layout = build_layout(self.spec)
        if self.params.dim != layout.dim:
            raise DimensionError(
                f"Parameter dimension {self.params.dim} does not match {self.spec.arch} layout {layout.dim}"
            )
        if self.params.layout is None:
            object.__setattr__(self, "params", ParamVector(self.params.data, layout))

    @property
    def layout(self) -> LayerLayout:
        return self.params.layout

    @property
    def dim(self) -> int:
        return self.params.dim

    def with_params(self, data: np.ndarray) -> "Model":
        return Model(self.spec, self.params.with_data(data))


def build_layout(spec: ModelSpec) -> LayerLayout:
    """
    Derive the flat parameter layout of an architecture

    Args:
        spec: Model specification

    Returns:
        LayerLayout with weight and bias segments in forward order
    """
    C = spec.classes
    if spec.arch == "mlp2":
        h = spec.hidden[0]
        return LayerLayout.from_shapes([
            ("fc1.weight", SegmentKind.FC, (h, spec.input_size)),
            ("fc1.bias", SegmentKind.BIAS, (h,)),
            ("fc2.weight", SegmentKind.FC, (C, h)),
            ("fc2.bias", SegmentKind.BIAS, (C,)),
        ])

    in_ch, height, width = spec.input_shape
    c1, c2 = spec.hidden
    flat = c2 * (height // 2 // 2) * (width // 2 // 2)
    return LayerLayout.from_shapes([
        ("conv1.weight", SegmentKind.CONV, (c1, in_ch, KERNEL, KERNEL)),
        ("conv1.bias", SegmentKind.BIAS, (c1,)),
        ("conv2.weight", SegmentKind.CONV, (c2, c1, KERNEL, KERNEL)),
        ("conv2.bias", SegmentKind.BIAS, (c2,)),
        ("fc.weight", SegmentKind.FC, (C, flat)),
        ("fc.bias", SegmentKind.BIAS, (C,)),
    ])


def critical_layers(spec: ModelSpec) -> List[str]:
    """Segments attacked in full by the critical-layer mask variants"""
    if spec.arch == "cnn2":
        return ["conv1.weight", "fc.weight"]
    return ["fc2.weight"]


def final_fc_segment(spec: ModelSpec) -> str:
    return "fc.weight" if spec.arch == "cnn2" else "fc2.weight"


def parameter_count(spec: ModelSpec) -> int:
    return build_layout(spec).dim


def init_model(spec: ModelSpec, seed: Optional[int] = None) -> Model:
    """
    Initialize parameters: weights ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)), biases 0

    Args:
        spec: Model specification
        seed: Initialization seed (defaults to spec.seed)

    Returns:
        Model with a populated layout
    """
    layout = build_layout(spec)
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    data = np.zeros(layout.dim, dtype=np.float64)
    for seg in layout.weight_segments():
        fan_in = prod(seg.shape[1:])
        bound = sqrt(6.0 / fan_in)
        data[seg.as_slice()] = rng.uniform(-bound, bound, size=seg.length)
    return Model(spec, ParamVector(data, layout))


def _unflatten(layout: LayerLayout, flat: torch.Tensor) -> dict:
    return {seg.name: flat[seg.offset:seg.stop].view(seg.shape) for seg in layout.segments}


def _forward(spec: ModelSpec, layout: LayerLayout, flat: torch.Tensor, inputs: torch.Tensor) -> torch.Tensor:
    p = _unflatten(layout, flat)
    n = inputs.shape[0]
    if spec.arch == "mlp2":
        x = inputs.reshape(n, -1)
        x = F.relu(F.linear(x, p["fc1.weight"], p["fc1.bias"]))
        return F.linear(x, p["fc2.weight"], p["fc2.bias"])

    x = inputs.reshape(n, *spec.input_shape)
    x = F.max_pool2d(F.relu(F.conv2d(x, p["conv1.weight"], p["conv1.bias"], padding=1)), 2)
    x = F.max_pool2d(F.relu(F.conv2d(x, p["conv2.weight"], p["conv2.bias"], padding=1)), 2)
    return F.linear(x.reshape(n, -1), p["fc.weight"], p["fc.bias"])


def _check_batch(spec: ModelSpec, batch: Batch) -> Tuple[torch.Tensor, torch.Tensor]:
    inputs, labels = batch
    inputs = np.array(inputs, dtype=np.float64)
    labels = np.array(labels, dtype=np.int64).reshape(-1)
    if labels.size == 0:
        raise EmptyInputError("Empty batch")
    if inputs.shape[0] != labels.size:
        raise DimensionError(f"Batch has {inputs.shape[0]} inputs but {labels.size} labels")
    if inputs[0].size != spec.input_size:
        raise DimensionError(f"Input size {inputs[0].size} does not match model input {spec.input_size}")
    if labels.min() < 0 or labels.max() >= spec.classes:
        raise LabelRangeError(f"Labels must lie in [0, {spec.classes})")
    return torch.from_numpy(inputs), torch.from_numpy(labels)


def _loss_and_grad_at(spec: ModelSpec, layout: LayerLayout, point: np.ndarray, batch: Batch) -> Tuple[float, np.ndarray]:
    x, y = _check_batch(spec, batch)
    flat = torch.tensor(point, dtype=torch.float64, requires_grad=True)
    loss = F.cross_entropy(_forward(spec, layout, flat, x), y)
    loss.backward()
    value = float(loss.item())
    if not isfinite(value):
        raise NonFiniteError(f"Loss is not finite: {value}")
    return value, flat.grad.detach().numpy().copy()


def loss_and_grad(model: Model, batch: Batch) -> Tuple[float, ParamVector]:
    """
    Mean softmax cross-entropy and its exact gradient

    Args:
        model: Model to evaluate
        batch: (inputs, labels) with inputs shaped (n, ...) and labels in [0, C)

    Returns:
        (loss, gradient) with the gradient carrying the model layout
    """
    loss, grad = _loss_and_grad_at(model.spec, model.layout, model.params.data, batch)
    return loss, model.params.with_data(grad)


def grad_at_masked(model: Model, c: Union[np.ndarray, "SparseMask"], batch: Batch) -> ParamVector:
    """
    Gradient of the loss evaluated at c * theta, taken w.r.t. the masked parameters.

    The output is not zeroed at masked-out coordinates.
    """
    bits = getattr(c, "bits", c)
    bits = np.asarray(bits, dtype=np.float64).reshape(-1)
    if bits.size != model.dim:
        raise DimensionError(f"Mask dimension {bits.size} does not match model dimension {model.dim}")
    _, grad = _loss_and_grad_at(model.spec, model.layout, bits * model.params.data, batch)
    return model.params.with_data(grad)


def apply_update(model: Model, direction: ParamVector, lr: float) -> Model:
    """params <- params - lr * direction"""
    if lr < 0:
        raise InvalidParameterError(f"Learning rate must be >= 0, got {lr}")
    if direction.dim != model.dim:
        raise DimensionError(f"Direction dimension {direction.dim} does not match model {model.dim}")
    return model.with_params(model.params.data - lr * direction.data)


def predict_logits(model: Model, inputs: np.ndarray) -> np.ndarray:
    flat = torch.from_numpy(np.array(model.params.data))
    outputs = []
    with torch.no_grad():
        for start in range(0, inputs.shape[0], ACCURACY_CHUNK):
            chunk = torch.from_numpy(np.array(inputs[start:start + ACCURACY_CHUNK], dtype=np.float64))
            outputs.append(_forward(model.spec, model.layout, flat, chunk).numpy())
    return np.concatenate(outputs, axis=0)


def accuracy(model: Model, dataset) -> float:
    """
    Fraction of samples whose argmax logit equals the label

    Ties resolve to the lowest class index (numpy argmax).
    """
    if len(dataset) == 0:
        raise EmptyInputError("Accuracy of an empty dataset")
    predictions = np.argmax(predict_logits(model, dataset.inputs), axis=1)
    return float(np.mean(predictions == dataset.labels))
