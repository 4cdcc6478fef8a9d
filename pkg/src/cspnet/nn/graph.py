"""Sequential model container: build-time shape checks, forward/backward,
parameter freezing and binary checkpoints.

A ModelGraph owns named Parameters ("<layer>.weight" etc.) plus non-learned
buffers (batchnorm running statistics). Shapes are propagated symbolically
at construction, so incompatible stacks fail before any data flows.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import BuildError, CorruptionError, FormatError, ParameterError
from ..rng import substream
from . import layers
from .layers import LayerSpec
from .loss import softmax_xent

CHECKPOINT_MAGIC = "cspnet-checkpoint v1"


@dataclass
class Parameter:
    name: str
    value: np.ndarray
    grad: np.ndarray
    trainable: bool = True
    decay_exempt: bool = False


@dataclass
class ModelGraph:
    specs: list[LayerSpec]
    input_shape: tuple  # (maps, height, width), batch excluded
    seed: int = 0
    mode: str = "train"
    layer_names: list[str] = field(init=False)
    shapes: list[tuple] = field(init=False)  # output shape per layer
    params: dict = field(init=False)
    buffers: dict = field(init=False)

    def __post_init__(self) -> None:
        if len(self.input_shape) != 3 or any(d < 1 for d in self.input_shape):
            raise BuildError(f"input shape must be 3 positive axes, "
                             f"got {self.input_shape}")
        self.input_shape = tuple(int(d) for d in self.input_shape)
        names = []
        for i, spec in enumerate(self.specs):
            name = spec.name if spec.name else f"l{i}_{spec.kind}"
            if name in names:
                raise BuildError(f"duplicate layer name {name!r}")
            names.append(name)
        self.layer_names = names

        self.shapes = []
        self.params = {}
        self.buffers = {}
        shape = self.input_shape
        for i, (name, spec) in enumerate(zip(names, self.specs)):
            shape = layers.out_shape(spec, shape)
            self.shapes.append(shape)
            rng = substream(self.seed, "init", i)
            exempt = layers.decay_exempt_names(spec)
            for local, value in layers.init_params(
                spec, self.shapes[i - 1] if i else self.input_shape, rng
            ).items():
                pname = f"{name}.{local}"
                self.params[pname] = Parameter(
                    name=pname,
                    value=value,
                    grad=np.zeros_like(value),
                    trainable=True,
                    decay_exempt=local in exempt,
                )
            for local, value in layers.init_buffers(
                spec, self.shapes[i - 1] if i else self.input_shape
            ).items():
                self.buffers[f"{name}.{local}"] = value

    @property
    def output_shape(self) -> tuple:
        return self.shapes[-1]

    def layer_params(self, index: int) -> dict:
        name = self.layer_names[index]
        prefix = f"{name}."
        return {
            pname[len(prefix):]: p.value
            for pname, p in self.params.items()
            if pname.startswith(prefix)
        }

    def layer_buffers(self, index: int) -> dict:
        prefix = f"{self.layer_names[index]}."
        return {
            bname[len(prefix):]: b
            for bname, b in self.buffers.items()
            if bname.startswith(prefix)
        }

    def parameter(self, name: str) -> Parameter:
        if name not in self.params:
            raise ParameterError(f"no parameter named {name!r}")
        return self.params[name]

    def n_parameters(self) -> int:
        return sum(p.value.size for p in self.params.values())

    def set_mode(self, mode: str) -> None:
        if mode not in ("train", "eval"):
            raise ParameterError(f"mode must be train or eval, got {mode!r}")
        self.mode = mode

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.grad.fill(0.0)


def _check_batch(graph: ModelGraph, batch: np.ndarray) -> np.ndarray:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 4 or x.shape[1:] != graph.input_shape:
        raise ParameterError(
            f"batch shape {x.shape} does not match input signature "
            f"(N, {', '.join(map(str, graph.input_shape))})"
        )
    if not np.all(np.isfinite(x)):
        raise ParameterError("batch contains non-finite values")
    return x


def _run_forward(graph: ModelGraph, x: np.ndarray, mode: str,
                 rng: np.random.Generator | None, keep_caches: bool):
    caches = []
    for i, spec in enumerate(graph.specs):
        x, cache = layers.forward(
            spec, graph.layer_params(i), graph.layer_buffers(i), x, mode, rng
        )
        caches.append(cache if keep_caches else None)
    return x, caches


def model_forward(graph: ModelGraph, batch, mode: str | None = None,
                  dropout_rng: np.random.Generator | None = None) -> np.ndarray:
    """Run the stack; returns logits (batch x K). Eval mode is deterministic;
    train mode is deterministic given the dropout stream.
    """
    x = _check_batch(graph, batch)
    mode = mode if mode is not None else graph.mode
    if mode == "train" and dropout_rng is None:
        dropout_rng = substream(graph.seed, "dropout-default")
    out, _ = _run_forward(graph, x, mode, dropout_rng, keep_caches=False)
    if out.ndim != 2:
        raise BuildError("model does not end in a flat logit layer")
    if not np.all(np.isfinite(out)):
        raise ParameterError("forward pass produced non-finite logits")
    return out


def model_backward(graph: ModelGraph, batch, labels,
                   dropout_rng: np.random.Generator | None = None) -> float:
    """Forward + loss + reverse sweep in train mode.

    Fills the grad buffers of trainable parameters (frozen ones stay
    all-zero) and returns the scalar loss.
    """
    x = _check_batch(graph, batch)
    if graph.mode != "train":
        raise ParameterError("backward requires train mode")
    if dropout_rng is None:
        dropout_rng = substream(graph.seed, "dropout-default")
    out, caches = _run_forward(graph, x, "train", dropout_rng, keep_caches=True)
    if out.ndim != 2:
        raise BuildError("model does not end in a flat logit layer")
    loss, gy = softmax_xent(out, labels)

    graph.zero_grads()
    for i in range(len(graph.specs) - 1, -1, -1):
        spec = graph.specs[i]
        name = graph.layer_names[i]
        local = {
            pn[len(name) + 1:]: p
            for pn, p in graph.params.items()
            if pn.startswith(f"{name}.")
        }
        want = any(p.trainable for p in local.values())
        gy, grads = layers.backward(
            spec, {k: p.value for k, p in local.items()}, caches[i], gy, want
        )
        for k, g in grads.items():
            if local[k].trainable:
                local[k].grad[...] = g
    return float(loss)


# ---------------------------------------------------------------------------
# checkpoints


def _spec_dict(name: str, spec: LayerSpec) -> dict:
    d = {k: v for k, v in asdict(spec).items() if v is not None}
    d["name"] = name
    for key in ("kernel", "window", "stride"):
        if key in d:
            d[key] = list(d[key])
    return d


def _spec_from_dict(d: dict) -> LayerSpec:
    d = dict(d)
    for key in ("kernel", "window", "stride"):
        if key in d:
            d[key] = tuple(d[key])
    return LayerSpec(**d)


def save_checkpoint(graph: ModelGraph, path) -> None:
    """Single binary file: text header (graph + parameter manifest), then
    64-bit little-endian payloads in manifest order (parameters, buffers).
    """
    header = {
        "input_shape": list(graph.input_shape),
        "mode": graph.mode,
        "seed": graph.seed,
        "layers": [
            _spec_dict(n, s) for n, s in zip(graph.layer_names, graph.specs)
        ],
        "parameters": [
            {
                "name": p.name,
                "shape": list(p.value.shape),
                "trainable": p.trainable,
                "decay_exempt": p.decay_exempt,
            }
            for p in graph.params.values()
        ],
        "buffers": [
            {"name": n, "shape": list(b.shape)}
            for n, b in graph.buffers.items()
        ],
    }
    blob = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {len(blob)}\n".encode())
        fh.write(blob)
        for p in graph.params.values():
            fh.write(p.value.astype("<f8").tobytes(order="C"))
        for b in graph.buffers.values():
            fh.write(b.astype("<f8").tobytes(order="C"))


def load_checkpoint(path) -> ModelGraph:
    with open(path, "rb") as fh:
        first = fh.readline().decode(errors="replace").rstrip("\n")
        if not first.startswith(CHECKPOINT_MAGIC + " "):
            raise FormatError(f"not a model checkpoint: header {first!r}")
        try:
            nbytes = int(first.rsplit(" ", 1)[1])
        except ValueError as exc:
            raise FormatError("malformed checkpoint header length") from exc
        blob = fh.read(nbytes)
        if len(blob) != nbytes:
            raise CorruptionError("checkpoint header truncated")
        try:
            header = json.loads(blob)
        except json.JSONDecodeError as exc:
            raise FormatError(f"checkpoint header is not valid JSON: {exc}") from exc

        specs = [_spec_from_dict(d) for d in header["layers"]]
        graph = ModelGraph(
            specs=specs,
            input_shape=tuple(header["input_shape"]),
            seed=int(header.get("seed", 0)),
            mode=header["mode"],
        )
        manifest_names = [e["name"] for e in header["parameters"]]
        if manifest_names != list(graph.params):
            raise CorruptionError("parameter manifest does not match the graph")
        for entry in header["parameters"]:
            p = graph.params[entry["name"]]
            shape = tuple(entry["shape"])
            if shape != p.value.shape:
                raise CorruptionError(
                    f"parameter {entry['name']} shape {shape} does not match "
                    f"the rebuilt graph's {p.value.shape}"
                )
            count = int(np.prod(shape))
            raw = fh.read(8 * count)
            if len(raw) != 8 * count:
                raise CorruptionError(f"payload truncated at {entry['name']}")
            p.value = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
            p.grad = np.zeros_like(p.value)
            p.trainable = bool(entry["trainable"])
            p.decay_exempt = bool(entry["decay_exempt"])
        for entry in header["buffers"]:
            name = entry["name"]
            if name not in graph.buffers:
                raise CorruptionError(f"unexpected buffer {name!r}")
            shape = tuple(entry["shape"])
            raw = fh.read(8 * int(np.prod(shape)))
            if len(raw) != 8 * int(np.prod(shape)):
                raise CorruptionError(f"payload truncated at buffer {name!r}")
            graph.buffers[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        if fh.read(1):
            raise CorruptionError("trailing bytes after declared payloads")
    return graph
