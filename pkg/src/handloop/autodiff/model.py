"""Layer specifications, sequential models, initialisation and the HPNN format."""
import io
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import FormatError
from . import ops
from .tensor import Tensor, as_tensor

LAYER_KINDS = ("conv", "fc", "maxpool", "unpool", "relu", "linear", "reshape", "concat")
PARAM_KINDS = ("conv", "fc")

MAGIC = b"HPNN"
VERSION = 1


@dataclass
class LayerSpec:
    kind: str
    name: str = ""
    args: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        a = self.args
        if self.kind == "conv":
            if a.get("stride", 1) < 1:
                raise ValueError("conv stride must be >= 1")
            a.setdefault("stride", 1)
            a.setdefault("pad", 0)
        elif self.kind == "maxpool" and a["window"] < 2:
            raise ValueError("maxpool window must be >= 2")
        elif self.kind == "unpool" and a["factor"] < 2:
            raise ValueError("unpool factor must be >= 2")
        if self.kind in PARAM_KINDS and not self.name:
            raise ValueError(f"{self.kind} layer needs a name")

    def param_shapes(self):
        a = self.args
        if self.kind == "conv":
            return {f"{self.name}.weight": (a["out"], a["in"], a["size"], a["size"]),
                    f"{self.name}.bias": (a["out"],)}
        if self.kind == "fc":
            return {f"{self.name}.weight": (a["out"], a["in"]), f"{self.name}.bias": (a["out"],)}
        return {}

    def output_shape(self, shape):
        """Per-sample output shape for a per-sample input ``shape``."""
        a = self.args
        if self.kind == "conv":
            c, h, w = shape
            if c != a["in"]:
                raise ValueError(f"layer {self.name}: expects {a['in']} channels, got {c}")
            k, s, p = a["size"], a["stride"], a["pad"]
            if h + 2 * p < k or w + 2 * p < k:
                raise ValueError(f"layer {self.name}: {k}x{k} filter exceeds {h}x{w} input")
            return (a["out"], (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1)
        if self.kind == "fc":
            if shape != (a["in"],):
                raise ValueError(f"layer {self.name}: expects ({a['in']},) input, got {shape}")
            return (a["out"],)
        if self.kind == "maxpool":
            c, h, w = shape
            k = a["window"]
            if h % k or w % k:
                raise ValueError(f"maxpool: {h}x{w} not divisible by {k}")
            return (c, h // k, w // k)
        if self.kind == "unpool":
            c, h, w = shape
            return (c, h * a["factor"], w * a["factor"])
        if self.kind == "reshape":
            target = tuple(a["shape"])
            size = int(np.prod(shape))
            if -1 in target:
                known = int(np.prod([t for t in target if t != -1]))
                target = tuple(size // known if t == -1 else t for t in target)
            if int(np.prod(target)) != size:
                raise ValueError(f"reshape: cannot view {shape} as {tuple(a['shape'])}")
            return target
        return shape

    def to_text(self):
        parts = [self.kind]
        if self.name:
            parts.append(f"name={self.name}")
        for key in sorted(self.args):
            value = self.args[key]
            if isinstance(value, (tuple, list)):
                value = ",".join(str(v) for v in value)
            parts.append(f"{key}={value}")
        return " ".join(parts)

    @classmethod
    def from_text(cls, line):
        kind, *rest = line.split()
        name, args = "", {}
        for item in rest:
            key, _, value = item.partition("=")
            if key == "name":
                name = value
            elif key == "shape":
                args[key] = tuple(int(v) for v in value.split(","))
            else:
                args[key] = int(value)
        return cls(kind, name, args)


def glorot_bound(spec):
    a = spec.args
    if spec.kind == "conv":
        area = a["size"] * a["size"]
        return np.sqrt(6.0 / (a["in"] * area + a["out"] * area))
    return np.sqrt(6.0 / (a["in"] + a["out"]))


def init_params(spec, seed):
    """Weights uniform in +-sqrt(6/(fan_in+fan_out)), zero biases.

    ``seed`` is an int or a ``numpy.random.Generator``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params = {}
    if spec.kind not in PARAM_KINDS:
        return params
    bound = glorot_bound(spec)
    for pname, shape in spec.param_shapes().items():
        if pname.endswith(".weight"):
            params[pname] = rng.uniform(-bound, bound, size=shape)
        else:
            params[pname] = np.zeros(shape)
    return params


class Model:
    """A chain of layers with named parameters.

    A ``concat`` layer splits the chain into a shared path, applied to each of
    two inputs with the same weights, and a head fed with both paths'
    flattened features (first input first).
    """

    def __init__(self, kind, layers, input_shape, meta=None, seed=0, params=None):
        self.kind = kind
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.meta = dict(meta or {})
        self.output_shape = self._infer_shapes()
        self.params = {}
        rng = np.random.default_rng(seed)
        for spec in self.layers:
            for pname, value in init_params(spec, rng).items():
                self.params[pname] = Tensor(value, name=pname)
        if params is not None:
            self.load_arrays(params)

    @property
    def siamese(self):
        return any(spec.kind == "concat" for spec in self.layers)

    def _split(self):
        for k, spec in enumerate(self.layers):
            if spec.kind == "concat":
                return self.layers[:k], self.layers[k + 1:]
        return self.layers, []

    def _infer_shapes(self):
        path, head = self._split()
        shape = self.input_shape
        for spec in path:
            shape = spec.output_shape(shape)
        if self.siamese:
            self.path_shape = shape
            shape = (2 * int(np.prod(shape)),)
            for spec in head:
                shape = spec.output_shape(shape)
        return shape

    def parameters(self):
        return list(self.params.values())

    def arrays(self):
        return {k: v.data for k, v in self.params.items()}

    def load_arrays(self, arrays):
        for name, t in self.params.items():
            if name not in arrays:
                raise ValueError(f"missing parameter {name}")
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != t.data.shape:
                raise ValueError(f"parameter {name}: shape {value.shape} != {t.data.shape}")
            t.data = value.copy()

    def num_params(self):
        return sum(t.data.size for t in self.params.values())

    def set_trainable(self, flag):
        for t in self.params.values():
            t.requires_grad = flag
            t.grad = None

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def _run(self, layers, x, fuse):
        k = 0
        while k < len(layers):
            spec = layers[k]
            nxt = layers[k + 1] if k + 1 < len(layers) else None
            if (fuse and spec.kind == "unpool" and nxt is not None and nxt.kind == "conv"
                    and nxt.args["stride"] == 1 and nxt.args["size"] % 2 == 1
                    and nxt.args["pad"] == (nxt.args["size"] - 1) // 2):
                x = ops.unpool_conv2d(x, self.params[f"{nxt.name}.weight"],
                                      self.params[f"{nxt.name}.bias"], spec.args["factor"])
                k += 2
                continue
            x = self._apply(spec, x)
            k += 1
        return x

    def _apply(self, spec, x):
        a = spec.args
        if spec.kind == "conv":
            return ops.conv2d(x, self.params[f"{spec.name}.weight"], self.params[f"{spec.name}.bias"],
                              stride=a["stride"], pad=a["pad"])
        if spec.kind == "fc":
            return ops.fully_connected(x, self.params[f"{spec.name}.weight"],
                                       self.params[f"{spec.name}.bias"])
        if spec.kind == "relu":
            return ops.relu(x)
        if spec.kind == "linear":
            return ops.identity(x)
        if spec.kind == "maxpool":
            return ops.max_pool2d(x, a["window"])[0]
        if spec.kind == "unpool":
            return ops.unpool2d(x, a["factor"])
        if spec.kind == "reshape":
            return ops.reshape(x, (x.shape[0],) + spec.output_shape(x.shape[1:]))
        raise ValueError(f"cannot apply layer kind {spec.kind!r} here")

    def _batched(self, x):
        x = as_tensor(x)
        if x.shape == self.input_shape:
            return ops.reshape(x, (1,) + self.input_shape), True
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"{self.kind}: input shape {x.shape} does not match "
                             f"{self.input_shape}")
        return x, False

    def path_features(self, x, fuse=True):
        """Output of the shared path for a batch (siamese models only)."""
        path, _ = self._split()
        x, single = self._batched(x)
        out = self._run(path, x, fuse)
        return ops.reshape(out, out.shape[1:]) if single else out

    def forward(self, *inputs, fuse=True):
        path, head = self._split()
        if self.siamese:
            if len(inputs) != 2:
                raise ValueError(f"{self.kind} expects two inputs")
            a, single = self._batched(inputs[0])
            b, _ = self._batched(inputs[1])
            if a.shape != b.shape:
                raise ValueError(f"{self.kind}: input shapes differ {a.shape} vs {b.shape}")
            n = a.shape[0]
            # separate passes keep the two paths bit-identical on equal inputs
            fa, fb = self._run(path, a, fuse), self._run(path, b, fuse)
            x = ops.concat([ops.reshape(fa, (n, -1)), ops.reshape(fb, (n, -1))], axis=1)
            out = self._run(head, x, fuse)
        else:
            if len(inputs) != 1:
                raise ValueError(f"{self.kind} expects one input")
            x, single = self._batched(inputs[0])
            out = self._run(path, x, fuse)
        return ops.reshape(out, out.shape[1:]) if single else out

    __call__ = forward

    def descriptor(self):
        lines = [f"kind {self.kind}",
                 "input " + ",".join(str(v) for v in self.input_shape)]
        for key in sorted(self.meta):
            lines.append(f"meta {key}={self.meta[key]}")
        lines.extend("layer " + spec.to_text() for spec in self.layers)
        return "\n".join(lines) + "\n"

    def copy(self):
        return Model(self.kind, [LayerSpec(s.kind, s.name, dict(s.args)) for s in self.layers],
                     self.input_shape, self.meta, params=self.arrays())


def _meta_value(text):
    try:
        return int(text)
    except ValueError:
        try:
            return float(text)
        except ValueError:
            return text


def parse_descriptor(text):
    kind, input_shape, meta, layers = None, None, {}, []
    for line in text.splitlines():
        if not line.strip():
            continue
        head, _, rest = line.partition(" ")
        if head == "kind":
            kind = rest.strip()
        elif head == "input":
            input_shape = tuple(int(v) for v in rest.split(","))
        elif head == "meta":
            key, _, value = rest.partition("=")
            meta[key] = _meta_value(value)
        elif head == "layer":
            layers.append(LayerSpec.from_text(rest))
        else:
            raise FormatError(f"bad descriptor line {line!r}")
    if kind is None or input_shape is None:
        raise FormatError("descriptor lacks kind or input shape")
    return kind, input_shape, meta, layers


def serialize(model):
    """Encode ``model`` in the HPNN byte format."""
    buf = io.BytesIO()
    desc = model.descriptor().encode("utf-8")
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    buf.write(struct.pack("<I", len(desc)))
    buf.write(desc)
    for name, t in model.params.items():
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", t.data.ndim))
        buf.write(struct.pack(f"<{t.data.ndim}I", *t.data.shape))
        buf.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, blob):
        self.blob = memoryview(blob)
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.blob):
            raise FormatError("unexpected end of stream")
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return bytes(chunk)

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def done(self):
        return self.pos >= len(self.blob)


def deserialize(blob):
    r = _Reader(blob)
    head = bytes(blob[:4])
    if len(head) < 4 and MAGIC.startswith(head):
        raise FormatError("unexpected end of stream")
    if head != MAGIC:
        raise FormatError("bad magic")
    r.take(4)
    version = r.u32()
    if version != VERSION:
        raise FormatError(f"version mismatch: file has {version}, expected {VERSION}")
    desc = r.take(r.u32()).decode("utf-8")
    kind, input_shape, meta, layers = parse_descriptor(desc)
    arrays = {}
    while not r.done():
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        shape = struct.unpack(f"<{rank}I", r.take(4 * rank))
        count = int(np.prod(shape)) if rank else 1
        arrays[name] = np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)
    model = Model(kind, layers, input_shape, meta)
    if set(arrays) < set(model.params):
        # stream stopped cleanly between two parameters
        missing = sorted(set(model.params) - set(arrays))
        raise FormatError(f"unexpected end of stream (missing {missing})")
    if set(arrays) != set(model.params):
        missing = sorted(set(model.params) - set(arrays))
        raise FormatError(f"parameter set does not match descriptor (missing {missing})")
    try:
        model.load_arrays(arrays)
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    return model


def save_model(model, path):
    with open(path, "wb") as fh:
        fh.write(serialize(model))


def load_model(path):
    with open(path, "rb") as fh:
        return deserialize(fh.read())
