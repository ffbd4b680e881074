# Unless explicitly stated otherwise all files in this repository are licensed
# under the Apache License 2.0.

"""GRU sequence networks and the eight network roles of the generator
framework.

Every network is a stack of GRU layers followed by a per-timestep dense map.
Parameters are plain float64 arrays keyed by name (``gru0.W_z``,
``dense.W``, ...). A forward pass reads them as constants unless a mapping of
graph leaves is given, which is how the training loop differentiates through
a network without copying it.
"""
import typing

import numpy as np

from .numkit import Rng
from .numkit import ShapeError
from .numkit import Tensor
from .numkit import as_tensor
from .numkit import stack_time


if typing.TYPE_CHECKING:
    from typing import Dict  # noqa: F401
    from typing import Iterator  # noqa: F401
    from typing import Optional  # noqa: F401
    from typing import Tuple  # noqa: F401


DEFAULT_HIDDEN_DIM = 24
DEFAULT_NUM_LAYERS = 3
DEFAULT_TIME_STRIDE = 2

SIGMOID = "sigmoid"
LINEAR = "linear"

LATENT_ENCODER = "latent_encoder"
LATENT_DECODER = "latent_decoder"
LOSSFN_ENCODER = "lossfn_encoder"
LOSSFN_DECODER = "lossfn_decoder"
GENERATOR = "generator"
SUPERVISOR = "supervisor"
LATENT_DISCRIMINATOR = "latent_discriminator"
FEATURE_DISCRIMINATOR = "feature_discriminator"

ROLES = (
    LATENT_ENCODER,
    LATENT_DECODER,
    LOSSFN_ENCODER,
    LOSSFN_DECODER,
    GENERATOR,
    SUPERVISOR,
    LATENT_DISCRIMINATOR,
    FEATURE_DISCRIMINATOR,
)

_GATES = ("z", "r", "h")


def default_latent_dim(n_features):
    # type: (int) -> int
    return max(1, n_features // 2)


class NetworkSpec(object):
    """The shape of one network.

    Args:
        role (str): one of ROLES, or a free-form name for auxiliary networks
        input_dim (int): features per input timestep
        hidden_dim (int): GRU state size
        num_layers (int): number of stacked GRU layers
        output_dim (int): features per output timestep
        activation (str): "sigmoid" or "linear"
        time_stride (int): for encoders, emit one output every ``time_stride``
            steps; for decoders, repeat every input step ``time_stride`` times
            before the first GRU layer
        upsample (bool): whether ``time_stride`` repeats the input (decoder)
            rather than subsampling the output (encoder)
    """

    def __init__(
        self,
        role,
        input_dim,
        hidden_dim,
        num_layers,
        output_dim,
        activation=SIGMOID,
        time_stride=1,
        upsample=False,
    ):
        # type: (str, int, int, int, int, str, int, bool) -> None
        self.role = role
        self.input_dim = int(input_dim)
        self.hidden_dim = int(hidden_dim)
        self.num_layers = int(num_layers)
        self.output_dim = int(output_dim)
        self.activation = activation
        self.time_stride = int(time_stride)
        self.upsample = upsample
        self.validate()

    def __repr__(self):
        # type: () -> str
        return (
            "NetworkSpec(role=%r, input_dim=%r, hidden_dim=%r, num_layers=%r, "
            "output_dim=%r, activation=%r, time_stride=%r, upsample=%r)"
        ) % (
            self.role,
            self.input_dim,
            self.hidden_dim,
            self.num_layers,
            self.output_dim,
            self.activation,
            self.time_stride,
            self.upsample,
        )

    def validate(self):
        # type: () -> None
        for field in ("input_dim", "hidden_dim", "num_layers", "output_dim", "time_stride"):
            if getattr(self, field) < 1:
                raise ValueError(
                    "%s of network %r must be positive, got %r"
                    % (field, self.role, getattr(self, field))
                )
        if self.activation not in (SIGMOID, LINEAR):
            raise ValueError("Unknown activation %r" % self.activation)

    def param_shapes(self):
        # type: () -> Iterator[Tuple[str, Tuple[int, ...]]]
        hidden = self.hidden_dim
        for layer in range(self.num_layers):
            fan_in = self.input_dim if layer == 0 else hidden
            for gate in _GATES:
                yield "gru%d.W_%s" % (layer, gate), (fan_in, hidden)
            for gate in _GATES:
                yield "gru%d.U_%s" % (layer, gate), (hidden, hidden)
            for gate in _GATES:
                yield "gru%d.b_%s" % (layer, gate), (hidden,)
        yield "dense.W", (hidden, self.output_dim)
        yield "dense.b", (self.output_dim,)


def init_network(spec, rng):
    # type: (NetworkSpec, Rng) -> Dict[str, np.ndarray]
    """Draw weights uniformly in [-k, k] with k = 1/sqrt(hidden_dim); biases are zero."""
    spec.validate()
    bound = 1.0 / np.sqrt(spec.hidden_dim)
    params = {}
    for name, shape in spec.param_shapes():
        if ".b" in name:
            params[name] = np.zeros(shape)
        else:
            params[name] = rng.uniform(-bound, bound, shape)
    return params


def _linear(inputs, weight, bias):
    # type: (Tensor, Tensor, Tensor) -> Tensor
    out = inputs @ weight
    return out + bias.broadcast_to(out.shape)


def gru_forward(params, seq, h0=None, prefix="gru0."):
    # type: (Dict[str, Tensor], Tensor, Optional[Tensor], str) -> Tensor
    """Run one GRU layer over an (N, T, D) sequence and return (N, T, H).

    z_t = sigmoid(W_z x_t + U_z h_{t-1} + b_z)
    r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)
    c_t = tanh(W_h x_t + U_h (r_t * h_{t-1}) + b_h)
    h_t = (1 - z_t) * h_{t-1} + z_t * c_t
    """
    seq = as_tensor(seq)
    w_z = as_tensor(params[prefix + "W_z"])
    if seq.ndim != 3 or seq.shape[2] != w_z.shape[0]:
        raise ShapeError("gru", [seq.shape, w_z.shape])
    n, steps = seq.shape[0], seq.shape[1]
    hidden = w_z.shape[1]

    projected = {
        gate: _linear(seq, as_tensor(params[prefix + "W_" + gate]), as_tensor(params[prefix + "b_" + gate]))
        for gate in _GATES
    }
    u_z = as_tensor(params[prefix + "U_z"])
    u_r = as_tensor(params[prefix + "U_r"])
    u_h = as_tensor(params[prefix + "U_h"])

    h = Tensor(np.zeros((n, hidden))) if h0 is None else as_tensor(h0)
    if h.shape != (n, hidden):
        raise ShapeError("gru", [h.shape, (n, hidden)], "initial state")

    states = []
    for t in range(steps):
        z = (projected["z"].select_time(t) + h @ u_z).sigmoid()
        r = (projected["r"].select_time(t) + h @ u_r).sigmoid()
        candidate = (projected["h"].select_time(t) + (r * h) @ u_h).tanh()
        h = h + z * (candidate - h)
        states.append(h)
    return stack_time(states)


class Network(object):
    """A GRU stack with a per-timestep dense output layer.

    Args:
        spec (NetworkSpec): the network's shape
        params (dict): name -> array, as returned by ``init_network``
    """

    def __init__(self, spec, params):
        # type: (NetworkSpec, Dict[str, np.ndarray]) -> None
        self.spec = spec
        self.params = params
        for name, shape in spec.param_shapes():
            if name not in params:
                raise ValueError("Network %r is missing parameter %r" % (spec.role, name))
            if params[name].shape != shape:
                raise ValueError(
                    "Parameter %r of network %r has shape %r, expected %r"
                    % (name, spec.role, params[name].shape, shape)
                )

    def __repr__(self):
        # type: () -> str
        return "Network(%r)" % self.spec

    @classmethod
    def create(cls, spec, rng):
        # type: (NetworkSpec, Rng) -> Network
        return cls(spec, init_network(spec, rng))

    def __call__(self, inputs, weights=None):
        # type: (Tensor, Optional[Dict[str, Tensor]]) -> Tensor
        return network_forward(self, inputs, weights)

    def output_steps(self, steps):
        # type: (int) -> int
        """Number of output timesteps for ``steps`` input timesteps."""
        if self.spec.time_stride == 1:
            return steps
        if self.spec.upsample:
            return steps * self.spec.time_stride
        return steps // self.spec.time_stride

    def snapshot(self):
        # type: () -> Dict[str, np.ndarray]
        return {name: value.copy() for name, value in self.params.items()}

    def restore(self, params):
        # type: (Dict[str, np.ndarray]) -> None
        for name, value in params.items():
            self.params[name][...] = value


def network_forward(network, inputs, weights=None):
    # type: (Network, Tensor, Optional[Dict[str, Tensor]]) -> Tensor
    """Map an (N, T, input_dim) batch through ``network``.

    Encoders with ``time_stride > 1`` emit one output per ``time_stride`` input
    steps, at the steps whose 1-based index is a multiple of the stride.
    Decoders with ``time_stride > 1`` repeat every input step first.
    """
    spec = network.spec
    inputs = as_tensor(inputs)
    if inputs.ndim != 3 or inputs.shape[2] != spec.input_dim:
        raise ShapeError(spec.role, [inputs.shape, (None, None, spec.input_dim)])
    if spec.time_stride > 1 and not spec.upsample and inputs.shape[1] % spec.time_stride:
        raise ValueError(
            "time_stride %r of %r does not divide sequence length %r"
            % (spec.time_stride, spec.role, inputs.shape[1])
        )
    params = weights if weights is not None else network.params

    hidden = inputs
    if spec.time_stride > 1 and spec.upsample:
        hidden = hidden.repeat_time(spec.time_stride)
    for layer in range(spec.num_layers):
        hidden = gru_forward(params, hidden, prefix="gru%d." % layer)
    if spec.time_stride > 1 and not spec.upsample:
        hidden = hidden.slice_time(start=spec.time_stride - 1, step=spec.time_stride)

    out = _linear(hidden, as_tensor(params["dense.W"]), as_tensor(params["dense.b"]))
    if spec.activation == SIGMOID:
        out = out.sigmoid()
    return out


class NetworkBundle(object):
    """The eight networks of the framework.

    Args:
        networks (dict): role -> Network, one entry per role in ROLES
    """

    def __init__(self, networks):
        # type: (Dict[str, Network]) -> None
        missing = [role for role in ROLES if role not in networks]
        if missing:
            raise ValueError("Missing networks %r" % missing)
        self.networks = networks
        self.check()

    def __getitem__(self, role):
        # type: (str) -> Network
        return self.networks[role]

    def __iter__(self):
        # type: () -> Iterator[str]
        return iter(ROLES)

    @property
    def n_features(self):
        # type: () -> int
        return self.networks[LATENT_ENCODER].spec.input_dim

    @property
    def latent_dim(self):
        # type: () -> int
        return self.networks[LATENT_ENCODER].spec.output_dim

    @property
    def noise_dim(self):
        # type: () -> int
        return self.networks[GENERATOR].spec.input_dim

    @classmethod
    def specs(
        cls,
        n_features,
        latent_dim=None,
        noise_dim=None,
        hidden_dim=DEFAULT_HIDDEN_DIM,
        num_layers=DEFAULT_NUM_LAYERS,
        time_stride=DEFAULT_TIME_STRIDE,
    ):
        # type: (int, Optional[int], Optional[int], int, int, int) -> Dict[str, NetworkSpec]
        if latent_dim is None:
            latent_dim = default_latent_dim(n_features)
        if noise_dim is None:
            noise_dim = latent_dim
        f, k, h, n = n_features, latent_dim, hidden_dim, num_layers
        return {
            LATENT_ENCODER: NetworkSpec(LATENT_ENCODER, f, h, n, k),
            LATENT_DECODER: NetworkSpec(LATENT_DECODER, k, h, n, f),
            LOSSFN_ENCODER: NetworkSpec(LOSSFN_ENCODER, f, h, n, f, time_stride=time_stride),
            LOSSFN_DECODER: NetworkSpec(
                LOSSFN_DECODER, f, h, n, f, time_stride=time_stride, upsample=True
            ),
            GENERATOR: NetworkSpec(GENERATOR, noise_dim, h, n, k),
            SUPERVISOR: NetworkSpec(SUPERVISOR, k, h, n, k),
            LATENT_DISCRIMINATOR: NetworkSpec(LATENT_DISCRIMINATOR, k, h, n, 1, activation=LINEAR),
            FEATURE_DISCRIMINATOR: NetworkSpec(FEATURE_DISCRIMINATOR, f, h, n, 1, activation=LINEAR),
        }

    @classmethod
    def create(cls, specs, rng):
        # type: (Dict[str, NetworkSpec], Rng) -> NetworkBundle
        """Initialize every role from its own child stream of ``rng``."""
        return cls(
            {role: Network.create(specs[role], rng.child(i)) for i, role in enumerate(ROLES)}
        )

    def check(self):
        # type: () -> None
        """Enforce the dimension contracts between roles."""
        s = {role: net.spec for role, net in self.networks.items()}
        latent = s[LATENT_ENCODER].output_dim
        features = s[LATENT_ENCODER].input_dim
        latent_dims = [
            s[LATENT_DECODER].input_dim,
            s[GENERATOR].output_dim,
            s[SUPERVISOR].input_dim,
            s[SUPERVISOR].output_dim,
            s[LATENT_DISCRIMINATOR].input_dim,
        ]
        feature_dims = [
            s[LATENT_DECODER].output_dim,
            s[LOSSFN_ENCODER].input_dim,
            s[FEATURE_DISCRIMINATOR].input_dim,
        ]
        if any(d != latent for d in latent_dims):
            raise ValueError("Latent dimensions disagree: %r vs %r" % (latent, latent_dims))
        if any(d != features for d in feature_dims):
            raise ValueError("Feature dimensions disagree: %r vs %r" % (features, feature_dims))
        for role in (LATENT_DISCRIMINATOR, FEATURE_DISCRIMINATOR):
            if s[role].output_dim != 1 or s[role].activation != LINEAR:
                raise ValueError("Discriminator %r must emit one linear score per step" % role)

    def to_arrays(self):
        # type: () -> Dict[str, np.ndarray]
        """Flatten all parameters into "role/name" -> array."""
        arrays = {}
        for role in ROLES:
            for name, value in self.networks[role].params.items():
                arrays["%s/%s" % (role, name)] = value
        return arrays

    def load_arrays(self, arrays):
        # type: (Dict[str, np.ndarray]) -> None
        """Copy "role/name" arrays into the networks, checking names and shapes."""
        expected = self.to_arrays()
        if set(arrays) != set(expected):
            raise ValueError(
                "Parameter names differ: missing %r, unexpected %r"
                % (sorted(set(expected) - set(arrays)), sorted(set(arrays) - set(expected)))
            )
        for name, value in arrays.items():
            if value.shape != expected[name].shape:
                raise ValueError(
                    "Parameter %r has shape %r, expected %r" % (name, value.shape, expected[name].shape)
                )
            expected[name][...] = value

    def snapshot(self):
        # type: () -> Dict[str, np.ndarray]
        return {name: value.copy() for name, value in self.to_arrays().items()}
