"""Layer objects holding parameters, gradients and the forward cache."""

from __future__ import annotations

import math

import numpy as np

from . import functional as F


class Module:
    """Base class: owns ``params``/``grads``/``buffers`` and child modules.

    ``forward`` caches what ``backward`` needs, so a module handles one
    forward/backward pair at a time.
    """

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.training = True

    def children(self):
        return []

    def named_parameters(self, prefix=""):
        for name, p in self.params.items():
            yield prefix + name, p
        for child_name, child in self.children():
            yield from child.named_parameters(f"{prefix}{child_name}.")

    def named_grads(self, prefix=""):
        for name, g in self.grads.items():
            yield prefix + name, g
        for child_name, child in self.children():
            yield from child.named_grads(f"{prefix}{child_name}.")

    def named_buffers(self, prefix=""):
        for name, b in self.buffers.items():
            yield prefix + name, b
        for child_name, child in self.children():
            yield from child.named_buffers(f"{prefix}{child_name}.")

    def state_dict(self) -> dict[str, np.ndarray]:
        state = dict(self.named_parameters())
        state.update(self.named_buffers())
        return state

    def train(self, mode=True):
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0)
        for _, child in self.children():
            child.zero_grad()

    def astype(self, dtype):
        for store in (self.params, self.grads, self.buffers):
            for k in store:
                store[k] = store[k].astype(dtype)
        for _, child in self.children():
            child.astype(dtype)
        return self

    def _add_param(self, name, value):
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)

    def __call__(self, x):
        return self.forward(x)


def kaiming_uniform(rng, shape, fan_in, dtype=np.float32):
    """He-uniform init for ReLU networks: U(-b, b) with b = sqrt(6 / fan_in)."""
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv2d(Module):
    def __init__(self, in_ch, out_ch, k, stride=1, pad=0, bias=False, rng=None):
        super().__init__()
        rng = np.random.default_rng() if rng is None else rng
        self.in_ch, self.out_ch, self.k, self.stride, self.pad = in_ch, out_ch, k, stride, pad
        self._add_param("weight", kaiming_uniform(rng, (out_ch, in_ch, k, k), in_ch * k * k))
        if bias:
            self._add_param("bias", np.zeros(out_ch, dtype=np.float32))

    def forward(self, x):
        out, self._cache = F.conv2d_forward(x, self.params["weight"], self.params.get("bias"),
                                            self.stride, self.pad)
        return out

    def backward(self, dout):
        dx, dw, db = F.conv2d_backward(dout, self._cache)
        self.grads["weight"] += dw
        if db is not None:
            self.grads["bias"] += db
        self._cache = None
        return dx

    def describe(self):
        return {"type": "conv2d", "in": self.in_ch, "out": self.out_ch, "k": self.k,
                "stride": self.stride, "pad": self.pad}


class BatchNorm2d(Module):
    def __init__(self, channels, eps=1e-5, momentum=0.1):
        super().__init__()
        self.channels, self.eps, self.momentum = channels, eps, momentum
        self._add_param("weight", np.ones(channels, dtype=np.float32))
        self._add_param("bias", np.zeros(channels, dtype=np.float32))
        self.buffers["running_mean"] = np.zeros(channels, dtype=np.float32)
        self.buffers["running_var"] = np.ones(channels, dtype=np.float32)

    def forward(self, x):
        out, self._cache = F.batchnorm_forward(
            x, self.params["weight"], self.params["bias"],
            self.buffers["running_mean"], self.buffers["running_var"],
            self.training, self.eps, self.momentum)
        return out

    def backward(self, dout):
        dx, dgamma, dbeta = F.batchnorm_backward(dout, self._cache)
        self.grads["weight"] += dgamma
        self.grads["bias"] += dbeta
        self._cache = None
        return dx

    def describe(self):
        return {"type": "batchnorm2d", "ch": self.channels, "eps": self.eps,
                "momentum": self.momentum}


class ReLU(Module):
    def forward(self, x):
        out, self._mask = F.relu_forward(x)
        return out

    def backward(self, dout):
        return F.relu_backward(dout, self._mask)

    def describe(self):
        return {"type": "relu"}


class MaxPool2d(Module):
    def __init__(self, k=3, stride=2, pad=1):
        super().__init__()
        self.k, self.stride, self.pad = k, stride, pad

    def forward(self, x):
        out, self._cache = F.maxpool_forward(x, self.k, self.stride, self.pad)
        return out

    def backward(self, dout):
        return F.maxpool_backward(dout, self._cache)

    def describe(self):
        return {"type": "maxpool", "k": self.k, "stride": self.stride, "pad": self.pad}


class GlobalAvgPool(Module):
    def forward(self, x):
        out, self._shape = F.global_avg_pool_forward(x)
        return out

    def backward(self, dout):
        return F.global_avg_pool_backward(dout, self._shape)

    def describe(self):
        return {"type": "global_avg_pool"}


class Linear(Module):
    """Fully connected layer; ``weight`` has shape (in_features, out_features)."""

    def __init__(self, in_features, out_features, rng=None):
        super().__init__()
        rng = np.random.default_rng() if rng is None else rng
        self.in_features, self.out_features = in_features, out_features
        self._add_param("weight", kaiming_uniform(rng, (in_features, out_features), in_features))
        self._add_param("bias", np.zeros(out_features, dtype=np.float32))

    def forward(self, x):
        out, self._x = F.linear_forward(x, self.params["weight"], self.params["bias"])
        return out

    def backward(self, dout):
        dx, dw, db = F.linear_backward(dout, self._x, self.params["weight"])
        self.grads["weight"] += dw
        self.grads["bias"] += db
        self._x = None
        return dx

    def describe(self):
        return {"type": "linear", "in": self.in_features, "out": self.out_features}


class BasicBlock(Module):
    """Two 3x3 conv/BN pairs plus a shortcut (1x1 conv + BN when shapes change)."""

    def __init__(self, in_ch, out_ch, stride=1, rng=None):
        super().__init__()
        self.conv1 = Conv2d(in_ch, out_ch, 3, stride, 1, rng=rng)
        self.bn1 = BatchNorm2d(out_ch)
        self.relu1 = ReLU()
        self.conv2 = Conv2d(out_ch, out_ch, 3, 1, 1, rng=rng)
        self.bn2 = BatchNorm2d(out_ch)
        self.relu2 = ReLU()
        if stride != 1 or in_ch != out_ch:
            self.downsample = [Conv2d(in_ch, out_ch, 1, stride, 0, rng=rng), BatchNorm2d(out_ch)]
        else:
            self.downsample = None

    def children(self):
        kids = [("conv1", self.conv1), ("bn1", self.bn1), ("conv2", self.conv2), ("bn2", self.bn2)]
        if self.downsample is not None:
            kids += [("downsample.0", self.downsample[0]), ("downsample.1", self.downsample[1])]
        return kids

    def forward(self, x):
        out = self.relu1(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        shortcut = x
        if self.downsample is not None:
            shortcut = self.downsample[1](self.downsample[0](x))
        return self.relu2(out + shortcut)

    def backward(self, dout):
        d = self.relu2.backward(dout)
        main = self.conv2.backward(self.bn2.backward(d))
        dx = self.conv1.backward(self.bn1.backward(self.relu1.backward(main)))
        if self.downsample is not None:
            dx += self.downsample[0].backward(self.downsample[1].backward(d))
        else:
            dx += d
        return dx

    def describe(self):
        return {"type": "residual_block", "in": self.conv1.in_ch, "out": self.conv1.out_ch,
                "stride": self.conv1.stride, "downsample": self.downsample is not None}
