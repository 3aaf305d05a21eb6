"""ResNet18 and the reduced ResNet-Tiny, with transfer-learning head swap."""

from __future__ import annotations

import numpy as np

from ..errors import MissingParameter, NoFinalLinear, ShapeMismatch
from .layers import BasicBlock, BatchNorm2d, Conv2d, GlobalAvgPool, Linear, MaxPool2d, Module, ReLU

ARCHITECTURES = {
    "resnet18": {
        "stem_k": 7, "stem_stride": 2, "stem_pad": 3,
        "channels": (64, 128, 256, 512), "blocks": (2, 2, 2, 2),
        "input_size": 224,
    },
    "resnet_tiny": {
        "stem_k": 3, "stem_stride": 1, "stem_pad": 1,
        "channels": (8, 16, 32, 64), "blocks": (1, 1, 1, 1),
        "input_size": 64,
    },
}


class ResNet(Module):
    def __init__(self, arch="resnet18", num_classes=8, in_channels=3, seed=None):
        super().__init__()
        if arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {arch!r}; choose from {sorted(ARCHITECTURES)}")
        if num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {num_classes}")
        spec = ARCHITECTURES[arch]
        self.arch = arch
        self.in_channels = in_channels
        self.input_size = spec["input_size"]
        self.rng = np.random.default_rng(seed)
        width = spec["channels"][0]
        self.conv1 = Conv2d(in_channels, width, spec["stem_k"], spec["stem_stride"],
                            spec["stem_pad"], rng=self.rng)
        self.bn1 = BatchNorm2d(width)
        self.relu = ReLU()
        self.maxpool = MaxPool2d(3, 2, 1)
        self.stages = []
        in_ch = width
        for stage, (ch, n_blocks) in enumerate(zip(spec["channels"], spec["blocks"])):
            blocks = []
            for b in range(n_blocks):
                stride = 2 if stage > 0 and b == 0 else 1
                blocks.append(BasicBlock(in_ch, ch, stride, rng=self.rng))
                in_ch = ch
            self.stages.append(blocks)
        self.pool = GlobalAvgPool()
        self.fc = Linear(in_ch, num_classes, rng=self.rng)

    @property
    def num_classes(self) -> int:
        return self.fc.out_features

    @property
    def feature_width(self) -> int:
        return self.fc.in_features

    def children(self):
        kids = [("conv1", self.conv1), ("bn1", self.bn1)]
        for s, blocks in enumerate(self.stages):
            kids += [(f"layer{s + 1}.{b}", block) for b, block in enumerate(blocks)]
        if self.fc is not None:
            kids.append(("fc", self.fc))
        return kids

    def backbone_modules(self):
        return [m for name, m in self.children() if name != "fc"]

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeMismatch(f"expected N x {self.in_channels} x H x W input, got {x.shape}")
        if self.fc is None:
            raise NoFinalLinear("model has no final linear layer")
        out = self.maxpool(self.relu(self.bn1(self.conv1(x))))
        for blocks in self.stages:
            for block in blocks:
                out = block(out)
        return self.fc(self.pool(out))

    def backward(self, dlogits):
        d = self.pool.backward(self.fc.backward(dlogits))
        for blocks in reversed(self.stages):
            for block in reversed(blocks):
                d = block.backward(d)
        return self.conv1.backward(self.bn1.backward(self.relu.backward(self.maxpool.backward(d))))

    def layer_table(self) -> list[dict]:
        """Ordered layer descriptors of the graph."""
        table = [dict(name="conv1", **self.conv1.describe()),
                 dict(name="bn1", **self.bn1.describe()),
                 dict(name="relu", **self.relu.describe()),
                 dict(name="maxpool", **self.maxpool.describe())]
        for s, blocks in enumerate(self.stages):
            table += [dict(name=f"layer{s + 1}.{b}", **blk.describe()) for b, blk in enumerate(blocks)]
        table.append(dict(name="avgpool", **self.pool.describe()))
        if self.fc is not None:
            table.append(dict(name="fc", **self.fc.describe()))
        return table

    def descriptor(self) -> dict:
        return {"arch": self.arch, "num_classes": self.num_classes,
                "in_channels": self.in_channels, "input_size": self.input_size}

    def parameter_count(self) -> int:
        return sum(p.size for _, p in self.named_parameters())

    def load_state(self, state: dict[str, np.ndarray], backbone_only=False):
        """Copy tensors from ``state`` into this model after validating names and shapes."""
        own = self.state_dict()
        for name, target in own.items():
            if backbone_only and name.startswith("fc."):
                continue
            if name not in state:
                raise MissingParameter(f"checkpoint lacks parameter {name!r}")
            src = state[name]
            if src.shape != target.shape:
                raise ShapeMismatch(f"parameter {name!r}: checkpoint {src.shape} vs model {target.shape}")
            target[...] = src
        return self


def build_resnet18(num_classes=8, in_channels=3, seed=None) -> ResNet:
    return ResNet("resnet18", num_classes, in_channels, seed)


def build_resnet_tiny(num_classes=8, in_channels=3, seed=None) -> ResNet:
    return ResNet("resnet_tiny", num_classes, in_channels, seed)


def build_model(arch, num_classes=8, in_channels=3, seed=None) -> ResNet:
    return ResNet(arch, num_classes, in_channels, seed)


def replace_final_layer(model: ResNet, n: int, seed=None) -> ResNet:
    """Swap the classifier for a freshly initialized ``Linear(width, n)``.

    Every backbone tensor is left untouched. With ``seed=None`` the model's
    own generator supplies the new weights.
    """
    if getattr(model, "fc", None) is None:
        raise NoFinalLinear("model has no final linear layer to replace")
    if n < 1:
        raise ValueError(f"head size must be positive, got {n}")
    rng = model.rng if seed is None else np.random.default_rng(seed)
    dtype = model.fc.params["weight"].dtype
    model.fc = Linear(model.fc.in_features, n, rng=rng).astype(dtype)
    return model
