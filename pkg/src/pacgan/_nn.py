"""Torch plumbing shared by the generative models."""

from __future__ import annotations

import contextlib

import numpy as np
import torch
import torch.nn.functional as F


def derived_seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


@contextlib.contextmanager
def seeded(seed):
    """Run a block under a fixed torch RNG state without disturbing the caller's."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(int(seed))
        yield


def generator(seed) -> torch.Generator:
    return torch.Generator().manual_seed(int(seed))


def unique_parameters(*modules):
    """Parameters of several modules, each shared tensor listed once, in first-seen order."""
    seen = set()
    out = []
    for m in modules:
        for p in m.parameters():
            if id(p) not in seen:
                seen.add(id(p))
                out.append(p)
    return out


def make_optimizer(params, name, lr):
    if name == "sgd":
        return torch.optim.SGD(params, lr=lr)
    if name == "adam":
        return torch.optim.Adam(params, lr=lr, betas=(0.5, 0.999))
    raise ValueError(f"unknown optimizer {name!r}")


def set_requires_grad(params, flag):
    for p in params:
        p.requires_grad_(flag)


def dropout_with(x, p, noise):
    """Inverted dropout whose mask comes from ``noise`` (a torch.Generator); identity when noise is None."""
    if noise is None or p <= 0:
        return x
    keep = torch.rand(x.shape, generator=noise, dtype=x.dtype) >= p
    return x * keep / (1.0 - p)


def shared_layer_names(module_a, module_b, prefix_a="", prefix_b=""):
    """Names of submodules of ``module_b`` that are the very same object as one in ``module_a``."""
    ids = {id(m): n for n, m in module_a.named_modules()}
    return {prefix_b + n: prefix_a + ids[id(m)] for n, m in module_b.named_modules() if n and id(m) in ids}


@contextlib.contextmanager
def eval_mode(*modules):
    states = [m.training for m in modules]
    try:
        for m in modules:
            m.eval()
        yield
    finally:
        for m, s in zip(modules, states):
            m.train(s)


class ViewBatchNorm2d(torch.nn.BatchNorm2d):
    """Batch norm whose affine parameters can be tied across views while running statistics stay per view.

    View 1 uses the standard buffers; view 2 keeps its own copies, so a layer
    shared by both branches still normalizes each view with its own statistics
    in eval mode.
    """

    def __init__(self, num_features):
        super().__init__(num_features)
        self.register_buffer("running_mean_v2", torch.zeros(num_features))
        self.register_buffer("running_var_v2", torch.ones(num_features))
        self.register_buffer("num_batches_tracked_v2", torch.tensor(0, dtype=torch.long))

    def forward(self, x, view=1):
        if view == 2:
            mean, var, count = self.running_mean_v2, self.running_var_v2, self.num_batches_tracked_v2
        else:
            mean, var, count = self.running_mean, self.running_var, self.num_batches_tracked
        if self.training:
            count.add_(1)
        return F.batch_norm(x, mean, var, self.weight, self.bias, self.training, self.momentum, self.eps)
