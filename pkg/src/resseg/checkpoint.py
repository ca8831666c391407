"""Checkpoint persistence for both training stages (RCSG1 archives).

The archive meta carries the component tag ("diffusion" or "segmentation"),
architecture and schedule configs, epoch counters and metric history; the
tensor section carries model weights, optimizer moments and the torch RNG
state.
"""

import numpy as np
import torch

from .archive import read_archive, write_archive
from .errors import IncompatibleCheckpoint
from .models import Denoiser, SegModel


def _state_dict_to_tensors(prefix, state):
    return {f"{prefix}/{k}": v.detach().cpu().numpy() for k, v in state.items()}


def _optimizer_tensors(optimizer):
    tensors = {}
    groups = []
    state = optimizer.state_dict()
    for g in state["param_groups"]:
        groups.append({k: v for k, v in g.items()})
    for idx, pstate in state["state"].items():
        for key, val in pstate.items():
            if torch.is_tensor(val):
                tensors[f"opt/{idx}/{key}"] = val.detach().cpu().numpy()
            else:
                tensors[f"opt/{idx}/{key}"] = np.asarray(val)
    return tensors, groups


def save_checkpoint(
    path,
    component,
    model,
    arch,
    schedule=None,
    optimizer=None,
    epoch=0,
    best_score=None,
    history=None,
    extra=None,
):
    meta = {
        "component": component,
        "arch": arch,
        "schedule": schedule,
        "epoch": int(epoch),
        "best_score": None if best_score is None else float(best_score),
        "history": history or [],
    }
    if extra:
        meta.update(extra)
    tensors = _state_dict_to_tensors("model", model.state_dict())
    if optimizer is not None:
        opt_tensors, groups = _optimizer_tensors(optimizer)
        tensors.update(opt_tensors)
        meta["optimizer_groups"] = groups
    tensors["rng/torch"] = torch.get_rng_state().numpy()
    write_archive(path, meta, tensors)


class Checkpoint:
    def __init__(self, meta, tensors):
        self.meta = meta
        self.tensors = tensors

    @property
    def component(self):
        return self.meta["component"]

    @property
    def epoch(self):
        return self.meta["epoch"]

    def model_state(self):
        return {
            k[len("model/") :]: torch.from_numpy(v.copy())
            for k, v in self.tensors.items()
            if k.startswith("model/")
        }

    def build_model(self):
        arch = self.meta["arch"]
        if self.component == "diffusion":
            model = Denoiser(base_width=arch["base_width"], levels=arch["levels"])
        elif self.component == "segmentation":
            model = SegModel(base_width=arch["base_width"], levels=arch["levels"])
        else:
            raise IncompatibleCheckpoint(f"unknown component tag {self.component!r}")
        try:
            model.load_state_dict(self.model_state())
        except RuntimeError as exc:
            raise IncompatibleCheckpoint(str(exc)) from exc
        model.eval()
        return model

    def restore_optimizer(self, optimizer):
        if "optimizer_groups" not in self.meta:
            raise IncompatibleCheckpoint("checkpoint has no optimizer state")
        state = {"param_groups": self.meta["optimizer_groups"], "state": {}}
        for key, arr in self.tensors.items():
            if not key.startswith("opt/"):
                continue
            _, idx, name = key.split("/", 2)
            entry = state["state"].setdefault(int(idx), {})
            entry[name] = torch.from_numpy(arr.copy())
        optimizer.load_state_dict(state)

    def restore_rng(self):
        if "rng/torch" in self.tensors:
            torch.set_rng_state(torch.from_numpy(self.tensors["rng/torch"].copy()))


def load_checkpoint(path, expect_component=None):
    meta, tensors = read_archive(path)
    if expect_component is not None and meta.get("component") != expect_component:
        raise IncompatibleCheckpoint(
            f"expected a {expect_component} checkpoint, found {meta.get('component')!r}"
        )
    return Checkpoint(meta, tensors)
