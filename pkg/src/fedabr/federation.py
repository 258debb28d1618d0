"""Intra-group synchronous federated coordinator.

Holds one versioned global model per group, distributes it to registering
clients, averages client gradients at a synchronous round barrier, and applies
the averaged gradient with the shared freeze mask. Personalization (client-side
convex mixing of local and global models) is a pure function.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .net import (FreezeMask, Gradients, ModelParams, all_trainable, apply_update,
                  mean_gradients)

DEFAULT_MIX = 0.5


class FederationError(ValueError):
    pass


class UpdateRejected(FederationError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass
class GroupModel:
    group: int
    params: ModelParams
    version: int = 0


@dataclass(frozen=True)
class UpdateMessage:
    client: str
    group: int
    round: int
    gradients: Gradients


def personalize(local_prev: ModelParams, global_params: ModelParams,
                mix: float) -> ModelParams:
    """Convex mixing: mix*local_prev + (1-mix)*global, elementwise."""
    if not 0.0 <= mix <= 1.0:
        raise FederationError("mix must be in [0, 1]")
    if local_prev.n_layers != global_params.n_layers:
        raise FederationError("shape mismatch between local and global params")
    weights, biases = [], []
    for lw, gw in zip(local_prev.weights, global_params.weights):
        if lw.shape != gw.shape:
            raise FederationError("shape mismatch between local and global params")
        weights.append(mix * lw + (1.0 - mix) * gw)
    for lb, gb in zip(local_prev.biases, global_params.biases):
        biases.append(mix * lb + (1.0 - mix) * gb)
    return ModelParams(weights, biases, list(local_prev.activations))


class Coordinator:
    """Synchronous per-group parameter server. Single-executor scheduling only."""

    def __init__(self, server_lr: float, server_mask: FreezeMask | None = None,
                 mode: str = "gradients", transcript_path: str | Path | None = None):
        if mode not in ("gradients", "params"):
            raise FederationError(f"unknown aggregation mode {mode!r}")
        self.server_lr = server_lr
        self.server_mask = server_mask
        self.mode = mode
        self._groups: dict[int, GroupModel] = {}
        self._members: dict[int, set[str]] = {}
        self._pending: dict[int, dict[str, Gradients]] = {}
        self._client_params: dict[str, ModelParams] = {}
        self._transcript = open(transcript_path, "w") if transcript_path else None

    def close(self):
        if self._transcript:
            self._transcript.close()
            self._transcript = None

    def _log(self, kind: str, **fields):
        if self._transcript:
            self._transcript.write(json.dumps({"event": kind, **fields}) + "\n")

    def seed_group(self, group: int, pretrained: ModelParams) -> GroupModel:
        if group in self._groups:
            raise FederationError(f"group {group} already seeded")
        gm = GroupModel(group, pretrained.copy(), version=0)
        self._groups[group] = gm
        self._members[group] = set()
        self._pending[group] = {}
        self._log("seed", group=group)
        return gm

    def _require_group(self, group: int) -> GroupModel:
        if group not in self._groups:
            raise FederationError(f"group {group} not seeded")
        return self._groups[group]

    def has_group(self, group: int) -> bool:
        return group in self._groups

    def group_ids(self) -> list[int]:
        return sorted(self._groups)

    def current_round(self, group: int) -> int:
        return self._require_group(group).version

    def fetch(self, group: int) -> tuple[ModelParams, int]:
        gm = self._require_group(group)
        return gm.params.copy(), gm.version

    def register(self, client: str, group: int) -> ModelParams:
        gm = self._require_group(group)
        if client in self._members[group]:
            raise FederationError(f"client {client!r} already registered in group {group}")
        self._members[group].add(client)
        self._log("register", client=client, group=group, version=gm.version)
        return gm.params.copy()

    def members(self, group: int) -> set[str]:
        self._require_group(group)
        return set(self._members[group])

    def submit(self, update: UpdateMessage) -> None:
        gm = self._require_group(update.group)
        if update.client not in self._members[update.group]:
            raise UpdateRejected(f"client {update.client!r} not enrolled in group {update.group}")
        if update.round != gm.version:
            raise UpdateRejected(f"stale round {update.round} (current {gm.version})")
        if update.client in self._pending[update.group]:
            raise UpdateRejected(f"duplicate submission from {update.client!r} "
                                 f"for round {update.round}")
        if len(update.gradients.weights) != gm.params.n_layers or any(
                g.shape != w.shape for g, w in zip(update.gradients.weights, gm.params.weights)):
            raise UpdateRejected("gradient shape mismatch")
        self._pending[update.group][update.client] = update.gradients
        self._log("submit", client=update.client, group=update.group, round=update.round)

    def aggregate_round(self, group: int) -> GroupModel:
        gm = self._require_group(group)
        missing = self._members[group] - set(self._pending[group])
        if missing:
            raise FederationError(f"round barrier not satisfied for group {group}: "
                                  f"missing {sorted(missing)}")
        if not self._pending[group]:
            raise FederationError(f"group {group} has no submissions to aggregate")
        mask = self.server_mask or all_trainable(gm.params)
        payloads = [self._pending[group][c] for c in sorted(self._pending[group])]
        if self.mode == "gradients":
            gm.params = apply_update(gm.params, mean_gradients(payloads), self.server_lr, mask)
        else:
            # Parameter-averaging mode: payloads carry client parameter values.
            mean = mean_gradients(payloads)
            weights = [m.copy() if t else w.copy()
                       for m, w, t in zip(mean.weights, gm.params.weights, mask.trainable)]
            biases = [m.copy() if t else b.copy()
                      for m, b, t in zip(mean.biases, gm.params.biases, mask.trainable)]
            gm.params = ModelParams(weights, biases, list(gm.params.activations))
        gm.version += 1
        self._pending[group] = {}
        self._log("aggregate", group=group, version=gm.version, clients=len(payloads))
        return gm

    def migrate(self, client: str, from_group: int, to_group: int) -> ModelParams:
        target = self._require_group(to_group)
        self._require_group(from_group)
        if from_group == to_group:
            return target.params.copy()
        if self._pending[from_group].get(client) is not None:
            raise FederationError(f"client {client!r} has a pending submission; "
                                  "migrate only at round boundaries")
        self._members[from_group].discard(client)
        self._members[to_group].add(client)
        self._log("migrate", client=client, from_group=from_group, to_group=to_group,
                  version=target.version)
        return target.params.copy()
