"""Shared fixtures: stub members with controlled outputs, and the
overlap-heavy blob dataset the end-to-end tests build on."""

from __future__ import annotations

import math

import numpy as np
import pytest

from conf_ensemble import (
    ClassifierSpec,
    EnsembleManifest,
    RuntimeConfig,
    TrainConfig,
    TrainedModel,
    fit,
    generate_blobs,
    init_model,
)

# One blob recipe used across builder/cascade/acceptance tests; seeds are
# frozen so subset sizes recorded as regression values stay stable.
BLOBS = dict(num_classes=3, per_class=1000, dim=4, spread=1.0, overlap=0.55, seed=42)
MLP_SPEC = ClassifierSpec(kind="mlp", input_dim=4, num_classes=3, hidden_units=16, seed=1)
TRAIN = TrainConfig(epochs=30, batch_size=64, learning_rate=0.05, weight_decay=1e-4, seed=9)


@pytest.fixture(scope="session")
def blobs3():
    return generate_blobs(**BLOBS)


@pytest.fixture(scope="session")
def trained_m0(blobs3):
    return fit(init_model(MLP_SPEC), blobs3, TRAIN)


def constant_member(
    top_class: int,
    top_logit: float,
    num_classes: int = 2,
    input_dim: int = 2,
) -> TrainedModel:
    """Linear model with zero weights: emits the same logits for any input."""
    spec = ClassifierSpec(
        kind="linear", input_dim=input_dim, num_classes=num_classes, seed=0
    )
    params = np.zeros(spec.param_count())
    params[input_dim * num_classes + top_class] = top_logit
    return TrainedModel(spec=spec, parameters=params)


def member_with_uncertainty(
    u: float,
    top_class: int = 0,
    num_classes: int = 2,
    input_dim: int = 2,
) -> TrainedModel:
    """Stub whose prediction has uncertainty ~u (exact up to float round),
    for u in (0, 0.5]."""
    assert 0.0 < u <= 0.5
    a = math.log((1.0 - u) * (num_classes - 1) / u)
    return constant_member(top_class, a, num_classes, input_dim)


def identity_member(num_classes: int) -> TrainedModel:
    """Linear model whose logits equal its input features."""
    spec = ClassifierSpec(
        kind="linear", input_dim=num_classes, num_classes=num_classes, seed=0
    )
    params = np.zeros(spec.param_count())
    w = params[: num_classes * num_classes].reshape(num_classes, num_classes)
    np.fill_diagonal(w, 1.0)
    return TrainedModel(spec=spec, parameters=params)


def logits_for_uncertainty(u: float, top_class: int = 0, num_classes: int = 2) -> list[float]:
    """Feature row that makes identity_member predict with uncertainty ~u."""
    assert 0.0 < u <= 0.5
    row = [0.0] * num_classes
    row[top_class] = math.log((1.0 - u) * (num_classes - 1) / u)
    return row


def stub_manifest(
    members,
    runtime: RuntimeConfig | None = None,
    selection_rule: str = "nested",
) -> EnsembleManifest:
    members = tuple(members)
    return EnsembleManifest(
        members=members,
        selection_rule=selection_rule,
        training_thresholds=(0.1,) * (len(members) - 1),
        default_runtime=runtime or RuntimeConfig.homogeneous(0.2, len(members)),
        dataset_id="stub",
        dataset_digest="stub",
    )
