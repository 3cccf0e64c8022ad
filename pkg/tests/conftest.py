"""Shared fixtures: the default corpus and the shipped pre-trained model.

Training runs once per session; everything downstream (subspace, posterior,
QoI, optimizers) reuses the same PTM exactly as the CLI pipeline would.
"""

import numpy as np
import pytest

from asft import posterior, subspace, toygen
from asft.numkit import SeededRng


@pytest.fixture(scope="session")
def default_dataset():
    return toygen.sample_dataset(
        SeededRng(toygen.DEFAULT_DATASET_SEED), toygen.DEFAULT_DATASET_SIZE
    )


@pytest.fixture(scope="session")
def ptm_and_record(default_dataset):
    return toygen.train_vae(default_dataset, toygen.TrainConfig())


@pytest.fixture(scope="session")
def ptm(ptm_and_record):
    model, _ = ptm_and_record
    # downstream tests must not mutate the shared model
    model.partition.values.flags.writeable = False
    return model


@pytest.fixture(scope="session")
def active_sub(ptm, default_dataset):
    return subspace.build_active_subspace(ptm, default_dataset)


@pytest.fixture(scope="session")
def vi_posterior(ptm, active_sub, default_dataset):
    post, trace = posterior.fit_posterior(ptm, active_sub, default_dataset)
    return post, trace


@pytest.fixture(scope="session")
def probe_setup():
    """Small-grammar VAE (D_S = 169) for dense-oracle subspace checks."""
    grammar = toygen.Grammar(length=4)
    data = toygen.sample_dataset(SeededRng(12), 60, grammar)
    model = toygen.build_vae(grammar, latent_dim=2, hidden_dim=3, init_rng=SeededRng(4))
    return model, data
