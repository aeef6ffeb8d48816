import numpy as np
import pytest

import hrtfspace as hs


@pytest.fixture(scope="session")
def small_grid():
    # 8 azimuths x 2 elevations = 16 directions
    pairs = [(az, el) for az in np.arange(8) * 45.0 for el in (-30.0, 30.0)]
    return hs.SphericalGrid(np.array(pairs))


@pytest.fixture(scope="session")
def small_bins():
    return np.linspace(400.0, 12800.0, 8)


@pytest.fixture(scope="session")
def synth_pair(small_grid, small_bins):
    return (
        hs.synth_subject(7, small_grid, small_bins),
        hs.synth_subject(8, small_grid, small_bins),
    )


def random_magnitude_set(rng, grid, bins, subject_id="rand"):
    data = 10.0 ** rng.uniform(-1.0, 0.5, size=(grid.count, len(bins), 2))
    return hs.MagnitudeSet(subject_id=subject_id, grid=grid, freq_bins_hz=bins, data=data)


@pytest.fixture(scope="session")
def tiny_checkpoint(small_grid, small_bins):
    """A small trained model shared by evaluation/checkpoint tests."""
    from hrtfspace.training import TrainConfig, train_glo

    sets = [hs.synth_subject(i, small_grid, small_bins) for i in range(6)]
    matrix = hs.pairwise_matrix(sets, "pbc")
    embedding = hs.embed(matrix, 3)
    cfg = TrainConfig(
        latent_dim=3,
        epochs=40,
        locations_per_step=16,
        lr_weights=1e-3,
        lr_latents=1e-2,
        seed=11,
        hidden_units=32,
        num_octaves=2,
    )
    return train_glo(sets, embedding, cfg), sets, matrix, embedding
