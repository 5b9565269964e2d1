import numpy as np

from shl_lstm.data_model import Dataset, Split


def make_dataset(counts, timesteps=2, feature_dim=3, seed=0, split=Split.Train):
    """Random dataset with ``counts[k]`` samples of class code k+1, interleaved."""
    r = np.random.default_rng(seed)
    y = np.concatenate([np.full(n, k + 1) for k, n in enumerate(counts)]).astype(np.uint8)
    y = y[r.permutation(len(y))]
    X = r.normal(size=(len(y), timesteps, feature_dim))
    return Dataset(X, y, split)
