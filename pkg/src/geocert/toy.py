"""Regenerate the committed test fixtures from scikit-learn's bundled digits.

    python -m geocert.toy tests/data

Writes ten 8x8 digit images, twenty held-out 4x4 images with labels, and a
16-16-16-10 ReLU MLP trained on the remaining 4x4 images. Needs the optional
``toy`` extra (scikit-learn).
"""
from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from .io import write_csv_image, write_json
from .transforms import Image
from .verifier import Layer, Network


def downsample(images: np.ndarray) -> np.ndarray:
    """2x2 block means: (N, 8, 8) -> (N, 4, 4)."""
    n, h, w = images.shape
    return images.reshape(n, h // 2, 2, w // 2, 2).mean(axis=(2, 4))


def load_digits_unit():
    from sklearn.datasets import load_digits

    d = load_digits()
    return d.images / 16.0, d.target


def train_mlp(X, y, seed=0, hidden=(16, 16)) -> Network:
    from sklearn.neural_network import MLPClassifier

    clf = MLPClassifier(hidden_layer_sizes=hidden, activation="relu", max_iter=2000,
                        random_state=seed, alpha=1e-3)
    clf.fit(X, y)
    layers = []
    for k, (W, b) in enumerate(zip(clf.coefs_, clf.intercepts_)):
        act = "relu" if k < len(clf.coefs_) - 1 else "none"
        layers.append(Layer(np.asarray(W).T.copy(), np.asarray(b).copy(), act))
    return Network(layers)


def generate(out: Path, seed: int = 0, n_test: int = 20):
    images, target = load_digits_unit()
    d8 = out / "digits8"
    d8.mkdir(parents=True, exist_ok=True)
    # first occurrence of each digit 0..9
    for digit in range(10):
        idx = int(np.nonzero(target == digit)[0][0])
        write_csv_image(d8 / f"digit_{digit}.csv", Image(images[idx]))

    small = downsample(images)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(small))
    test_idx, train_idx = order[:n_test], order[n_test:]
    net = train_mlp(small[train_idx].reshape(len(train_idx), -1), target[train_idx], seed)
    toy = out / "toy"
    toy.mkdir(parents=True, exist_ok=True)
    write_json(toy / "network.json", net.to_dict())
    labels = []
    for k, idx in enumerate(test_idx):
        write_csv_image(toy / f"test_{k:02d}.csv", Image(small[idx]))
        labels.append(str(int(target[idx])))
    (toy / "labels.txt").write_text("\n".join(labels) + "\n")
    acc = float(np.mean(net.predict(small[test_idx].reshape(n_test, -1)) == target[test_idx]))
    return net, acc


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("out", nargs="?", default="tests/data")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    _, acc = generate(Path(args.out), args.seed)
    print(f"wrote fixtures to {args.out}; held-out accuracy {acc:.2f}")


if __name__ == "__main__":
    main()
