"""Cubic least-squares fit (degree-3 polynomial)."""

import argparse
import json

import numpy as np

DEGREE = 3


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--mode", choices=["validate", "train"], default="validate")
    args = parser.parse_args()

    x = np.load("x_train.npy").ravel()
    u = np.load("u_train.npy").ravel()
    if args.mode == "validate":
        x, u = x[:20], u[:20]

    if DEGREE == 0:
        coeffs = [float(u.mean())]
    else:
        coeffs = [float(c) for c in np.polyfit(x, u, DEGREE)[::-1]]
    with open("MODEL_CHECKPOINT", "w") as fh:
        json.dump({"coeffs": coeffs}, fh)

    pred = sum(c * x**k for k, c in enumerate(coeffs))
    print(f"mode={args.mode} degree={DEGREE} n={x.size} train_mse={float(np.mean((pred - u) ** 2)):.8f}")


if __name__ == "__main__":
    main()
