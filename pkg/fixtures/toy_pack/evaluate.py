"""Score a checkpointed polynomial on the held-out split.

Reads MODEL_CHECKPOINT from the working directory, the validation
arrays from $DATA_DIR (default "."), and prints the validation MSE as
the final FINAL_SCORE line. An unusable checkpoint scores NaN.
"""

import json
import os

import numpy as np


def relative_l2(pred, true):
    denom = float(np.linalg.norm(true))
    if denom == 0.0:
        return 0.0 if not np.any(pred) else float("inf")
    return float(np.linalg.norm(pred - true) / denom)


def main():
    data_dir = os.environ.get("DATA_DIR", ".")
    x = np.load(os.path.join(data_dir, "x_val.npy")).ravel()
    u = np.load(os.path.join(data_dir, "u_val.npy")).ravel()
    try:
        with open("MODEL_CHECKPOINT") as fh:
            coeffs = [float(c) for c in json.load(fh)["coeffs"]]
        pred = np.zeros_like(x)
        for k, c in enumerate(coeffs):
            pred = pred + c * x**k
        score = float(np.mean((pred - u) ** 2))
        print(f"n_val={x.size} relative_l2={relative_l2(pred, u):.8f}")
    except Exception as exc:
        print(f"checkpoint unusable: {exc}")
        score = float("nan")
    print(f"FINAL_SCORE: {score}")


if __name__ == "__main__":
    main()
