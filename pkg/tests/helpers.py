import numpy as np


def refinement_change(coarse, fine):
    """Sup-norm change of every column between two runs on the same sample times.

    Actuation-unit columns (y_c, x_c*, e*) are scaled by sup|y_c| so that a
    column holding only round-off (a sync error at equilibrium) is not
    compared with itself; plant outputs are scaled by their own sup norm.
    """
    act_scale = np.max(np.abs(fine["y_c"]))
    out = {}
    for col in coarse.columns[1:]:
        a, b = coarse[col], fine[col]
        if col in ("w", "u"):
            out[col] = 0.0 if np.array_equal(a, b) else float("inf")
            continue
        scale = act_scale if col[0] in "xe" or col == "y_c" else np.max(np.abs(b))
        out[col] = float(np.max(np.abs(a - b)) / max(scale, 1e-300))
    return out
