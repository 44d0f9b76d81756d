"""Independent golden values for the c1 oracle fixture.

Recomputes P(Y=1 | do(t), x) two ways:
  * brute-force enumeration over a 101 x 101 quantile-bin grid of (W, eps),
  * adaptive double quadrature over the continuous latents.

Usage: python3 oracle_golden.py > c1_oracle.json
"""
import json
import math
import pathlib
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np
from scipy import integrate, stats

HERE = pathlib.Path(__file__).resolve().parent
cfg = tomllib.loads((HERE.parent / "c1.toml").read_text())

X = [0.5, -1.0]
T = [3, 1, 4]


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def direction(d):
    raw = [math.cos(0.9 * (k + 1)) for k in range(d)]
    n = math.sqrt(sum(v * v for v in raw))
    return [v / n for v in raw]


def logit_base(x, t):
    u = direction(cfg["d_x"])
    ux = sum(a * b for a, b in zip(u, x))
    s = cfg["mediator_bias"] + sum(cfg["beta_tm"][c] for c in t) + cfg["gamma_xm"] * ux
    offset = cfg["base_rate_logit"] + cfg["beta_xy"] * ux + cfg["x_nonlinearity"] * (x[0] ** 2 - 1.0)
    return offset + cfg["beta_my"] * sigmoid(s)


def bin_means(g):
    edges = stats.norm.ppf(np.arange(g + 1) / g)
    pdf = stats.norm.pdf(edges)
    pdf[0] = pdf[-1] = 0.0
    return g * (pdf[:-1] - pdf[1:])


def enumerate_grid(x, t, g=101):
    z = bin_means(g)
    base = logit_base(x, t)
    a = cfg["beta_w"]
    b = cfg["beta_my"] * cfg["mediator_noise"]
    total = 0.0
    for zw in z:
        for ze in z:
            total += sigmoid(base + a * zw + b * ze)
    return total / (g * g)


def quadrature(x, t):
    base = logit_base(x, t)
    a = cfg["beta_w"]
    b = cfg["beta_my"] * cfg["mediator_noise"]
    f = lambda e, w: sigmoid(base + a * w + b * e) * stats.norm.pdf(w) * stats.norm.pdf(e)
    val, _ = integrate.dblquad(f, -10, 10, -10, 10, epsabs=1e-12, epsrel=1e-12)
    return val


def record(t):
    return {"t": t, "enumeration": enumerate_grid(X, t), "quadrature": quadrature(X, t)}


full = record(T)
minus = [record(T[:j] + T[j + 1:]) for j in range(len(T))]
out = {
    "x": X,
    "t": T,
    "p_do_full": full,
    "p_do_minus": minus,
    "true_uplift_enumeration": [full["enumeration"] - m["enumeration"] for m in minus],
    "p_do_empty": record([]),
}
print(json.dumps(out, indent=2))
