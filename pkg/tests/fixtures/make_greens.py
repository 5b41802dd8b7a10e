"""Regenerate greens_samples.json with mpmath (real-valued closed forms).

Run from this directory: python3 make_greens.py
"""

import json

import mpmath as mp

mp.mp.dps = 40

CASES = [
    # M, omega, gamma
    (1.0, 1.0, 0.0),
    (1.0, 1.0, 0.3),
    (2.5, 3.0, 1.0),
    (1e-5, 31.41592653589793, 0.1),
    (1.0, 1.0, 3.0),  # overdamped
]
TIMES = [0.0, 0.05, 0.4, 1.3, 2.7, 6.0]


def forms(M, w, g):
    M, w, g = mp.mpf(M), mp.mpf(w), mp.mpf(g)
    d = w**2 - g**2 / 4
    if d > 0:
        W = mp.sqrt(d)
        G1 = lambda t: mp.e ** (-g * t / 2) * (mp.cos(W * t) + g / (2 * W) * mp.sin(W * t))
        G2 = lambda t: mp.e ** (-g * t / 2) * mp.sin(W * t) / (M * W)
    else:
        K = mp.sqrt(-d)
        G1 = lambda t: mp.e ** (-g * t / 2) * (mp.cosh(K * t) + g / (2 * K) * mp.sinh(K * t))
        G2 = lambda t: mp.e ** (-g * t / 2) * mp.sinh(K * t) / (M * K)
    return G1, G2


def main():
    out = []
    for M, w, g in CASES:
        G1, G2 = forms(M, w, g)
        for t in TIMES:
            tt = mp.mpf(t)
            out.append({
                "M": M, "omega": w, "gamma": g, "t": t,
                "G1": float(G1(tt)), "G2": float(G2(tt)),
                "dG1": float(mp.diff(G1, tt)), "dG2": float(mp.diff(G2, tt)),
            })
    with open("greens_samples.json", "w") as fh:
        json.dump(out, fh, indent=1)


if __name__ == "__main__":
    main()
