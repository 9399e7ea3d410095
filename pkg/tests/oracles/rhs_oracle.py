"""Independent evaluation of the cell model at one pinned point.

Written directly from the model equations in 50-digit mpmath, without
importing the package, and run once to freeze ``fixtures/rhs_golden.json``.
"""
import json
import sys
from pathlib import Path

import mpmath as mp

mp.mp.dps = 50

STATE = ["3100.0", "550.0", "1650.0", "13800.0", "10100.0", "962.5", "818.0", "580.0"]
INPUT = ["0.031", "152.5", "0.0007", "0.0125", "5.1"]
PARAMS = {
    "k0": "3e-05", "k1": "3.89878e-06", "k2": "0.001", "k3": "0.000175", "k4": "0.02",
    "k5": "0.02", "k6": "9.26e-05", "k7": "0.001", "k8": "1e-05", "k9": "1.28842",
    "k10": "4.63195", "k11": "48.2494", "k12": "0.5", "k13": "0.001", "k14": "0.05",
    "k15": "1.0", "k16": "35.0", "k17": "1e-05", "k18": "0.274776", "alpha": "15.0",
    "beta": "0.05", "c_x2_crit": "0.01",
}


def evaluate(state, inp, p):
    x1, x2, x3, x4, x5, x6, x7, x8 = (mp.mpf(v) for v in state)
    u1, u2, u3, u4, u5 = (mp.mpf(v) for v in inp)
    k = [mp.mpf(p[f"k{i}"]) for i in range(19)]
    alpha, beta, crit = mp.mpf(p["alpha"]), mp.mpf(p["beta"]), mp.mpf(p["c_x2_crit"])

    bath = x2 + x3 + x4
    c2, c3 = x2 / bath, x3 / bath
    g1 = (mp.mpf("991.2") + 112 * c3 + 61 * c3 ** mp.mpf("1.5")
          - mp.mpf("3265.5") * c3 ** mp.mpf("2.2")
          - 793 * c2 / (-23 * c2 * c3 - 17 * c3 ** 2 + mp.mpf("9.36") * c3 + 1))
    g2 = mp.exp(mp.mpf("2.496") - mp.mpf("2068.4") / (273 + x6) - mp.mpf("2.07") * c2)
    d = c2 - crit
    g3 = (mp.mpf("0.531") + mp.mpf("3.06e-18") * u1 ** 3 - mp.mpf("2.51e-12") * u1 ** 2
          + mp.mpf("6.96e-7") * u1 - (mp.mpf("14.37") * d - mp.mpf("0.431"))
          / (mp.mpf("735.3") * d + 1))
    g4 = (mp.mpf("0.5517") + mp.mpf("3.8168e-6") * u2) / (1 + mp.mpf("8.271e-6") * u2)
    g5 = mp.mpf("3.8168e-6") * g3 * g4 * u2 / (g2 * (1 - g3))

    ledge = k[1] * (g1 - x7) / (x1 * k[0]) - k[2] * (x6 - g1)
    dx1 = ledge
    dx2 = u1 - k[3] * u2
    dx3 = u3 - k[4] * u1
    dx4 = -ledge + k[5] * u1
    dx5 = k[6] * u2 - u4
    dx6 = alpha / bath * (u2 * g5 + u2 ** 2 * u5 / (2620 * g2) - k[7] * (x6 - g1) ** 2
                          + k[8] * (x6 - g1) * (g1 - x7) / (k[0] * x1)
                          - k[9] * (x6 - x7) / (k[10] + k[11] * k[0] * x1))
    dx7 = beta / x1 * (k[9] * (g1 - x7) / (k[15] * k[0] * x1)
                       - k[12] * (x6 - g1) * (g1 - x7)
                       + k[13] * (g1 - x7) ** 2 / (k[0] * x1)
                       - (x7 - x8) / (k[14] + k[15] * k[0] * x1))
    dx8 = k[17] * k[9] * ((x7 - x8) / (k[14] + k[15] * k[0] * x1)
                          - (x8 - k[16]) / (k[14] + k[18]))
    return [g1, g2, g3, g4, g5, c2, c3], [dx1, dx2, dx3, dx4, dx5, dx6, dx7, dx8]


def main(out):
    g, dx = evaluate(STATE, INPUT, PARAMS)
    fixture = {
        "state": [float(v) for v in STATE],
        "input": [float(v) for v in INPUT],
        "params": {k: float(v) for k, v in PARAMS.items()},
        "bath": [mp.nstr(v, 25) for v in g],
        "rhs": [mp.nstr(v, 25) for v in dx],
    }
    Path(out).write_text(json.dumps(fixture, indent=1) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent.parent
         / "fixtures" / "rhs_golden.json")
