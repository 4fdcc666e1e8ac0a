"""Reference trace of the Adam recurrence at 50 significant digits.

Prints the parameter value after each step for the scalar cases used by the
optimizer tests. Values are pasted into tests/adam_trace.hpp.
"""
from mpmath import mp, mpf, sqrt

mp.dps = 50


def trace(p, grads, lr, b1=mpf("0.9"), b2=mpf("0.999"), eps=mpf("1e-7")):
    m = v = mpf(0)
    out = []
    for t, g in enumerate(grads, start=1):
        g = mpf(g)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        p = p - lr * mhat / (sqrt(vhat) + eps)
        out.append(p)
    return out


if __name__ == "__main__":
    cases = {
        "constant g=1, p0=0, lr=1e-5": trace(mpf(0), [1] * 10, mpf("1e-5")),
        "constant g=0.3, p0=0.5, lr=1e-3": trace(mpf("0.5"), ["0.3"] * 10, mpf("1e-3")),
        "varying g, p0=-1.25, lr=1e-2": trace(mpf("-1.25"), ["0.5", "-2", "1e-3", "4", "-0.25", "0", "3", "-1", "0.75", "2"], mpf("1e-2")),
    }
    for name, values in cases.items():
        print("//", name)
        print(",\n".join(mp.nstr(x, 20) for x in values))
