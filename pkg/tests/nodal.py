"""Nodal-analysis oracle for RC ladder impedances."""

import numpy as np


def nodal_impedance(stages, r3, omega, refinements=3):
    """Driving-point impedance at the electrode by nodal analysis.

    Node 0 is the source side of the first resistor (shorted to ground),
    node k the junction after stage k, and the last node the electrode behind
    r3 (the last junction itself when r3 = 0).  A 1 A test current is
    injected at the electrode.

    The admittance matrix is assembled in extended precision and the float64
    solve is polished by iterative refinement.  Without that, Re(Z) loses up to
    eight digits when it is much smaller than |Z|.
    """
    n = len(stages) + (1 if r3 else 0)  # junctions, plus the electrode when r3 > 0
    Y = np.zeros((n, n), dtype=np.clongdouble)
    one = np.longdouble(1)

    def branch(a, b, y):
        # a, b are node numbers; 0 is ground
        if a:
            Y[a - 1, a - 1] += y
        if b:
            Y[b - 1, b - 1] += y
        if a and b:
            Y[a - 1, b - 1] -= y
            Y[b - 1, a - 1] -= y

    for k, (r, c) in enumerate(stages, start=1):
        branch(k - 1, k, one / np.longdouble(r))
        if c:
            branch(k, 0, 1j * np.longdouble(omega) * np.longdouble(c))
    if r3:
        branch(len(stages), n, one / np.longdouble(r3))
    i = np.zeros(n, dtype=np.clongdouble)
    i[-1] = 1
    y64 = Y.astype(complex)
    v = np.linalg.solve(y64, i.astype(complex)).astype(np.clongdouble)
    for _ in range(refinements):
        v = v + np.linalg.solve(y64, (i - Y @ v).astype(complex))
    return complex(v[-1])
