"""Line-protocol plugin implementing the linear twist x saddle map (mu = 2)."""

import sys

import numpy as np

DF = np.array([[1.0, 1.0, 0, 0], [0, 1.0, 0, 0], [0, 0, 2.0, 0], [0, 0, 0, 0.5]])

for header in sys.stdin:
    n = int(header)
    for _ in range(n):
        z = np.array(sys.stdin.readline().split(), dtype=float)
        print(" ".join("%.17g" % v for v in np.concatenate([DF @ z, DF.ravel()])))
    sys.stdout.flush()
