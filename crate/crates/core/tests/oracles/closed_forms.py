#!/usr/bin/env python3
"""Closed-form and direct-evaluation values used by unit and acceptance tests."""
import math
import numpy as np

print("rms two joints |3|,|4|:", repr(math.sqrt((9 + 16) / 2)))
print("centroid of (0,0,0),(1,1,1),(2,2,2):", np.mean([[0, 0, 0], [1, 1, 1], [2, 2, 2]], axis=0))
s = np.array([0.0, 2.0]); print("znorm [0,2]:", repr(((s - s.mean()) / (s.std() + 1e-8)).tolist()))
print("gaussian kernel z=3 beta=1.5:", repr(math.exp(-9 / 2.25)))
a = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], float); d = a.sum(1)
print("chain-3 normalized adjacency:", repr((a / np.sqrt(np.outer(d, d))).tolist()))
print("ln 4:", repr(math.log(4)), "3e^-40:", repr(3 * math.exp(-40)))
mu1, mu2 = np.array([0.0, 1.0, -1.0, 2.0]), np.array([1.0, 0.5, 0.0, 2.0])
v1, v2 = np.array([1.0, 2.0, 0.5, 4.0]), np.array([2.0, 1.0, 0.5, 1.0])
print("FID closed form:", repr(float(((mu1 - mu2) ** 2).sum() + (v1 + v2 - 2 * np.sqrt(v1 * v2)).sum())))
print("pop std of d=1,3:", np.std([1.0, 3.0]))
