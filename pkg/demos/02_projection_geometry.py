"""Geometry of the projection score.

The score of an anchor embedding against the other modalities is the cosine
between the anchor and its ridge projection onto their span. A vector inside
the span scores 1; an orthogonal one scores 0; rescaling every embedding
together leaves the score unchanged.
"""
import numpy as np

from ovaib.linalg import ridge_project
from ovaib.losses import projection_score

rng = np.random.default_rng(1)
d = 6
rest = [rng.normal(size=d) for _ in range(2)]
A = np.stack(rest, axis=1)

inside = A @ np.array([0.3, -1.2])
print("anchor inside the span:   score = %.6f" % projection_score(inside, rest))

q, _ = np.linalg.qr(np.column_stack([A, rng.normal(size=d)]))
outside = q[:, 2]
print("anchor orthogonal to span: score = %.2e" % projection_score(outside, rest))

z = rng.normal(size=d)
zbar = ridge_project(A, z)
print("generic anchor: |z| = %.4f, |projection| = %.4f, score = %.4f"
      % (np.linalg.norm(z), np.linalg.norm(zbar), projection_score(z, rest)))
print("projecting twice changes it by %.2e" % np.abs(ridge_project(A, zbar) - zbar).max())

for c in (0.1, 10.0, 1000.0):
    print("scale %7.1f: score = %.10f" % (c, projection_score(c * z, [c * r for r in rest])))
