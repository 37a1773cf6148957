"""Information identities on a small discrete joint.

Draws a random three-modality joint, then prints the quantities the
one-vs-all objective is built from: the per-modality one-vs-rest mutual
informations, total correlation (TC), dual total correlation (DTC), and the
bounds that sandwich DTC. Finishes with the Gaussian picture behind the
minimality term.
"""
import numpy as np

from ovaib import info_oracle as io

rng = np.random.default_rng(0)
j = io.random_joint([2, 3, 4], rng)
M = 3

print("joint over alphabets", j.probs.shape, "sums to", j.probs.sum())
print("H(X1,X2,X3) = %.4f nats (%.4f bits)" % (io.entropy(j), io.to_bits(io.entropy(j))))

for m in range(M):
    rest = [i for i in range(M) if i != m]
    print("I(X%d ; rest) = %.4f" % (m + 1, io.mutual_information(j, [m], rest)))

tc, dtc = io.total_correlation(j), io.dual_total_correlation(j)
print("TC = %.4f   DTC = %.4f" % (tc, dtc))
print("sum of one-vs-rest MIs = %.4f  (TC + DTC = %.4f)" % (io.ova_mi_sum(j), tc + dtc))

sw = io.check_sandwich(j)
print("DTC sandwich: %.4f <= %.4f <= %.4f" % (sw["lower"], sw["dtc"], sw["upper"]))

# Gaussian modalities with shared variance: KL from one modality to the
# product of the others is a scaled squared distance plus a constant.
d, var = 4, 0.5
means = rng.normal(size=(M, d))
p = io.IsotropicGaussian(means[0], var)
q = io.gaussian_product([io.IsotropicGaussian(mu, var) for mu in means[1:]])
kl = io.gaussian_kl(p, q)
dist = (M - 1) / (2 * var) * np.sum((means[0] - means[1:].mean(axis=0)) ** 2)
print("KL = %.6f, scaled distance + C_M = %.6f" % (kl, dist + io.minimality_constant(d, M)))
