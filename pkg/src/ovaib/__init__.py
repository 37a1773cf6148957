"""One-vs-all information bottleneck (OVA-IB) for multi-modal alignment.

Submodules:

- ``linalg``: ridge projection and cosine helpers
- ``info_oracle``: exact discrete entropies, TC/DTC, DV objective, Gaussian KL
- ``autodiff``: reverse-mode differentiation, MLPs, Adam, finite differences
- ``losses``: one-vs-all InfoNCE, minimality regularizer, pairwise CLIP
- ``synth_data``: linear-Gaussian multi-modal generator
- ``evaluation``: retrieval mAP and linear probes
- ``verify`` / ``gradcheck``: numerical certification sweeps
- ``training`` / ``runs`` / ``cli``: experiment plumbing
"""
__version__ = "0.1.0"
