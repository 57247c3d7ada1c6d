"""Spectral-norm estimation and layer capping.

Power iteration gives a cheap estimate of a weight matrix's largest singular
value; rescaling with it keeps every layer inside its prescribed cap, which
in turn makes each relu layer nonexpansive up to that cap.
"""

import numpy as np

from dpsbcd.network import forward, init_model, normalize_layer
from dpsbcd.numerics import RngState, power_iteration

rng = np.random.default_rng(0)

# Estimate vs exact singular value on a random matrix.
w = rng.standard_normal((60, 40)) * 1.7
estimate = power_iteration(w, max_iters=2000, tol=1e-13)
exact = np.linalg.svd(w, compute_uv=False)[0]
print(f"power iteration: {estimate:.10f}")
print(f"exact svd      : {exact:.10f}")

# Capping: matrices over the cap are rescaled, others pass through.
capped = normalize_layer(w, rho=1.0)
print(f"after cap 1.0  : {np.linalg.svd(capped, compute_uv=False)[0]:.10f}")

# A capped network contracts input perturbations layer by layer.
model = init_model([8, 32, 32, 4], rho=1.0, init_sigma2=0.05, rng=RngState(1))
x = rng.standard_normal((8, 1))
x_shift = x + 0.01 * rng.standard_normal((8, 1))
acts, acts_shift = forward(model, x), forward(model, x_shift)
gap = np.linalg.norm(x - x_shift)
print("\nper-layer perturbation growth (caps at 1.0):")
for d, (a, b) in enumerate(zip(acts, acts_shift)):
    ratio = np.linalg.norm(a - b) / gap
    print(f"  layer {d}: |dx_{d}| / |dx_0| = {ratio:.4f}")
