"""Matched-privacy noise strategies.

A decreasing-variance schedule can be paired with a constant one so both
cost nearly the same privacy at every horizon: the decreasing strategy
spends large (cheap, heavily decayed) noise early and small noise late.
This prints the epsilon of both strategies per horizon and their ratio,
together with the composition-style baseline each one stays below.
"""

from dpsbcd.accountant import PrivacyConfig, composition_baseline, total_epsilon
from dpsbcd.schedules import Constant, LinearDecay

BASE = dict(
    alpha=100.0,
    grad_sensitivity=1.0,
    lip_gradient=0.987,
    eta=0.01,
    batch_size=960,
    dataset_size=4800,
    c0=100.0,
)

print("constant o=0.01 vs linear decrease ending at 0.0075 (slope 8e-4/epoch)")
print(f"{'K':>4} {'eps constant':>14} {'eps decrease':>14} {'ratio':>8} {'baseline(c)':>13}")
for epochs in (10, 20, 30, 40, 50):
    const_cfg = PrivacyConfig(schedule=Constant(0.01), epochs=epochs, **BASE)
    dec_cfg = PrivacyConfig(
        schedule=LinearDecay(0.0075 + 0.0008 * epochs, 0.0008, 1e-6),
        epochs=epochs,
        **BASE,
    )
    eps_c, eps_d = total_epsilon(const_cfg), total_epsilon(dec_cfg)
    print(
        f"{epochs:>4} {eps_c:>14.6e} {eps_d:>14.6e} {eps_c / eps_d:>8.4f} "
        f"{composition_baseline(const_cfg):>13.4e}"
    )
