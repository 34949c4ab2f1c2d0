"""
How constrained is a decoder?
=============================

A decoder trained with free per-sample representations has C_d weights plus
N*m representation entries to fit N*n observed values. The decoder load

    alpha_d = N n / (C_d + N m)

counts constraints per free parameter. An encoder fitted to fixed targets has
the load alpha_e = m N / C_e. This script prints both for the MNIST
architecture at several training-set sizes, then for the simulated
regulatory architecture, whose masked decoder has far fewer weights.

Usage::

    python demos/01_loads.py
"""
import numpy as np

from encfree.analysis import decoder_load, encoder_load, load_relation, load_report
from encfree.architectures import MNIST_SHAPE, mnist_decoder_specs, mnist_encoder_specs, sim_decoder_specs
from encfree.autonet import Network
from encfree.data import SimConfig, simulate

dec = Network.from_specs(mnist_decoder_specs(), (20,))
enc = Network.from_specs(mnist_encoder_specs(), MNIST_SHAPE)
print("MNIST decoder parameters:", dec.param_count())
print("MNIST encoder parameters:", enc.param_count())
print()
print(f"{'N':>6} {'alpha_d':>8} {'alpha_e':>8}")
for N in (500, 1000, 2000, 4000, 10000, 15000):
    r = load_report(dec, enc, N)
    print(f"{N:>6} {r.alpha_d:>8.3f} {r.alpha_e:>8.3f}")

# With equal sizes the two loads are tied together: a well-determined
# encoder (alpha_e > 1) implies a decoder load above n / (2 m).
print()
print("decoder load implied by alpha_e = 1:", load_relation(784, 20, 1.0))

# The simulated decoder only keeps the weights of the regulatory graph.
graph, _ = simulate(SimConfig(N_train=0, N_test=0, seed=0))
sim_dec = Network.from_specs(sim_decoder_specs(graph.A), (100,))
C = sim_dec.param_count()
print()
print("simulated decoder parameters (edges plus biases):", C)
for N in (5, 28, 50, 100, 400):
    print(f"  N={N:>4}  alpha_d={decoder_load(1000, 100, C, N):.2f}")

# the identity between the two loads, on random tuples
r = np.random.default_rng(0)
worst = 0.0
for _ in range(1000):
    n, m, N, C = int(r.integers(2, 5000)), int(r.integers(1, 200)), int(r.integers(1, 10**5)), int(r.integers(1, 10**7))
    b = decoder_load(n, m, C, N)
    worst = max(worst, abs(load_relation(n, m, encoder_load(m, N, C)) - b) / max(1.0, b))
print()
print("worst relative mismatch of the load identity:", worst)
