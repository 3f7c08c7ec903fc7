"""
Matern-5/2 surrogate and Monte-Carlo expected improvement
=========================================================
"""
import numpy as np
from scipy import stats

from delphi_lab.attack import gp_fit, gp_posterior, matern52, qei

print("k(0, 1) =", matern52([0.0], [1.0]))

rng = np.random.default_rng(0)
X = rng.uniform(size=(6, 1))
y = np.sin(6 * X[:, 0])
s = gp_fit(X, y)

grid = np.linspace(0, 1, 11)[:, None]
mu, var = gp_posterior(s, grid)
for x, m, v in zip(grid[:, 0], mu, var):
    print(f"x={x:.1f}  mean {m:+.3f}  sd {np.sqrt(v):.3f}  truth {np.sin(6 * x):+.3f}")

# the sampled single-point EI against its closed form, at a point whose
# posterior straddles the threshold
f_star = 0.97
x = np.array([[0.3]])
m, v = gp_posterior(s, x)
sd = np.sqrt(v[0])
z = (m[0] - f_star) / sd
exact = (m[0] - f_star) * stats.norm.cdf(z) + sd * stats.norm.pdf(z)
for n in (100, 1_000, 10_000, 100_000):
    print(f"N={n:6d}  qEI {qei(s, x, f_star, q=1, n_samples=n, seed=1)[0]:.5f}  exact {exact:.5f}")

# a batch of two is worth at least its better member
pair = np.array([[[0.3], [0.8]]])
print("qEI of the pair:", qei(s, pair, f_star, q=2, n_samples=20_000, seed=2))
