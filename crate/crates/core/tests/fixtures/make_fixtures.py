"""Regenerates the golden dataset and its Hotelling chi-square reference.

Run from this directory: python3 make_fixtures.py
"""
import numpy as np
from scipy import stats

rng = np.random.default_rng(42)
data = rng.multivariate_normal([0.5, 0.0], np.eye(2), size=50)
np.savetxt("gaussian_shift_seed42.csv", data, delimiter=",", fmt="%.17g")

# Reload what was written so the reference sees exactly the stored values.
data = np.loadtxt("gaussian_shift_seed42.csv", delimiter=",")
n, k = data.shape
diff = data.mean(axis=0)
cov = np.cov(data, rowvar=False, bias=True)
q = n * diff @ np.linalg.solve(cov, diff)
p = stats.chi2.sf(q, k)
with open("hotelling_golden.toml", "w") as f:
    f.write("# Hotelling chi-square test of theta0 = (0, 0), 1/n covariance.\n")
    f.write(f"theta0 = [0.0, 0.0]\nstatistic = {float(q)!r}\np_value = {float(p)!r}\n")
