# %% [markdown]
# Heat kernel on a periodic line
#
# With the identity coefficient the discrete kernel should sit right on top of
# the periodized Gaussian. A Crank-Nicolson step keeps the time error small.

# %%
import numpy as np
import matplotlib.pyplot as plt

from bmolab import Grid, SolveConfig, gallery_field, kernel_table

grid = Grid(1, 512, 16.0)
A = gallery_field("identity", {}, grid)
cfg = SolveConfig.default(grid, A.lam, 1.0, theta=0.5, method="direct")
K = kernel_table(A, [(256,)], 0.0, [0.25, 1.0], cfg)

# %%
x = (np.arange(grid.cells) - 256) * grid.h
exact = {t: sum(np.exp(-(x + k * 16.0) ** 2 / (4 * t)) for k in range(-3, 4)) / np.sqrt(4 * np.pi * t)
         for t in K.slices}

for i, t in enumerate(K.slices):
    num = K.values[i, 0]
    print(f"t={t}: peak error {abs(num.max() - exact[t].max()) / exact[t].max():.2e}")

# %%
fig, ax = plt.subplots()
for i, t in enumerate(K.slices):
    ax.semilogy(x, K.values[i, 0], label=f"grid t={t}")
    ax.semilogy(x, exact[t], "k:", lw=1)
ax.set_ylim(1e-8, 2)
ax.legend()
plt.show()
