# %% [markdown]
# A log vortex: unbounded in sup norm, bounded in BMO
#
# Refining the grid resolves more of the logarithmic singularity. The sup of the
# skew coefficient keeps climbing while its BMO size barely moves, and so does
# the fitted Aronson constant.

# %%
from bmolab import Grid, SolveConfig, aronson_fit, gallery_field, kernel_table, linf_bmo_norm

rows = []
for N in (64, 128, 256):
    grid = Grid(2, N)
    A = gallery_field("log_vortex", {"eps": 0.5}, grid)
    cfg = SolveConfig.default(grid, A.lam, 1 / 64, dt=grid.h**2, method="direct")
    c = N // 2
    K = kernel_table(A, [(c, c), (c + N // 16, c)], 0.0, [1 / 1024, 1 / 256, 1 / 64], cfg)
    rows.append((N, A.skew_sup(), linf_bmo_norm(A), aronson_fit(K).M))

# %%
print(f"{'N':>5} {'sup|b|':>8} {'BMO(b)':>8} {'M':>8}")
for N, sup, bmo, M in rows:
    print(f"{N:5d} {sup:8.3f} {bmo:8.3f} {M:8.3f}")
