# %% [markdown]
# # Market-neutral pair on the synthetic energy fixture
#
# Two stocks are regressed on eleven sector-ETF returns in one rolling
# window.  The weights cancel the exposure to XLE and are scored on the two
# trading days after the training window.

# %%
from pathlib import Path

from nsvt.portfolio import load_config, run_pipeline

root = Path(__file__).resolve().parents[1] if "__file__" in globals() else Path.cwd().parent
cfg = load_config(root / "tests" / "fixtures" / "portfolio" / "config.json", bootstrap_B=0)
summary = run_pipeline(cfg, write=False)

# %%
window = summary["windows"][0]
for stock, info in window["fits"].items():
    beta = info["params"]["beta"]
    print(f"{stock}: XLE coefficient {beta[summary['factors'].index('XLE')]:.3f}, "
          f"rho {info['params']['rho']:.3f}")
port = window["portfolios"][0]
print("weights", [round(w, 3) for w in port["weights"]])
print("neutrality residual", port["neutrality_residual"])
print("evaluation return", round(port["evaluation_return"], 4))
