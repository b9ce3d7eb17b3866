"""Two clusters against sixty in a binary capital budgeting problem.

For each radius the robust plan is re-solved on fresh training sets and
evaluated on fresh test sets.  ``beta`` is the fraction of repetitions whose
out-of-sample objective falls short of the in-sample one.  With a small number
of repetitions this is a quick look; the acceptance suite uses 200.

Run with ``python demos/05_capital_budgeting.py`` (about a minute).
"""

from mro.experiments import ExperimentConfig, beta_for_cell, make_setup

setup = make_setup(ExperimentConfig("capital", sizes={"n": 10, "T": 5, "N": 60},
                                    p=2, R=30, seed=0))
print("eps     K  mean objective  beta")
for eps in (0.0, 0.005, 0.01, 0.02):
    for K in (2, 60):
        est = beta_for_cell(setup, K, eps)
        print(f"{eps:<7} {K:<2} {est.mean_objective:<15.4f} {est.beta_hat:.3f}")
