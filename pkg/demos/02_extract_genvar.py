"""
Extracting a substitute from statistics alone
=============================================

Query the victim with rows drawn from the published statistics and train a
substitute on its soft labels.  The same victim is attacked with GenVar,
GenMin and the data-free baseline at a few budgets.
"""
from tempest import datasets, metrics, victim
from tempest.attack import DATA_FREE_BASELINE, AttackConfig, run_baseline, run_tempest
from tempest.data import split
from tempest.stats import compute_stats

parts = split(datasets.load("diabetes"), seed=0)
dep = victim.train_victim(parts.victim_train)
stats = compute_stats(parts.public_pool)
print("victim accuracy", round(metrics.accuracy(dep.model, dep.scaler, parts.validation), 4))

print(f"{'strategy':10s} {'budget':>6s} {'acc':>6s} {'fid':>6s}")
for budget in (20, 100, 500, 2500):
    for mode in ("genvar", "genmin", "datafree"):
        access = victim.InProcessVictim(dep)
        cfg = AttackConfig(gen_mode=mode, budget=budget, seed=0)
        if mode == "datafree":
            res = run_baseline(access, DATA_FREE_BASELINE, None, budget, cfg)
        else:
            res = run_tempest(access, stats, None, cfg)
        ev = metrics.evaluate(res.model, res.scaler, access, parts.validation)
        # evaluation traffic is not charged to the budget
        assert access.queries == budget
        print(f"{mode:10s} {budget:6d} {ev.accuracy:6.3f} {ev.fidelity:6.3f}")
