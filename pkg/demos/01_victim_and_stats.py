"""
Training a victim and publishing statistics
===========================================

Split Pima diabetes 1:3:1, train the victim on its fifth, and look at the
statistics an outsider could compute from the public pool.
"""
import numpy as np

from tempest import datasets, metrics, victim
from tempest.data import split
from tempest.stats import compute_stats

ds = datasets.load("diabetes")
parts = split(ds, seed=0)
for name, part in parts.parts().items():
    print(f"{name:13s} {len(part):4d} rows, class counts {part.class_counts().tolist()}")

# the victim normalizes with its own scaler, which never leaves the deployment
dep = victim.train_victim(parts.victim_train, "standard")
print("victim validation accuracy:", round(metrics.accuracy(dep.model, dep.scaler, parts.validation), 4))
print("public schema keys:", sorted(dep.public_schema()))

# per-feature summaries are all the attacker gets
stats = compute_stats(parts.public_pool)
for spec in ds.schema:
    f = stats.feature(spec.name)
    print(f"{spec.name:25s} mean {f.mean:8.2f}  sd {np.sqrt(f.variance):7.2f}  "
          f"range [{f.min:g}, {f.max:g}]")
