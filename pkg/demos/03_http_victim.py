"""
Attacking a victim over HTTP
============================

Serve the victim on loopback, run the attack through the REST client and
check that the service's own counter agrees with the budget.  The service
counts every row it answers, so probing and evaluation use a second session.
"""
import numpy as np

from tempest import datasets, metrics, victim
from tempest.attack import AttackConfig, run_tempest
from tempest.data import split
from tempest.querygen import GenMode, generate
from tempest.stats import compute_stats

parts = split(datasets.load("cancer"), seed=1)
dep = victim.train_victim(parts.victim_train)
stats = compute_stats(parts.public_pool)

with victim.serve(dep, "127.0.0.1:0") as svc:
    client = victim.RemoteVictim(svc.url, session="attack")
    other = victim.RemoteVictim(svc.url, session="eval")
    print("service", svc.url, client.health())
    print("classes", client.class_names)

    # same answers as calling the deployment directly
    probe = generate(stats, GenMode("genvar", seed=5), 50)
    gap = np.max(np.abs(other.query(probe) - victim.respond(dep, probe)))
    print("max |http - in-process| =", gap)

    res = run_tempest(client, stats, None, AttackConfig(budget=500, seed=1))
    ev = metrics.evaluate(res.model, res.scaler, other, parts.validation)
    print(f"substitute accuracy {ev.accuracy:.3f}, fidelity {ev.fidelity:.3f}")
    sessions = svc.metrics()["sessions"]
    print("server counts", sessions)
    assert sessions["attack"] == res.queries_used == 500
    print("paths touched", sorted({p for _, p in svc.requests}))
