"""Compiling the neutral DAG for both execution targets.

The same workflow becomes an Argo-compatible YAML document (HTTP templates
hitting the function endpoints) and a local JSON document the built-in
orchestrator runs. Both are byte-deterministic and pass the syntactic
verifier.
"""

from faasflow import compile_argo, compile_local, verify_compiled
from faasflow.bundled import FIXTURE_CASES, build_truth, fixture_repository

repo = fixture_repository()
dag = build_truth(next(c for c in FIXTURE_CASES if c.case_id == "easy-translate-summary"), repo)

argo = compile_argo(dag)
local = compile_local(dag)

print(f"argo verification: {'clean' if verify_compiled(argo).ok else 'violations!'}")
print(f"local verification: {'clean' if verify_compiled(local).ok else 'violations!'}\n")

print("--- Argo workflow ---")
print(argo.document)
print("--- local workflow ---")
print(local.document)
