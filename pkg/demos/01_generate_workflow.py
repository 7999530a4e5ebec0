"""From a natural-language request to a validated workflow DAG.

Uses the bundled function catalog and a scripted (replay) model backend so
the run is fully deterministic and needs no network. Swap in
RemoteChatBackend.from_env() to drive a real chat-completion service.
"""

from faasflow import LlmGateway, canonical_serialize, generate_workflow, topological_order
from faasflow.bundled import FIXTURE_CASES, author_transcript, fixture_repository
from faasflow.identifier import UserQuery
from faasflow.llm import ScriptedBackend

case = next(c for c in FIXTURE_CASES if c.case_id == "mid-sales-report")
repo = fixture_repository()

# A transcript is a map of prompt digests to canned replies. Here we author
# one from the case's ground truth; in live use the backend is a real model.
transcript = author_transcript(case, repo)
gateway = LlmGateway(ScriptedBackend(transcript))

query = UserQuery(case.query)
print(f"query: {query.text}\n")

dag = generate_workflow(query, repo, gateway, k=5)

print(f"workflow {dag.dag_id}: {len(dag.nodes)} nodes, {len(dag.edges)} edges")
print(f"execution order: {topological_order(dag)}")
print(f"user inputs: {[p.name for p in dag.user_inputs]}\n")
print("canonical document:")
print(canonical_serialize(dag))
