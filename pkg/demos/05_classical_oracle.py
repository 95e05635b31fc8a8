"""The brute-force classical oracle and the agreement machinery.

Crisp finite models evaluate formulas classically; compiling the same
model with +-BIG logits must reproduce every verdict by sign.  This is
the executable form of the soundness/completeness claim at finite scale,
plus the exact batch-additivity of the loss.
"""

import numpy as np

from dasl.compiler import compile
from dasl.interp import bind_theory
from dasl.lang import check_theory, parse_formula, parse_theory
from dasl.oracle import (
    CrispModel,
    agreement_suite,
    default_signature,
    enumerate_models,
    partition_loss_check,
    satisfies_at_threshold,
    tarski_eval,
)

print("=== classical evaluation on a two-element model ===")
model = CrispModel({"D": 2}, {}, {}, {"P": np.array([True, False])})
for text in ("forall x: D . P(x)", "exists x: D . P(x)", "forall x: D . P(x) -> P(x)"):
    print(f"{text:35s} -> {tarski_eval(model, parse_formula(text))}")

print("\n=== model enumeration ===")
sig = check_theory(parse_theory("sort D card 2;\nrel P : D extern P;"))
models = list(enumerate_models(sig, {"D": 2}))
print(f"one unary relation over two elements -> {len(models)} models")

print("\n=== threshold satisfaction through the compiled pipeline ===")
theory = check_theory(parse_theory(
    "sort D card 2;\nrel P : D extern P;\naxiom a : forall x: D . P(x);"))
for bits in ([True, True], [True, False]):
    m = CrispModel({"D": 2}, {}, {}, {"P": np.array(bits)})
    rep = satisfies_at_threshold(m, theory)
    print(f"P = {bits}: loss {rep.loss:10.3e}  satisfied = {rep.satisfied}")

print("\n=== randomized agreement: tarski verdict vs compiled logit sign ===")
result = agreement_suite(default_signature(4), depth=4, trials=200, seed=0)
print(f"{result.passes}/{result.trials} agree")
print("sample transcript line:", result.transcript[0])

print("\n=== sampling-loss additivity: batches sum exactly to the full loss ===")
th = check_theory(parse_theory("""
sort Row dim 6;
rel P : Row mlp 8 act relu;
data Pool : Row from "memory";
axiom a : forall r: Pool . P(r);
"""))
rows = np.random.default_rng(3).normal(size=(64, 6))
plan = compile(th, bind_theory(th, data={"Pool": (rows,)}, seed=4))
for k in (1, 2, 4, 64):
    print(f"k = {k:2d}: max relative deviation {partition_loss_check(plan, k):.2e}")
