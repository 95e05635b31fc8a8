"""End to end on a small task: bind, compile, inspect, train, evaluate.

A three-class point-cloud classifier expressed as a theory: the labeled
axiom is the entire training objective, and the compiled plan's fused loss
is the familiar cross-entropy.
"""

import numpy as np

from dasl.compiler import compile, evaluate, explain, fuse_loss
from dasl.interp import bind_theory
from dasl.lang import check_theory, parse_theory
from dasl.train import TrainConfig, evaluate_classifier, train

SOURCE = """
sort Point dim 8;
sort Label card 3;
rel classify : Point out 3 mlp 16 act relu;
data Train : Point x Label from "memory";
axiom labels : forall (p, y): Train . pi[y](classify(p));
"""

rng = np.random.default_rng(7)
protos = rng.normal(size=(3, 8)) * 2.0
labels = rng.integers(3, size=240)
points = protos[labels] + rng.normal(size=(240, 8))
train_x, train_y = points[:180], labels[:180]
test_x, test_y = points[180:], labels[180:]

theory = check_theory(parse_theory(SOURCE))
interp = bind_theory(theory, data={"Train": (train_x, train_y)}, seed=0)
plan = compile(theory, interp, batch_size=32, seed=0)

print("=== the evaluation plan ===")
print(explain(plan))

print("\n=== one forward pass ===")
batch = evaluate(plan)
print(f"root logit of a random model on one batch: {batch.root.item():+.3f}")
loss0, _ = fuse_loss(plan).evaluate()
print(f"fused loss (sum of per-example cross-entropies): {loss0.item():.3f}")

print("\n=== training ===")
config = TrainConfig(iterations=600, batch_size=32, lr=5e-3, cadence=200,
                     seed=0, eval_symbol="classify")
state = train(plan, config, test_set=(test_x, test_y))
for row in state.metrics:
    print(f"iteration {row['iteration']:>4}: loss {row['loss']:8.3f} "
          f"test accuracy {row['test_accuracy']:.3f}")

final = evaluate_classifier(interp.symbols["classify"], test_x, test_y)
print(f"\nfinal test accuracy: {final:.3f}")
