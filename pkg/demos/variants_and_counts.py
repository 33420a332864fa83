"""How the five connectivity variants differ, and what that costs in parameters.

Run with ``python3 demos/variants_and_counts.py``.
"""

from mcmult.config import ModelConfig, Variant
from mcmult.connectivity import build_connectivity
from mcmult.model import count_parameters

# %% Which sibling positions each layer reads (B=3 blocks, L=2 CT layers)
for variant in Variant:
    graph = build_connectivity(ModelConfig(blocks=3, layers=2, variant=variant))
    reads = "  ".join(f"{s.position}<-{list(s.sources)}" for s in graph.layers)
    print(f"{variant.value:>10}: {reads}")

# %% Parameter counts at d=8, h=2, B=4, L=3
base = ModelConfig(dim=8, heads=2, blocks=4, layers=3)
for variant in sorted(Variant, key=lambda v: -count_parameters(base.with_(variant=v))):
    print(f"{variant.value:>10}: {count_parameters(base.with_(variant=variant)):>8,d} parameters")

# %% Doubling the model width
for d in (8, 16, 32):
    print(f"d={d:<3} MCMulT has {count_parameters(base.with_(dim=d)):,d} parameters")
