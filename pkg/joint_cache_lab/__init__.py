"""
Joint Cache Lab - trace-driven cache simulation and policy learning

Simulates set-associative caches over memory access traces, labels every
line insertion with Belady's MIN oracle, and trains replacement and prefetch
models in three regimes: independent baselines, a joint encoder, and
contrastive pretraining followed by head training.

Usage:
    from joint_cache_lab.trace import gen_synthetic, GeneratorKind, GeneratorParams
    from joint_cache_lab.cachesim import CacheConfig, LruPolicy, simulate
    from joint_cache_lab.oracle import belady_simulate
    from joint_cache_lab.pipeline import prepare_dataset, train_model

    trace = gen_synthetic(GeneratorKind.COUPLED, GeneratorParams(phases=20, phase_len=50), seed=1)
    result = simulate(trace, CacheConfig(num_sets=16, associativity=1), LruPolicy())

    # Command line
    $ jcl gen --kind coupled --phases 20 --phase-len 50 --seed 1 -o coupled.csv
    $ jcl label coupled.csv -o labels.csv
    $ jcl train coupled.csv --labels labels.csv --mode joint -o runs/
"""

__version__ = "0.3.1"
__license__ = "Apache-2.0"

# Sub-packages load lazily. `jcl gen` loads the trace package only; the
# model and training packages load inside the commands that use them.

__all__ = [
    "trace",
    "cachesim",
    "oracle",
    "features",
    "nnkit",
    "models",
    "pipeline",
    "__version__",
]


def __getattr__(name):
    """Lazy import sub-packages only when accessed."""
    if name == "trace":
        from joint_cache_lab import trace
        return trace
    elif name == "cachesim":
        from joint_cache_lab import cachesim
        return cachesim
    elif name == "oracle":
        from joint_cache_lab import oracle
        return oracle
    elif name == "features":
        from joint_cache_lab import features
        return features
    elif name == "nnkit":
        from joint_cache_lab import nnkit
        return nnkit
    elif name == "models":
        from joint_cache_lab import models
        return models
    elif name == "pipeline":
        from joint_cache_lab import pipeline
        return pipeline
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
