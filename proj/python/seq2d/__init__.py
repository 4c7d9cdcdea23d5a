from ._seq2d import (  # noqa: F401
    BlockMap,
    BlockPartition,
    Cell,
    apply,
    classify_impulse,
    deserialize,
    find_fixed_point,
    iterate,
    load_map,
    make_mlp_map,
    run_compare_config,
    save_map,
    serialize,
)

__all__ = [
    "BlockMap",
    "BlockPartition",
    "Cell",
    "apply",
    "classify_impulse",
    "deserialize",
    "find_fixed_point",
    "iterate",
    "load_map",
    "make_mlp_map",
    "run_compare_config",
    "save_map",
    "serialize",
]
