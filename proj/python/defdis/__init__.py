"""Disentangled representation laboratory for natural-language definitions.

The heavy lifting lives in the compiled extension; this package re-exports
its surface.
"""

from ._core import (  # noqa: F401
    ConfigError,
    DataError,
    DefdisError,
    DimensionError,
    FactorMatrix,
    Grouping,
    ParseError,
    Record,
    UsageError,
    VaeModel,
    Vocab,
    __version__,
    bleu,
    build_seeded_vocab,
    builtin_grouping,
    builtin_groupings,
    dominant_role,
    evaluate_all,
    factor_matrix,
    gaussian_kl,
    generate_definition,
    interpolate,
    latent_arithmetic,
    load_checkpoint,
    load_grouping,
    load_jsonl,
    matmul,
    mutual_information,
    perplexity,
    project2d,
    render_svg,
    reparameterize,
    role_names,
    run_cli,
    save_checkpoint,
    save_jsonl,
    seeded_records,
    softmax_cross_entropy,
    split,
    synth_definitional,
    synth_from_json,
    train,
    train_seeded,
    traverse,
)
