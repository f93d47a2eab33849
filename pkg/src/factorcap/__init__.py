"""factorcap: a desk-scale lab for factor-conditioned speaking-style captioning.

Synthesizes a style-caption corpus, trains a small conditional autoregressive
language model from scratch, decodes with greedy / sampling / greedy-then-
sampling strategies, and scores captions with BLEU/ROUGE/METEOR-style metrics,
diversity metrics, factor classification accuracy, and paired bootstrap tests.
"""

from .corpus import (
    CorpusSpec,
    Dataset,
    Example,
    FccMode,
    SchemaError,
    build_fcc_target,
    build_fcc_targets,
    default_templates,
    generate_dataset,
    load_templates,
    read_jsonl,
    synthesize_style_vector,
    write_jsonl,
)
from .decoding import (
    DecodeConfig,
    DecodeResult,
    Strategy,
    decode_corpus,
    filter_top_k_top_p,
    greedy_decode,
    gts_decode,
    sample_decode,
)
from .estimator import ConditionalCaptioner, FactorLexiconExtractor
from .factors import (
    FactorLexicon,
    FactorTuple,
    Gender,
    MalformedPhraseError,
    Pitch,
    Speed,
    UnknownGenderError,
    Volume,
    default_lexicon,
    extract_factors_from_caption,
    parse_factor_phrase,
    render_factor_phrase,
)
from .metrics import (
    EvalReport,
    FactorSource,
    bleu4,
    bootstrap_compare,
    bootstrap_compare_corpus,
    distinct_n,
    evaluate,
    evaluate_files,
    factor_accuracy,
    meteor_lite,
    rouge_l,
)
from .model import (
    ConditionalLm,
    ModelConfig,
    TargetMode,
    TrainConfig,
    Vocabulary,
    build_vocabulary,
    forward,
    load_checkpoint,
    loss_and_gradients,
    save_checkpoint,
    train,
)
from .text import DELIMITER, detokenize, tokenize

__version__ = "0.1.0"
