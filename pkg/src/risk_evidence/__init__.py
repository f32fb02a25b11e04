"""Evidence extraction for suicide-risk assessments.

Turns collections of user posts into reviewable evidence: verbatim span
highlights (from an explainable tf-idf + logistic-regression route or from
prompted language-model output) and per-user summaries (graph-ranked
extractive or LLM abstractive), plus the matching evaluation metrics and
statistical analyses.
"""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    Corpus,
    CorpusFormatError,
    Post,
    RiskLabel,
    Sentence,
    Span,
    UserRecord,
    load_corpus,
    map_risk_to_binary,
    split_sentences,
    word_tokenize,
)
from .evidence import Highlight, HighlightConfig, dedup_highlights  # noqa: F401
from .features import SparseVector, TfidfConfig, TfidfModel, fit_tfidf, transform  # noqa: F401
from .model import (  # noqa: F401
    ExplainerBaseline,
    FeatureScore,
    LogRegModel,
    SelectionPolicy,
    TrainConfig,
    cross_validate,
    fit_logreg,
    predict_proba,
    select_important,
    shap_scores,
)
from .summarize import Summary, SummaryConfig, extractive_summary, textrank  # noqa: F401
