"""Topic modeling by prompting chat LLMs.

Pipeline: ingest and preprocess a corpus, generate per-document topic
labels with few-shot prompts, collapse the raw topics to K (prompt-based
and/or word-similarity merging), build 10-word c-TF-IDF/LLM topic
representations, and evaluate with NPMI, topic diversity, and word
intrusion tasks.
"""

from .collapse import (
    MISCELLANEOUS_LABEL,
    CollapseConfig,
    CTfIdfModel,
    MergeStep,
    TopicState,
    collapse_pbm,
    collapse_wsm,
    compress_to_g,
    compute_ctfidf,
    top_words,
    wsm_similarity,
)
from .corpus import (
    Corpus,
    Document,
    PreprocessConfig,
    corpus_stats,
    default_stopwords,
    ingest,
    load_corpus,
    save_corpus,
)
from .errors import (
    BackendError,
    ConfigError,
    CorpusFormatError,
    DependencyError,
    EmptyCorpusError,
    LlmTopicsError,
    ParseError,
    ParseExhaustedError,
    ScriptMissError,
)
from .evaluation import (
    CooccurrenceStats,
    EvaluationReport,
    IntrusionTask,
    build_cooccurrence,
    evaluate_topics,
    make_intrusion_tasks,
    npmi_pair,
    score_intrusion,
    topic_diversity,
    topic_npmi,
)
from .generation import (
    Demonstration,
    GenerationConfig,
    TopicAssignment,
    build_generation_prompt,
    default_demonstrations,
    generate_topics,
    tally_topics,
)
from .llm_client import (
    ChatMessage,
    HttpBackend,
    LlmClient,
    LlmExchange,
    LlmRequest,
    ReplayBackend,
    RequestDefaults,
    ResponseCache,
    ScriptedBackend,
    ScriptEntry,
    TopicListAnswer,
    parse_topic_list,
    request_cache_key,
)
from .representation import (
    TopicRepresentation,
    candidate_words,
    refine_representation,
)

__version__ = "0.1.0"
