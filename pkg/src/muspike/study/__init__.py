from .engine import (
    AMATEUR,
    DATASETS,
    EXPERT,
    GROUPS,
    HUMAN_SOURCE,
    MODEL_SOURCES,
    NORMAL,
    Participant,
    Piece,
    QuotaPlan,
    Response,
    StudyEngine,
    TURING_ANSWERS,
    curate,
    default_workload_caps,
    likert_ids_for,
    questionnaire_for,
)
from .simulate import (
    SimulationReport,
    ensure_cohort,
    make_synthetic_catalog,
    random_score,
    simulate_study,
    synthetic_response,
)
from .storage import init_study, load_study

__all__ = [
    "AMATEUR",
    "DATASETS",
    "EXPERT",
    "GROUPS",
    "HUMAN_SOURCE",
    "MODEL_SOURCES",
    "NORMAL",
    "Participant",
    "Piece",
    "QuotaPlan",
    "Response",
    "StudyEngine",
    "TURING_ANSWERS",
    "curate",
    "default_workload_caps",
    "likert_ids_for",
    "questionnaire_for",
    "SimulationReport",
    "ensure_cohort",
    "make_synthetic_catalog",
    "random_score",
    "simulate_study",
    "synthetic_response",
    "init_study",
    "load_study",
]
