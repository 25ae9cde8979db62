"""
Student record schema.

- Static demographics: 17 categorical fields, one-hot encoded to 120 slots
- Temporal performance: 20 variables per semester, in the order below
- Advising notes: semester-stamped visits with reason, result and text
- Labels for the five retention tasks (FD, TD, ND, DD, CD)
"""
import math
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

DATASET_SCHEMA_VERSION = 1

# ── Static demographics (one-hot widths sum to 120) ──────────
STATIC_FIELDS: Dict[str, List[str]] = {
    "birth_year": [str(y) for y in range(1980, 2004)],
    "age_band": ["17-18", "19-20", "21-22", "23-25", "26-30", "31+"],
    "gender": ["male", "female"],
    "religion": ["r1", "r2", "r3", "r4", "r5"],
    "starting_major": [
        "cse", "eee", "civil", "mech", "bba", "economics",
        "english", "law", "pharmacy", "architecture", "math", "physics",
    ],
    "transferred_credits": ["none", "1-15", "16-30", "31+"],
    "blood_group": ["a+", "a-", "b+", "b-", "ab+", "ab-", "o+", "o-"],
    "birth_place": [f"region_{i}" for i in range(10)],
    "permanent_address": [f"district_{i}" for i in range(10)],
    "local_address": [f"area_{i}" for i in range(10)],
    "secondary_school_grade": ["a+", "a", "a-", "b", "c"],
    "higher_school_grade": ["a+", "a", "a-", "b", "c"],
    "marital_status": ["single", "married", "other"],
    "source_of_finance": ["family", "scholarship", "loan", "self_employed", "sponsor"],
    "part_full_time": ["full_time", "part_time"],
    "local_guardian": ["parent", "relative", "none"],
    "parents_income": ["very_low", "low", "lower_middle", "middle", "upper_middle", "high"],
}
STATIC_WIDTH = sum(len(v) for v in STATIC_FIELDS.values())
assert STATIC_WIDTH == 120

# ── Temporal performance, one vector per semester ────────────
PERFORMANCE_FEATURES: List[str] = [
    "new_credits_taken",
    "credits_retaken",
    "passing_credits",
    "failed_credits",
    "overall_attendance",
    "semester_starting_gpa",
    "semester_gpa",
    "semester_ending_gpa",
    "exams_unattended_since_admission",
    "exams_unattended_this_semester",
    "counselling_scheduled",
    "payment_due_this_semester",
    "payment_dues_since_admission",
    "study_duration",
    "blocked_next_semester",
    "blocks_since_admission",
    "scholarship_amount",
    "accommodation_on_campus",
    "total_scholarship",
    "average_scholarship_per_semester",
]
PERFORMANCE_WIDTH = len(PERFORMANCE_FEATURES)

# ── Dropout causes (index = class id) ────────────────────────
CAUSES: List[str] = [
    "financial",
    "family",
    "marriage",
    "physically_ill",
    "death_of_family_member",
    "personal",
    "death",
    "accident",
    "struggling_with_grades",
    "covid_family_death",
    "covid_financial",
    "covid_online_class_hardship",
    "internship",
    "traveling",
    "mentally_ill",
]
N_CAUSES = len(CAUSES)

VISIT_REASONS: List[str] = [
    "course_planning",
    "registration_block",
    "attendance_warning",
    "payment_due",
    "grade_review",
    "personal_matter",
    "career_advice",
]
NO_RESULT = "no_result"

# dropout may happen up to this many semesters after the last observed one
DURATION_HORIZON = 2

Gender = Literal["male", "female"]


def onehot_encode(demographics: Dict[str, str]) -> List[int]:
    """One-hot encode the categorical demographic map into 120 slots."""
    onehot: List[int] = []
    for name, categories in STATIC_FIELDS.items():
        value = demographics.get(name)
        if value not in categories:
            raise ValueError(
                f"static field {name!r} has unknown value {value!r}; valid: {categories}"
            )
        onehot.extend(1 if c == value else 0 for c in categories)
    return onehot


class NoteDocument(BaseModel):
    note_id: str
    timestamp: int = Field(ge=1, description="semester index, 1-based")
    reason: str
    result: str = NO_RESULT
    text: str

    @field_validator("result")
    @classmethod
    def _known_result(cls, v: str) -> str:
        if v != NO_RESULT and v not in CAUSES:
            raise ValueError(f"unknown counselling result {v!r}; valid: {[NO_RESULT] + CAUSES}")
        return v


class TaskLabels(BaseModel):
    """
    y1 future dropout (1 = dropout), y2 type (1 = temporary, 0 = permanent),
    y3 next-semester dropout (1 = yes), y4 duration in semesters,
    y5 cause index. y2..y5 are undefined (None) when y1 = 0.
    """

    y1: int = Field(ge=0, le=1)
    y2: Optional[int] = Field(None, ge=0, le=1)
    y3: Optional[int] = Field(None, ge=0, le=1)
    y4: Optional[float] = Field(None, ge=0.0)
    y5: Optional[int] = None

    @field_validator("y5")
    @classmethod
    def _known_cause(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and not 0 <= v < N_CAUSES:
            listing = ", ".join(f"{i}={c}" for i, c in enumerate(CAUSES))
            raise ValueError(f"cause index {v} out of range; valid causes: {listing}")
        return v

    @model_validator(mode="after")
    def _hierarchy(self) -> "TaskLabels":
        downstream = (self.y2, self.y3, self.y4, self.y5)
        if self.y1 == 0 and any(v is not None for v in downstream):
            raise ValueError("labels y2..y5 must be undefined when y1 = 0 (no dropout)")
        if self.y1 == 1:
            missing = [name for name in ("y2", "y5") if getattr(self, name) is None]
            if self.y2 == 1:
                missing += [name for name in ("y3", "y4") if getattr(self, name) is None]
            if missing:
                kind = "temporary dropout" if self.y2 == 1 else "dropout"
                raise ValueError(f"{kind} requires labels {', '.join(missing)}")
        return self


class StudentRecord(BaseModel):
    schema_version: int = DATASET_SCHEMA_VERSION
    id: str
    gender: Gender
    demographics: Dict[str, str]
    static: List[int]
    performance: List[List[float]]
    notes: List[NoteDocument] = Field(default_factory=list)
    labels: TaskLabels
    synthetic: bool = False

    @field_validator("static")
    @classmethod
    def _static_shape(cls, v: List[int]) -> List[int]:
        if len(v) != STATIC_WIDTH:
            raise ValueError(f"static one-hot must have length {STATIC_WIDTH}, got {len(v)}")
        if any(x not in (0, 1) for x in v):
            raise ValueError("static one-hot entries must be 0 or 1")
        return v

    @field_validator("performance")
    @classmethod
    def _performance_shape(cls, v: List[List[float]]) -> List[List[float]]:
        if not v:
            raise ValueError("performance sequence must contain at least one semester")
        for i, row in enumerate(v):
            if len(row) != PERFORMANCE_WIDTH:
                raise ValueError(
                    f"semester {i + 1} has {len(row)} performance values, expected {PERFORMANCE_WIDTH}"
                )
            if not all(math.isfinite(x) for x in row):
                raise ValueError(f"semester {i + 1} has non-finite performance values")
        return v

    @model_validator(mode="after")
    def _consistency(self) -> "StudentRecord":
        if self.demographics.get("gender") != self.gender:
            raise ValueError("gender must match demographics['gender']")
        if onehot_encode(self.demographics) != self.static:
            raise ValueError("static one-hot does not match the demographic map")
        stamps = [n.timestamp for n in self.notes]
        if stamps != sorted(stamps):
            raise ValueError("note timestamps must be non-decreasing")
        y = self.labels
        if y.y1 == 1 and y.y5 is None:
            raise ValueError("cause label y5 is required for dropout records")
        if y.y4 is not None and y.y4 > len(self.performance) + DURATION_HORIZON:
            raise ValueError(
                f"duration {y.y4} exceeds observed semesters {len(self.performance)} "
                f"+ horizon {DURATION_HORIZON}"
            )
        return self

    @property
    def note_count(self) -> int:
        return len(self.notes)


class CohortSpec(BaseModel):
    """Marginals of a synthetic cohort; defaults follow the source database."""

    n_students: int = Field(2000, ge=0)
    dropout_rate: float = Field(0.14, ge=0.0, le=1.0)
    temporary_share: float = Field(0.74, ge=0.0, le=1.0)
    male_share: float = Field(0.76, ge=0.0, le=1.0)
    signal_strength: float = Field(4.0, ge=0.0)
    # raises the unprivileged group's dropout rate, lowers the privileged one's
    gender_bias: float = Field(0.0, ge=0.0, le=1.0)
    max_semesters: int = Field(12, ge=1)
    seed: int = 0


Dataset = List[StudentRecord]
