"""
Synthetic student cohorts.

Labels are drawn by exact quota so the marginals of a `CohortSpec`
are reproduced to rounding. Features are generated from templates
conditioned on the labels:

- dropouts lose attendance and accumulate failed credits and payment
  dues towards their last observed semester
- every cause shifts its own subset of performance variables and has
  its own advising-note vocabulary
- permanent dropouts accumulate registration blocks
- next-semester dropouts are blocked from registering in their last
  semester

`signal_strength` s mixes planted effects (weight s/(1+s)) with noise
(weight 1/(1+s)): s = 0 gives pure noise, large s gives clean signal.
"""
import logging
from typing import Dict, List

import numpy as np

from retention.data.schema import (
    CAUSES,
    NO_RESULT,
    PERFORMANCE_FEATURES,
    PERFORMANCE_WIDTH,
    STATIC_FIELDS,
    CohortSpec,
    Dataset,
    NoteDocument,
    StudentRecord,
    TaskLabels,
    onehot_encode,
)

logger = logging.getLogger(__name__)

_F = {name: i for i, name in enumerate(PERFORMANCE_FEATURES)}

# the single feature a depth-1 rule can use to separate dropouts
PLANTED_FEATURE = "overall_attendance"

_BASE = np.array([
    0.75, 0.10, 0.70, 0.10, 0.85, 0.70, 0.70, 0.70, 0.10, 0.05,
    0.20, 0.20, 0.10, 0.00, 0.05, 0.05, 0.30, 0.50, 0.30, 0.30,
])
_NOISE_SD = np.full(PERFORMANCE_WIDTH, 0.08)
_NOISE_SD[_F["study_duration"]] = 0.0
_CUMULATIVE = [
    _F["exams_unattended_since_admission"],
    _F["payment_dues_since_admission"],
    _F["blocks_since_admission"],
    _F["total_scholarship"],
]

_DROPOUT_EFFECT: Dict[str, float] = {
    "overall_attendance": -0.50,
    "failed_credits": +0.30,
    "payment_dues_since_admission": +0.30,
}

_CAUSE_EFFECT: Dict[str, Dict[str, float]] = {
    "financial": {"payment_due_this_semester": +0.6, "scholarship_amount": -0.3},
    "family": {"counselling_scheduled": +0.4, "accommodation_on_campus": -0.5},
    "marriage": {"new_credits_taken": -0.4, "passing_credits": -0.2},
    "physically_ill": {"exams_unattended_this_semester": +0.6, "overall_attendance": -0.2},
    "death_of_family_member": {"exams_unattended_this_semester": +0.3, "counselling_scheduled": +0.3},
    "personal": {"counselling_scheduled": +0.6},
    "death": {"overall_attendance": -0.4, "exams_unattended_this_semester": +0.4},
    "accident": {"exams_unattended_since_admission": +0.6},
    "struggling_with_grades": {"failed_credits": +0.6, "semester_gpa": -0.5},
    "covid_family_death": {"credits_retaken": +0.4, "counselling_scheduled": +0.3},
    "covid_financial": {"payment_due_this_semester": +0.4, "total_scholarship": -0.4},
    "covid_online_class_hardship": {"overall_attendance": -0.3, "passing_credits": -0.4},
    "internship": {"new_credits_taken": -0.3, "accommodation_on_campus": -0.3},
    "traveling": {"accommodation_on_campus": -0.6},
    "mentally_ill": {"semester_ending_gpa": -0.4, "exams_unattended_this_semester": +0.2},
}

# relative frequency of each cause among dropouts
_CAUSE_PRIOR = np.array([
    0.16, 0.10, 0.06, 0.06, 0.05, 0.07, 0.01, 0.04,
    0.12, 0.04, 0.07, 0.06, 0.06, 0.04, 0.06,
])
_CAUSE_PRIOR = _CAUSE_PRIOR / _CAUSE_PRIOR.sum()

# semesters between the last observed one and the dropout
_DELAY_PRIOR = np.array([0.5, 0.3, 0.2])

_CAUSE_NOTES: Dict[str, List[str]] = {
    "financial": ["Student cannot afford tuition and the payment due keeps growing.",
                  "Family income dropped; asked about a loan to cover fees."],
    "family": ["Student needed at home to support the family.",
               "Parents asked the student to move back home."],
    "marriage": ["Student is getting married and reducing the course load.",
                 "Wedding preparations and new spouse responsibilities."],
    "physically_ill": ["Student was in hospital with a long illness.",
                       "Recurring illness, missed exams for treatment."],
    "death_of_family_member": ["Bereavement after a close relative passed away.",
                               "Student attended a funeral and missed several weeks."],
    "personal": ["Student raised private personal matters.",
                 "Personal issues the student preferred not to detail."],
    "death": ["Record closed, student deceased.",
              "Deceased; file forwarded to the registrar."],
    "accident": ["Student injured in a road accident.",
                 "Recovering from an accident, mobility limited."],
    "struggling_with_grades": ["Student is failing several courses and is on probation.",
                               "Grades keep dropping, retakes are not helping."],
    "covid_family_death": ["A relative died of covid and the student is grieving.",
                           "Covid loss in the family, student overwhelmed."],
    "covid_financial": ["Covid cost the family its income, fees unpaid.",
                        "Parent lost job during covid, cannot pay."],
    "covid_online_class_hardship": ["Online classes impossible, no connectivity at home.",
                                    "Remote learning hardship, no device for online classes."],
    "internship": ["Student took a full time internship with an employer.",
                   "Internship placement conflicts with classes."],
    "traveling": ["Student is travelling abroad, visa pending.",
                  "Long travel planned, will be abroad."],
    "mentally_ill": ["Student reports anxiety and depression.",
                     "Severe stress and anxiety, referred to counselling."],
}
_CAUSE_REASON: Dict[str, str] = {
    "financial": "payment_due", "covid_financial": "payment_due",
    "struggling_with_grades": "grade_review", "covid_online_class_hardship": "attendance_warning",
    "physically_ill": "attendance_warning", "accident": "attendance_warning",
}
_ROUTINE_NOTES = [
    "Discussed course plan for next semester. Student is on track.",
    "Reviewed credit load and registration options.",
    "Student asked about electives and career paths.",
    "Checked attendance and grades, no concerns raised.",
]
_ROUTINE_REASONS = ["course_planning", "career_advice", "course_planning", "grade_review"]
_TYPE_NOTES = {1: "Student plans to return after a break.", 0: "Student does not plan to return."}
_RISK_NOTE = "Student may not continue studies."


def _quota(rng: np.random.Generator, indices: np.ndarray, share: float) -> np.ndarray:
    """Pick round(share·len) of `indices` uniformly at random."""
    count = int(round(share * len(indices)))
    return rng.permutation(indices)[:count]


def _group_rates(spec: CohortSpec) -> Dict[str, float]:
    m, d, b = spec.male_share, spec.dropout_rate, spec.gender_bias
    return {
        "female": float(np.clip(d + b * m, 0.0, 1.0)),
        "male": float(np.clip(d - b * (1.0 - m), 0.0, 1.0)),
    }


def _demographics(rng: np.random.Generator, gender: str, cause: str | None, weight: float) -> Dict[str, str]:
    demo = {name: values[int(rng.integers(len(values)))] for name, values in STATIC_FIELDS.items()}
    demo["gender"] = gender
    if cause in ("financial", "covid_financial") and rng.random() < weight:
        demo["parents_income"] = ["very_low", "low"][int(rng.integers(2))]
        demo["source_of_finance"] = "loan"
    if cause == "marriage" and rng.random() < weight:
        demo["marital_status"] = "married"
    if cause is not None and rng.random() < 0.5 * weight:
        demo["higher_school_grade"] = ["b", "c"][int(rng.integers(2))]
    return demo


def _performance(
    rng: np.random.Generator,
    semesters: int,
    spec: CohortSpec,
    labels: TaskLabels,
    delay: int | None,
    planted: bool = True,
) -> List[List[float]]:
    s = spec.signal_strength
    weight, noise = s / (1.0 + s), 2.0 / (1.0 + s)
    rows = np.tile(_BASE, (semesters, 1))
    rows += noise * rng.normal(0.0, 1.0, size=rows.shape) * _NOISE_SD
    steps = np.arange(1, semesters + 1)
    rows[:, _CUMULATIVE] += 0.02 * steps[:, None]
    rows[:, _F["study_duration"]] = steps / spec.max_semesters

    if labels.y1 == 1 and planted:
        phase = steps / semesters
        for name, shift in _DROPOUT_EFFECT.items():
            rows[:, _F[name]] += weight * shift * phase
        for name, shift in _CAUSE_EFFECT[CAUSES[labels.y5]].items():
            rows[:, _F[name]] += weight * shift * phase
        if labels.y2 == 0:
            rows[:, _F["blocks_since_admission"]] += weight * 0.6 * phase
            rows[:, _F["semester_gpa"]] -= weight * 0.3 * phase
        if delay == 0 and rng.random() < 0.5 + 0.5 * weight:
            rows[-1, _F["blocked_next_semester"]] = 1.0
        elif delay == 1:
            rows[-1, _F["exams_unattended_this_semester"]] += weight * 0.3
    if labels.y1 == 0 or delay != 0 or not planted:
        # occasional spurious blocks, more often when the signal is weak
        if rng.random() < 0.2 * (1.0 - weight):
            rows[-1, _F["blocked_next_semester"]] = 1.0
    return rows.tolist()


def _notes(
    rng: np.random.Generator,
    student_id: str,
    semesters: int,
    spec: CohortSpec,
    labels: TaskLabels,
    planted: bool = True,
) -> List[NoteDocument]:
    s = spec.signal_strength
    weight = s / (1.0 + s)
    notes: List[NoteDocument] = []

    def add(semester: int, reason: str, text: str, result: str = NO_RESULT) -> None:
        notes.append(NoteDocument(
            note_id=f"{student_id}-n{len(notes)}",
            timestamp=semester,
            reason=reason,
            result=result,
            text=text,
        ))

    for semester in range(1, semesters + 1):
        if rng.random() < 0.6:
            k = int(rng.integers(len(_ROUTINE_NOTES)))
            add(semester, _ROUTINE_REASONS[k], _ROUTINE_NOTES[k])
        if labels.y1 == 1 and planted and semester >= semesters - 1 and rng.random() < 0.3 + 0.6 * weight:
            cause = CAUSES[labels.y5]
            phrase = _CAUSE_NOTES[cause][int(rng.integers(2))]
            text = " ".join([phrase, _RISK_NOTE, _TYPE_NOTES[labels.y2]])
            result = cause if semester == semesters and rng.random() < 0.5 else NO_RESULT
            add(semester, _CAUSE_REASON.get(cause, "personal_matter"), text, result)
        elif (labels.y1 == 0 or not planted) and rng.random() < 0.3 * (1.0 - weight):
            # false alarm: worrying vocabulary on a student who stays
            cause = CAUSES[int(rng.integers(len(CAUSES)))]
            add(semester, "personal_matter", _CAUSE_NOTES[cause][int(rng.integers(2))])
    return notes


def generate_cohort(spec: CohortSpec) -> Dataset:
    """Draw a cohort whose label marginals match `spec`; deterministic under `spec.seed`."""
    n = spec.n_students
    if n == 0:
        return []
    rng = np.random.default_rng(spec.seed)

    genders = np.array(["female"] * n, dtype=object)
    genders[_quota(rng, np.arange(n), spec.male_share)] = "male"

    dropout = np.zeros(n, dtype=int)
    # dropouts above the base rate carry the label only; their features look
    # like a student who stays, so the excess is learnable only through gender
    label_only = np.zeros(n, dtype=bool)
    for group, rate in _group_rates(spec).items():
        members = np.flatnonzero(genders == group)
        chosen = _quota(rng, members, rate)
        dropout[chosen] = 1
        if rate > spec.dropout_rate:
            label_only[_quota(rng, chosen, (rate - spec.dropout_rate) / rate)] = True

    dropouts = np.flatnonzero(dropout == 1)
    temporary = np.zeros(n, dtype=int)
    temporary[_quota(rng, dropouts, spec.temporary_share)] = 1

    records: Dataset = []
    for i in range(n):
        student_id = f"s{spec.seed}-{i:06d}"
        semesters = int(rng.integers(1, spec.max_semesters + 1))
        if dropout[i]:
            cause = int(rng.choice(len(CAUSES), p=_CAUSE_PRIOR))
            delay = int(rng.choice(len(_DELAY_PRIOR), p=_DELAY_PRIOR))
            labels = TaskLabels(
                y1=1,
                y2=int(temporary[i]),
                y3=int(delay == 0),
                y4=float(semesters + delay),
                y5=cause,
            )
        else:
            cause, delay = None, None
            labels = TaskLabels(y1=0)

        planted = not label_only[i]
        weight = spec.signal_strength / (1.0 + spec.signal_strength)
        demo_cause = CAUSES[cause] if cause is not None and planted else None
        demo = _demographics(rng, str(genders[i]), demo_cause, weight)
        records.append(StudentRecord(
            id=student_id,
            gender=str(genders[i]),
            demographics=demo,
            static=onehot_encode(demo),
            performance=_performance(rng, semesters, spec, labels, delay, planted),
            notes=_notes(rng, student_id, semesters, spec, labels, planted),
            labels=labels,
        ))

    logger.info(
        f"generate_cohort: {n} students, {len(dropouts)} dropouts "
        f"({len(dropouts) / n:.1%}), seed={spec.seed}"
    )
    return records


def cohort_summary(dataset: Dataset) -> List[Dict[str, object]]:
    """Per-gender rows with the columns of the source database description."""
    rows = []
    total = len(dataset)
    for group in ("female", "male", None):
        members = [r for r in dataset if group is None or r.gender == group]
        drop = [r for r in members if r.labels.y1 == 1]
        temp = [r for r in drop if r.labels.y2 == 1]
        rows.append({
            "gender": (group or "total").capitalize(),
            "count": len(members),
            "count_share": len(members) / total if total else 0.0,
            "dropout": len(drop),
            "dropout_rate": len(drop) / len(members) if members else 0.0,
            "temporary": len(temp),
            "temporary_share": len(temp) / len(drop) if drop else 0.0,
            "permanent": len(drop) - len(temp),
            "permanent_share": (len(drop) - len(temp)) / len(drop) if drop else 0.0,
        })
    return rows
