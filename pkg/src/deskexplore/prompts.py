"""Prompt templates.

Every prompt opens with a ``TASK: <NAME>`` line so that scripted backends can
route on it.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

SELECT_TASK = "TASK: FRONTIER SELECTION"
LISTWISE_TASK = "TASK: LISTWISE FRONTIER SELECTION"
POINTWISE_TASK = "TASK: POINTWISE FRONTIER SCORING"
PAIRWISE_TASK = "TASK: PAIRWISE FRONTIER COMPARISON"
CHUNK_TASK = "TASK: CHUNK CAPTION"
SUMMARY_TASK = "TASK: TRAJECTORY SUMMARY"
REFLECT_TASK = "TASK: RETROSPECTIVE REFLECTION"
MEMORY_TASK = "TASK: WORKING MEMORY"
QUALITY_TASK = "TASK: ABSTRACTION QUALITY"
GRADE_TASK = "TASK: ANSWER GRADING"

REFLECTION_BLOCKS = (
    "Task Understanding",
    "Trajectory",
    "Env-Object Associations",
    "Strategy x Question Type + Directional Priors",
    "Anti-patterns",
)

QUALITY_DIMENSIONS = ("Generality", "Relevance", "Conciseness", "Actionability")


def describe_candidate(view) -> str:
    snap = getattr(view, "snapshot", None)
    if snap is not None:
        return snap.text_render
    parts = [f"direction {round(math.degrees(view.theta)):d}deg"]
    if getattr(view, "cell", None) is not None:
        parts.append(f"anchor cell ({view.cell[0]}, {view.cell[1]})")
    return "; ".join(parts)


def _context_blocks(egocentric: Optional[str], working_memory: str, abstractions: Sequence[str]) -> list:
    out = []
    if egocentric:
        out += ["## Egocentric Forward View", egocentric, ""]
    if working_memory:
        out += ["## Episodic Context", working_memory, ""]
    if abstractions:
        out.append("## Retrospective Experience / Trajectory Abstraction")
        for i, text in enumerate(abstractions, 1):
            out += [f"[Experience {i}]", text]
        out.append("")
    return out


def selection_prompt(
    question: str,
    layer: str,
    candidates: Sequence,
    working_memory: str = "",
    abstractions: Sequence[str] = (),
    egocentric: Optional[str] = None,
) -> str:
    lines = [
        SELECT_TASK,
        "You are an embodied agent exploring an indoor scene to answer a question.",
        "Each turn you pick one frontier, and only one, to explore next.",
        "",
        "## Frontier Types",
        "- Broad-View Frontiers (BVF): coarse sectors around you. Picking one lets you look closer.",
        "- Close-up-View Frontiers (CVF): narrower directions inside the chosen BVF. Picking one moves you there.",
        "",
        "## Supporting Context (each block appears only when available)",
        "- Egocentric Forward View: what lies straight ahead; a local reference only.",
        "- Episodic Context: facts about earlier steps of this episode. Use it to skip covered ground.",
        "- Retrospective Experience / Trajectory Abstraction: lessons distilled from finished episodes on similar tasks.",
        "  Pull out their directional tendencies, region ordering and pitfalls, and let them bias the choice.",
        "",
        "## Rules",
        f"- Only {layer} candidates are offered this turn.",
        "- Ground the reasoning in concrete cues: labels, walls, openings, depth.",
        "- A choice is mandatory even if no candidate looks promising.",
        f"- Give the rationale first, then the decision alone on the last line as `{layer} i`.",
        "",
        "## Question",
        question,
        "",
        "## Frontier Candidates",
    ]
    for i, view in enumerate(candidates):
        lines += [f"{layer} {i}:", describe_candidate(view), ""]
    lines += _context_blocks(egocentric, working_memory, abstractions)
    lines += [
        "## Reasoning Procedure",
        "Step 0: Restate the task and confirm that exactly one frontier of this type must be chosen.",
        "Step 1: From the episodic context, note which regions are covered and which are still unseen.",
        "Step 2: From any abstraction or experience, distil one or two rules that bear on this question.",
        "Step 3: Go through the candidates one at a time against novelty, cues and those rules.",
        f"FINAL: Print only the decision line, `{layer} i`.",
    ]
    return "\n".join(lines)


def listwise_prompt(question: str, candidates: Sequence, working_memory: str = "", abstractions: Sequence[str] = ()) -> str:
    lines = [
        LISTWISE_TASK,
        "You are an embodied agent exploring an indoor scene to answer a question.",
        "All frontier candidates are listed below. Choose the single most informative one.",
        "",
        "## Question",
        question,
        "",
        "## Frontier Candidates",
    ]
    for i, view in enumerate(candidates):
        lines += [f"FRONTIER {i}:", describe_candidate(view), ""]
    lines += _context_blocks(None, working_memory, abstractions)
    lines.append("Give a short rationale, then the decision alone on the last line as `FRONTIER i`.")
    return "\n".join(lines)


def pointwise_prompt(question: str, view, working_memory: str = "", abstractions: Sequence[str] = ()) -> str:
    lines = [
        POINTWISE_TASK,
        "You are an embodied agent exploring an indoor scene to answer a question.",
        "Judge whether exploring this single frontier would help answer the question.",
        "",
        "## Question",
        question,
        "",
        "## Frontier",
        describe_candidate(view),
        "",
    ]
    lines += _context_blocks(None, working_memory, abstractions)
    lines.append("End with a line `SCORE: s`, where s is a number in [0, 1]; higher means more useful.")
    return "\n".join(lines)


def pairwise_prompt(question: str, first, second, working_memory: str = "", abstractions: Sequence[str] = ()) -> str:
    lines = [
        PAIRWISE_TASK,
        "You are an embodied agent exploring an indoor scene to answer a question.",
        "Compare the two frontiers and keep the more informative one.",
        "",
        "## Question",
        question,
        "",
        "## OPTION A",
        describe_candidate(first),
        "",
        "## OPTION B",
        describe_candidate(second),
        "",
    ]
    lines += _context_blocks(None, working_memory, abstractions)
    lines.append("Justify briefly, then end with `CHOICE: A` or `CHOICE: B`.")
    return "\n".join(lines)


def chunk_prompt(question: str, outcome: str, step_texts: Sequence[str]) -> str:
    return "\n".join(
        [
            CHUNK_TASK,
            "Condense this segment of an exploration episode into one short paragraph describing how the agent moved.",
            "Direction values are hints for you only; do not copy them into the paragraph.",
            f"Question: {question}",
            f"Outcome: {outcome}",
            "Steps:",
            *step_texts,
        ]
    )


def summary_prompt(captions: Sequence[str]) -> str:
    lines = [
        SUMMARY_TASK,
        "Merge the segment captions below, in order, into one objective account of the whole episode:",
        "regions visited, layout, major changes of direction. Leave out the question and the outcome.",
    ]
    for i, c in enumerate(captions):
        lines.append(f"Segment {i}: {c}")
    return "\n".join(lines)


def reflection_prompt(question: str, trajectory_caption: str, outcome: str) -> str:
    blocks = [
        ("Task Understanding", "2-3 sentences", "what the question asks and what counts as success."),
        ("Trajectory", "8-10 sentences", "entry point, regions crossed, transitions, and why the route changed."),
        ("Env-Object Associations", "4-6 sentences", "generic links between object categories and regions."),
        (
            "Strategy x Question Type + Directional Priors",
            "4-6 sentences",
            "per question type guidance, helpful connectors versus unhelpful dead ends.",
        ),
        ("Anti-patterns", "2-3 sentences", "where and when not to go, and when to stop."),
    ]
    lines = [
        REFLECT_TASK,
        "You look back on a finished exploration episode and write a REFLECTION followed by an ABSTRACTION.",
        "",
        f"Target Task: {question}",
        f"Exploration Trajectory: {trajectory_caption}",
        f"Final Outcome: {outcome}",
        "",
        "Output format, exact and ordered:",
        "REFLECTION:",
    ]
    for i, (name, length, what) in enumerate(blocks):
        lines.append(f"Step {i} ({name}): [{length}] {what}")
    lines += [
        "ABSTRACTION:",
        "Abstraction: [20-24 sentences] one paragraph folding Steps 0-4 into transferable guidance;",
        "no step numbers, no mention of views, images, cameras, BVF or CVF.",
        "",
        "Keep every label exactly as written and in this order. Add no other sections.",
        "Rely only on the task, the caption and the outcome.",
    ]
    return "\n".join(lines)


def working_memory_prompt(snapshot_texts: Sequence[str]) -> str:
    lines = [
        MEMORY_TASK,
        "Summarise the most recent frontier views of this episode in one short paragraph:",
        "regions just explored, cues observed, and directions that remain uncertain.",
    ]
    for i, t in enumerate(snapshot_texts):
        lines += [f"[View {i}]", t]
    return "\n".join(lines)


def quality_prompt(abstraction_text: str, question: str) -> str:
    return "\n".join(
        [
            QUALITY_TASK,
            "Rate the exploration abstraction below from 1 to 5 on each dimension, with a one-line justification.",
            "Generality: transferable principles rather than one episode's story.",
            "Relevance: fit to the original question.",
            "Conciseness: clear, no redundancy.",
            "Actionability: concrete hints for future decisions.",
            f"Original question: {question}",
            "Abstraction:",
            abstraction_text,
            "Answer with four lines `Dimension: score`.",
        ]
    )


def grading_prompt(question: str, ground_truth: str, prediction: str, paraphrases: Sequence[str] = ()) -> str:
    lines = [
        GRADE_TASK,
        "Score how well the prediction matches the reference answer on a 1-5 scale.",
        "5: fully correct and equivalent in meaning. 4: correct with minor omissions.",
        "3: partially correct. 2: mostly wrong but related. 1: unrelated or clearly wrong.",
        "Example: question 'What colour is the sofa?', answer 'blue', prediction 'navy blue' -> 5.",
        "Example: question 'Where is the kettle?', answer 'on the counter', prediction 'in the bedroom' -> 1.",
        f"Question: {question}",
        f"Reference answer: {ground_truth}",
    ]
    if paraphrases:
        lines.append("Equivalent phrasings: " + " | ".join(paraphrases))
    lines += [f"Prediction: {prediction}", "Reply with a single integer from 1 to 5."]
    return "\n".join(lines)
