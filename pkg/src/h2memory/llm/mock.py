"""Generative fallback for :class:`MockBackend`.

Each responder fabricates a contract-valid reply from the bindings alone, so
whole pipelines run offline and byte-deterministically. The heuristics are
crude on purpose (word overlap, keyword lists); they keep retrieval and
scoring paths meaningful without pretending to be a language model.
"""

from __future__ import annotations

import hashlib
import json
import re
from typing import Any, Callable, Mapping

from .schemas import ASPECTS

_WORD = re.compile(r"[a-z0-9']+")

# words that come from the fixed log formats and carry no topical signal
_STOP = {
    "the", "user", "and", "a", "an", "to", "of", "on", "in", "for", "with", "from", "via", "at",
    "is", "was", "are", "be", "it", "its", "their", "they", "this", "that", "these", "my", "me",
    "i", "you", "your", "or", "as", "by", "after", "before", "about", "into", "so", "too", "not",
    "no", "yes", "any", "some", "can", "could", "would", "should", "will", "do", "does", "did",
    "performed", "operation", "searched", "viewed", "browsed", "published", "message", "received",
    "sent", "created", "schedule", "named", "completed", "purchase", "product", "platform",
    "content", "main", "summarized", "page", "list", "time", "location", "today", "what", "how",
}

_ASPECT_WORDS = {
    "work": {"work", "manager", "colleague", "office", "presentation", "sales", "launch", "overtime",
             "slides", "meeting", "report", "working", "desk", "team", "leadership", "quarterly"},
    "health": {"sleep", "slept", "knee", "pain", "health", "neck", "physiotherapy", "workout", "stiff",
               "stiffness", "ran", "walked", "running", "clinic", "stretch", "stretches", "blood"},
    "family": {"mom", "dad", "parents", "sister", "wife", "daughter", "family", "birthday",
               "anniversary", "mother", "father", "lily", "kids", "home"},
    "leisure": {"hiking", "hike", "trip", "travel", "weekend", "lake", "lakeside", "trail", "video",
                "restaurant", "art", "drawing", "outdoor", "dinner", "social"},
}

_NEG = re.compile(r"^\s*(no\b|not\b|nope|i said no|that is too|too\b)|\b(don't|do not|dislike|hate|too expensive|too hard|too fancy|distracting)\b", re.I)
_POS = re.compile(r"^\s*(yes|great|perfect|i love|that works|that sounds|sounds|good)\b|\b(i like|love that|exactly what|perfect)\b", re.I)


def _h(*parts: str) -> int:
    return int(hashlib.sha256("\x1f".join(parts).encode("utf-8")).hexdigest()[:12], 16)


def _words(text: str) -> set[str]:
    return {w for w in _WORD.findall(text.lower()) if w not in _STOP and len(w) > 2}


def _dump(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def _truncate(text: str, limit: int) -> str:
    text = " ".join(text.split())
    return text if len(text) <= limit else text[: limit - 3].rstrip() + "..."


def _log_lines(text: str) -> list[tuple[int, str, str]]:
    out = []
    for line in text.splitlines():
        parts = line.split(" | ", 3)
        if len(parts) == 4 and parts[0].startswith("log_"):
            out.append((int(parts[0][4:]), parts[2], parts[3]))
    return out


def _memory_lines(memory: str) -> list[str]:
    return [
        l.strip("- ").strip()
        for l in memory.splitlines()
        if l.strip() and not l.startswith("#") and "no personalized information" not in l
    ]


def _best_line(memory: str, query: str) -> str:
    lines = _memory_lines(memory)
    if not lines:
        return ""
    q = _words(query)
    return max(lines, key=lambda l: (len(q & _words(l)), -lines.index(l)))


def classify_aspects(text: str) -> list[str]:
    w = set(_WORD.findall(text.lower()))
    found = [a for a in ASPECTS if w & _ASPECT_WORDS[a]]
    return found or [ASPECTS[_h(text) % len(ASPECTS)]]


def classify_feedback(text: str) -> str:
    if _NEG.search(text):
        return "neg"
    if _POS.search(text):
        return "pos"
    return "others"


# --------------------------------------------------------------------------- responders


def _log_relations(b: Mapping[str, str], attempt: int) -> str:
    logs = _log_lines(b["logs"])
    lo, hi = (int(x.strip()[4:]) for x in b["logs_id_span"].split("-"))
    out = {}
    for idx, typ, content in logs:
        if not lo <= idx <= hi:
            continue
        earlier = [l for l in logs if l[0] < idx]
        caused, follows = [], []
        mine = _words(content)
        for j, _, other in reversed(earlier):
            if len(mine & _words(other)) >= 2:
                caused.append(f"log_{j}")
                break
        for j, other_typ, _ in reversed(earlier):
            if other_typ == typ and f"log_{j}" not in caused:
                follows.append(f"log_{j}")
                break
        out[f"log_{idx}"] = {"caused_by": caused, "follows": follows}
    return _dump(out)


def _situation(b: Mapping[str, str], attempt: int) -> str:
    contents = [c for _, _, c in _log_lines(b["subgraph"])]
    text = " Then ".join(c.rstrip(".") + "." for c in contents) or "The user had an uneventful period."
    return _dump({"situation": text, "situation_aspects": classify_aspects(text)})


def _background_update(b: Mapping[str, str], attempt: int) -> str:
    situations = json.loads(b["cur_situations"])["situation_list"]
    latest: dict[str, str] = {}
    for s in situations:
        for a in s.get("aspects", []):
            latest[a] = s["situation"]
    aspects = [a for a in ASPECTS if a in latest]
    content = {a: _truncate(f"The user's {a} life recently involves: {latest[a]}", 200) for a in aspects}
    return _dump({"updating_aspects": aspects, "updating_content": content})


def _topic_outline(b: Mapping[str, str], attempt: int) -> str:
    dialogue = json.loads(b["dialogue"])
    turns = sorted(((int(k[5:]), v) for k, v in dialogue.items()), key=lambda kv: kv[0])
    groups: list[list[tuple[int, dict]]] = []
    for idx, turn in turns:
        user = turn["user"].strip()
        if not groups or user.endswith("?") or user.lower().startswith("also"):
            groups.append([])
        groups[-1].append((idx, turn))
    topics = []
    for group in groups:
        solutions = []
        for pos, (idx, turn) in enumerate(group):
            reply = turn["assistant"].strip()
            if reply.endswith("?") or pos + 1 >= len(group):
                continue
            feedback = group[pos + 1][1]["user"]
            solutions.append({
                "solution": reply,
                "user_feedback": feedback,
                "feedback_type": classify_feedback(feedback),
            })
        if not solutions:
            solutions.append({
                "solution": group[-1][1]["assistant"],
                "user_feedback": "no explicit feedback",
                "feedback_type": "others",
            })
        likes = [s["user_feedback"] for s in solutions if s["feedback_type"] == "pos"]
        dislikes = [s["user_feedback"] for s in solutions if s["feedback_type"] == "neg"]
        parts = []
        if likes:
            parts.append("likes: " + " ".join(likes))
        if dislikes:
            parts.append("dislikes: " + " ".join(dislikes))
        topics.append({
            "turn_span": [f"turn_{group[0][0]}", f"turn_{group[-1][0]}"],
            "requirement": group[0][1]["user"],
            "solution_list": solutions,
            "preference": "The user " + "; ".join(parts) if parts else "No clear preference was expressed.",
        })
    return _dump(topics)


def _requirement_rewrite(b: Mapping[str, str], attempt: int) -> str:
    situation = _best_line(b["situation"], b["requirement"])
    req = b["requirement"].strip().rstrip(".?!")
    if situation:
        req = f"{req}, given that {_truncate(situation, 140)}"
    return _dump({"requirement": req})


def _req_abstraction(b: Mapping[str, str], attempt: int) -> str:
    reqs = json.loads(b["requirements"])
    words = [w for w in _WORD.findall(reqs[0].lower()) if w not in _STOP][:5]
    return _dump({"general_requirement": " ".join(words) or "general advice"})


def _pref_abstraction(b: Mapping[str, str], attempt: int) -> str:
    prefs = json.loads(b["preferences"])
    first = prefs[0] if prefs else "no stated preference"
    return _dump({"principle": _truncate(f"For {b['general_requirement']}, {first}", 220)})


def _no_adjust(b: Mapping[str, str], attempt: int) -> str:
    return _dump({"adjust": "No"})


def _user_lines(context: str) -> list[str]:
    return [l.split(":", 1)[1].strip() for l in context.splitlines() if l.startswith("user:")]


def _query_formation(b: Mapping[str, str], attempt: int) -> str:
    users = _user_lines(b["dialogue_context"]) or [b["dialogue_context"].strip()]
    text = users[0].rstrip("?.! ")
    if len(users) > 1:
        text += "; " + users[-1].rstrip("?.! ")
    return _dump({"requirement": text})


def _respond(b: Mapping[str, str], attempt: int) -> str:
    hint = _best_line(b["memory"], b["query"])
    reply = f"Regarding '{b['query'].strip()}': " + (f"considering that {_truncate(hint, 160)}" if hint else "here is a general suggestion.")
    return _dump({"content": reply})


def _restate(b: Mapping[str, str], attempt: int) -> str:
    hint = _best_line(b["memory"], b["user_query"])
    req = b["user_query"].strip().rstrip("?.!")
    if hint:
        req = f"{req}, considering {_truncate(hint, 160)}"
    return _dump({"requirement": req})


def _solution_generate(b: Mapping[str, str], attempt: int) -> str:
    hint = _best_line(b["memory"], b["requirement"])
    sol = f"A practical option for: {b['requirement'].strip()}"
    if hint:
        sol += f" that fits {_truncate(hint, 120)}"
    return _dump({"solution": sol})


def _solution_select(b: Mapping[str, str], attempt: int) -> str:
    cands = json.loads(b["candidate_solutions"])
    mem = _words(b["memory"])
    ranked = sorted(cands, key=lambda c: (-len(mem & _words(c["content"])), _h(c["content"])))
    return _dump({"analysis": "ranked by overlap with the user's history", "selected_solutions": [c["id"] for c in ranked[:2]]})


def _overlap(reference: str, text: str) -> float:
    ref = _words(reference)
    return len(ref & _words(text)) / len(ref) if ref else 0.0


def _gscore(b: Mapping[str, str], attempt: int) -> str:
    needs = json.loads(b["reference"]).get("implicit_needs", [])
    score = 0.0
    for need in needs:
        r = _overlap(need if isinstance(need, str) else need.get("need", ""), b["prediction"])
        score += 1.0 if r >= 0.5 else 0.5 if r >= 0.2 else 0.0
    score = int(score) if float(score).is_integer() else score
    return _dump({"analysis": "word overlap with each implicit need", "score": score})


def _judge(key: str) -> Callable[[Mapping[str, str], int], str]:
    def respond(b: Mapping[str, str], attempt: int) -> str:
        target = b[key]
        scores = {}
        for slot in ("1", "2"):
            dialogue = b[f"dialogue_assistant_{slot}"]
            assistant = " ".join(l for l in dialogue.splitlines() if l.startswith("assistant:"))
            scores[f"assistant-{slot}"] = 1 + int(round(9 * min(1.0, 2 * _overlap(target, assistant))))
        return _dump({
            "analysis": {"assistant-1": "", "assistant-2": "", "overall": "scored by overlap with the reference"},
            "scores": scores,
        })

    return respond


def _sim_user(b: Mapping[str, str], attempt: int) -> str:
    persona = json.loads(b["persona"])
    action = b["action"]
    assistants = [l.split(":", 1)[1].strip() for l in b["dialogue_context"].splitlines() if l.startswith("assistant:")]
    last = assistants[-1] if assistants else ""
    if action == "topic_inquiry":
        text = persona.get("user_query") or "I need some advice."
    elif action == "requirement_confirmation":
        text = "Yes, more precisely: " + persona.get("requirement", "what I asked.")
    elif action == "solution_discussion":
        text = "Can you tell me more about how that would work for me?"
    else:
        pref = persona.get("preference", {})
        pos, neg = _overlap(pref.get("pos", ""), last), _overlap(pref.get("neg", ""), last)
        text = "No, that does not suit me." if neg > pos else "Yes, that works for me."
    return _dump({"content": text})


def _sim_assistant(b: Mapping[str, str], attempt: int) -> str:
    context = b["dialogue_context"]
    users = _user_lines(context)
    topic = users[0] if users else ""
    hint = _best_line(b["memory"], " ".join(users))
    action = b["action"]
    if action == "requirement_prediction":
        text = f"Do you mean {topic.rstrip('?.!')}" + (f", given that {_truncate(hint, 140)}?" if hint else "?")
    elif action == "solution_proposal":
        text = "I suggest an option that fits " + (_truncate(hint, 140) if hint else "your request") + "."
    elif action == "solution_discussion":
        text = "It should fit your situation" + (f", since {_truncate(hint, 120)}" if hint else "") + "."
    else:
        text = "Thanks for the feedback, noted."
    return _dump({"content": text})


def _summary(key: str) -> Callable[[Mapping[str, str], int], str]:
    def respond(b: Mapping[str, str], attempt: int) -> str:
        prev = b["previous_summary"].strip()
        new = _truncate(b[key], 160)
        merged = f"{prev} {new}".strip() if prev and prev != "(empty)" else new
        return _dump({"summary": _truncate(merged, 600)})

    return respond


RESPONDERS: dict[str, Callable[[Mapping[str, str], int], str]] = {
    "mem.log_relations": _log_relations,
    "mem.situation": _situation,
    "mem.background_update": _background_update,
    "mem.topic_outline": _topic_outline,
    "mem.requirement_rewrite": _requirement_rewrite,
    "mem.req_abstraction": _req_abstraction,
    "mem.pref_abstraction": _pref_abstraction,
    "mem.req_update": _no_adjust,
    "mem.pref_update": _no_adjust,
    "rag.query_formation": _query_formation,
    "rag.respond": _respond,
    "task.restate": _restate,
    "task.solution_generate": _solution_generate,
    "task.solution_select": _solution_select,
    "judge.gscore": _gscore,
    "judge.requirement": _judge("requirement"),
    "judge.preference": _judge("preference"),
    "sim.user": _sim_user,
    "sim.assistant": _sim_assistant,
    "baseline.dialogue_summary": _summary("dialogue"),
    "baseline.log_summary": _summary("logs"),
}


def respond(template_id: str, bindings: Mapping[str, str], attempt: int) -> str:
    return RESPONDERS[template_id](bindings, attempt)
