"""
What the assistant sees for a question
======================================

Compares the two retrieval modes on the same memory and shows what each
baseline strategy would hand to the model instead.
"""

from h2memory.corpus import load_fixture_corpus, split_history_query
from h2memory.llm import Gateway, MockBackend
from h2memory.rag import RetrievalMode, STRATEGY_NAMES, make_strategy

corpus = load_fixture_corpus()
history, query = split_history_query(corpus)
history_ids = [corpus.session_index(s.session_id) for s in history]
current = corpus.session_index(query[0].session_id)
question = query[0].framework.topics[0].user_query
print("question:", question)

gateway = Gateway(MockBackend())

###############################################################################
# The memory strategy builds over the history, then takes in the current
# session's logs when the session opens.
h2 = make_strategy("h2memory", gateway, k=3)
h2.begin(corpus, history_ids)
h2.enter_session(current)

###############################################################################
# Requirement-focused retrieval keeps requirements and requirement types only.
print(h2.context(question, RetrievalMode.REQUIREMENT_FOCUSED))

###############################################################################
# Preference-focused retrieval adds solutions, feedback and principles.
print(h2.context(question, RetrievalMode.PREFERENCE_FOCUSED))

###############################################################################
# The baselines, given the same history, for comparison.
for name in STRATEGY_NAMES:
    if name == "h2memory":
        continue
    s = make_strategy(name, gateway, k=2)
    s.begin(corpus, history_ids)
    s.enter_session(current)
    text = s.context(question)
    print(f"--- {name}: {len(text)} characters")
    print(text[:300])

###############################################################################
# Finally, an answer generated with the retrieved memory.
print(h2.respond(question))
