"""
Memory without logs
===================

Some datasets only have conversations. In dialogue-only mode the memory keeps
topic outlines and one principle per dialogue, and never touches logs.
"""

from h2memory.corpus import load_fixture_corpus
from h2memory.llm import CallCapture, Gateway, MockBackend
from h2memory.memory import BuildConfig, MemoryBuilder
from h2memory.rag import compose_retrieval, serialize_context

corpus = load_fixture_corpus()

###############################################################################
# Wrapping the backend in a call capture lets us check which templates ran.
capture = CallCapture(MockBackend())
builder = MemoryBuilder(Gateway(capture), config=BuildConfig(dialogue_only=True))
bank = builder.build(corpus)

print("templates used:", sorted(set(capture.template_ids())))
print("situations:", len(bank.all_situations()), " outlines:", len(bank.outlines),
      " principles:", len(bank.principles))

###############################################################################
# Retrieval returns outlines and principles only; the situation and
# background sections stay empty.
print(serialize_context(compose_retrieval("tips for a family weekend", bank, session_index=0)))
