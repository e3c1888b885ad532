"""Versioned prompt registry.

Placeholders use the ``<name>`` form. Only names declared on the template are
substituted; other angle-bracket text in a body (``<score>``, ``<Event A>``)
is part of the instructions and stays literal.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Mapping

from . import schemas

REGISTRY_VERSION = "1"

_SLOT = re.compile(r"<([a-z][a-z0-9_]*)>")


class PromptError(LookupError):
    pass


class UnknownTemplateError(PromptError):
    pass


class MissingBindingError(PromptError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str
    placeholders: tuple[str, ...]
    output_schema: Mapping[str, Any] = field(default_factory=dict)

    def render(self, bindings: Mapping[str, str]) -> str:
        missing = [p for p in self.placeholders if p not in bindings]
        if missing:
            raise MissingBindingError(f"{self.template_id}: missing bindings {missing}")
        unknown = sorted(set(bindings) - set(self.placeholders))
        if unknown:
            raise MissingBindingError(f"{self.template_id}: unexpected bindings {unknown}")
        slots = set(self.placeholders)

        def sub(m: re.Match) -> str:
            name = m.group(1)
            return str(bindings[name]) if name in slots else m.group(0)

        # single pass: substituted text is never re-scanned
        return _SLOT.sub(sub, self.body)


_TEMPLATES: dict[str, PromptTemplate] = {}


def _register(template_id: str, placeholders: tuple[str, ...], body: str) -> None:
    body = body.strip("\n")
    for p in placeholders:
        if f"<{p}>" not in body:
            raise AssertionError(f"{template_id}: placeholder <{p}> not in body")
    _TEMPLATES[template_id] = PromptTemplate(
        template_id, body, placeholders, schemas.OUTPUT_SCHEMAS[template_id]
    )


def get_template(template_id: str) -> PromptTemplate:
    try:
        return _TEMPLATES[template_id]
    except KeyError:
        raise UnknownTemplateError(f"unknown template {template_id!r}") from None


def render_prompt(template_id: str, bindings: Mapping[str, str]) -> str:
    return get_template(template_id).render(bindings)


def template_ids() -> list[str]:
    return sorted(_TEMPLATES)


_RELATION_DEFS = """\
1. "caused_by": <Event A> is the direct cause of <Event B>. If <Event A> did not occur, <Event B> would not occur.
2. "follows": <Event B> and <Event A> belong to the same topic and have a sequential relationship in time, i.e., <Event B> temporally follows <Event A>. But <Event B>'s occurrence does not entirely depend on <Event A>."""

_NO_EXTRA = "Do not output any content other than the required JSON format. Do not add any extra explanations or comments in the JSON."

# ----------------------------------------------------------------------------- memory construction

_register("mem.log_relations", ("logs", "logs_id_span"), f"""
You are given some user logs, each containing a timestamp and specific log content. For each log within a specified range, please generate a list of its related previous logs. Specifically, suppose the current log corresponds to <Event B>, and a previous log corresponds to <Event A>. Consider two types of relationships:
{_RELATION_DEFS}

# Logs
\"\"\"
<logs>
\"\"\"

# Detailed Requirements and Output Template
## Detailed Requirements
For each log within the input (<logs_id_span>), consider its relationships with previous logs and list the previous log ids for both "caused_by" and "follows" types.
Note:
1. You need to iterate over all logs in the specified range and generate the output results. For any given log, only previous logs can be in its relationships (related logs can include logs before the specified range).
2. Only consider clear, direct relationships - no need to consider indirect relationships. For example: if "log_0" causes "log_2", and "log_2" causes "log_4", you do not need to consider "log_0" as causing "log_4".
3. You must consider the two relationship types in the order "caused_by", then "follows". If two logs are already considered to have a "caused_by" relationship, do not consider a "follows" relationship between them. Only consider "follows" if there is no "caused_by" relationship between the two logs.
4. Imitate the output example below and output in JSON format. Do not output anything except the required JSON; do not add any extra explanations or comments in the JSON.

## Output Template
\"\"\"
{{
  "<start_log_id>": {{ // Current log
    "caused_by": [...], // List of previous log ids for this relationship type; leave empty if none
    "follows": [...]
  }},
  ... // Iterate over all logs in the specified range (<logs_id_span>)
}}
\"\"\"

Now, according to the above requirements and format, please provide the related log lists for each log.
""")

_register("mem.situation", ("subgraph",), f"""
You are given some user logs, each including a timestamp, specific log content, and the relationships between different logs. Please use the provided relationships to connect the content of each log, first generating a situation description that infers and summarizes the user's recent experiences or events; then, determine which one or more of the following four aspects the situation primarily belongs to: work, health, family, leisure.

# Relationship Definitions
Suppose the current log corresponds to <Event B> and a previous log corresponds to <Event A>. Two possible relationship types are defined:
{_RELATION_DEFS}

# Logs
\"\"\"
<subgraph>
\"\"\"

# Detailed Requirements and Output Template
## Detailed Requirements
1. Follow the JSON output template below. "situation" is the situation description generated by connecting the logs, and "situation_aspects" are the aspects the situation belongs to.
2. The "situation" description should be a concise paragraph summarizing the user's experiences or events during the time period corresponding to the logs. Since user logs mostly reflect the user's experiences or events indirectly, the situation description does not need to exactly quote the descriptions from the logs, but can directly describe the experiences or events reflected by the logs. In addition, unless necessary, there is no need to include specific time points in the description; if there are multiple logs, just reflect the relationships between the logs.
3. The value of "situation_aspects" should be in Python list format, with possible values {{"work", "health", "family", "leisure"}}, representing the main aspect(s) of the current situation. The list can contain one or more elements, but cannot be empty.
4. {_NO_EXTRA}

## Output Template
\"\"\"
{{
  "situation": "...", // Situation description in paragraph form
  "situation_aspects": [...] // List of aspects the situation belongs to
}}
\"\"\"

Now, according to the above requirements and output format, please generate the user's situation.
""")

_register("mem.topic_outline", ("dialogue",), f"""
Consider a scenario where a user ("user") interacts in dialogue with a daily assistant ("assistant"). The user may ask the interactive assistant for advice on topics related to their background or experiences; the assistant, after fully understanding the user's needs, provides solution suggestions; and the user may further give feedback on the solutions proposed by the assistant. Now, you are given a conversation between the user and the assistant. Please summarize the outline information for each topic in the conversation, including the dialogue turn range for the topic, the user's need for that topic, the solutions provided by the assistant, the user's feedback on each solution, and the user's preferences as reflected in the above content.

# Dialogue
\"\"\"
<dialogue>
\"\"\"

# Detailed Requirements and Output Template
## Detailed Requirements
For the given conversation, you need to summarize the outline information for each topic according to the output template below, including the dialogue turn range for the topic ("turn_span"), the user's need for that topic ("requirement"), the solutions provided by the assistant ("solution_list"), and the user's preferences as reflected in the interaction for that topic ("preference").
Specific requirements and explanations are as follows:
1. There may be multiple topics in a conversation, each revolving around a user need. The interaction includes understanding the user's need and discussing solutions for the current need, possibly spanning multiple consecutive dialogue turns. The dialogue turn range ("turn_span") for each topic is a list of two elements, representing the turn id where the topic starts and the turn id where it ends (turn id format is "turn_x"). The turn ranges of different topics in the conversation must be contiguous.
2. The user need ("requirement") should be described in one sentence, describing the user's concrete intention for advice and need content in the current context and based on their background.
3. The "solution_list" section should enumerate one or more solutions discussed by the user and assistant under the current topic. For each solution, you must provide the solution content ("solution"), a description of the user's feedback ("user_feedback"), and the feedback type ("feedback_type"). The solution content should summarize the solution discussed in one sentence; the user feedback should briefly describe the user's attitude toward the corresponding solution (from the assistant's perspective); and the feedback type should be classified as positive ("pos"), negative ("neg"), or other ("others"). Only use "others" if the user's attitude is truly unclear; otherwise, prefer "pos" or "neg".
4. In the conversation, discussion about each solution may span several sentences or turns; the "solution" section should provide a summary description for each solution, and the "feedback_type" section should focus on the user's final attitude toward the solution after discussing it with the assistant. Prefer classifying feedback as "pos" or "neg" - only use "others" if the user's final attitude is very ambiguous.
5. The "preference" section should focus on the user's preferences as reflected by their feedback on different solutions for the current topic, and summarize the user's preferences for this particular need in one sentence. Note: If there is negative user feedback on a certain aspect in the dialogue, you should reflect the user's negative preferences (i.e., solution types the user may dislike or tends to reject) in the summary.
6. Follow the output template below and output in JSON format.
7. {_NO_EXTRA}

## Output Template
\"\"\"
[
  {{
    "turn_span": [<start_turn_id>, <end_turn_id>], // Dialogue turn range, turn id format is "turn_x"
    "requirement": "...", // User need description
    "solution_list": [
      {{
        "solution": "...", // Solution proposed by the assistant
        "user_feedback": "...", // User's feedback attitude toward the solution
        "feedback_type": "..." // Feedback type, possible values: {{"pos", "neg", "others"}}; prefer "pos" or "neg"
      }},
      ...
    ],
    "preference": "..." // User's preferences for the current need as reflected in the interaction
  }},
  ...
]
\"\"\"

Now, according to the above requirements and format, please generate topic outlines for the current conversation.
""")

_register("mem.requirement_rewrite", ("background", "situation", "requirement"), f"""
Consider a scenario where a user ("user") interacts in dialogue with a daily assistant ("assistant"). The user may ask the interactive assistant for advice on topics related to their background or experiences, thus starting an interaction. Now, suppose we have already summarized the user's requirement based on the dialogue content. You are required to rewrite the original user requirement as a more detailed description, using the user's background and recent situation provided in the input, to achieve a deeper understanding of the user's requirement.

# User Overall Background
\"\"\"
<background>
\"\"\"

# User's Recent Situation
\"\"\"
<situation>
\"\"\"

# User Requirement
\"\"\"
<requirement>
\"\"\"

# Detailed Requirements and Output Template
## Detailed Requirements
1. The user's overall background and recent situation provided in the input may contain reasons or specific events that led to the current user requirement, as well as unrelated events or information. You should use the background and situation factors relevant to the current requirement to rewrite the provided "User Requirement" as a more detailed description.
2. The rewritten content should still be a single sentence and should remain focused on one core requirement, without introducing unrelated requirements or background factors not relevant to the current requirement.
3. Follow the output template below and respond in JSON format.
4. {_NO_EXTRA}
Output Template
\"\"\"
{{"requirement": "..."}}
\"\"\"

Now, according to the above requirements and format, please rewrite the currently provided requirement content.
""")

_register("mem.background_update", ("last_background", "cur_situations"), f"""
Consider the problem of summarizing and updating user background information based on long-term user history. Now, you are given a previous summary of the user's background, as well as some recent specific situations. You need to consider updating the user background according to the content of these recent situations.

# Previous User Background Summary
The following is the previous summary of the user's background in four aspects ("background"), as well as the corresponding time span ("time_span"). The four aspects of the user's background are work, health, family, and leisure, each summarized in one sentence. If a section is empty, it means that no valid information for that aspect was previously included in the user's history.
\"\"\"
<last_background>
\"\"\"

# List of Recent User Situations
The following is a list of recent user situations that have not yet been updated into the user background. The time span is "time_span", and "situation_list" lists all recent situations.
\"\"\"
<cur_situations>
\"\"\"

# Detailed Requirements and Output Example
## Detailed Requirements
For the given list of recent situations, you should first determine which aspects among work, health, family, and leisure in the user background need to be updated, and then, for those aspects that need updating, provide the updated background summary.
Note:
1. The user background should be a summary describing the user's overall characteristics or attributes in the corresponding aspect, such as occupation, health status, family members, leisure hobbies, etc. You do not need to include overly specific events in the user background.
2. If the given situations do not contain information about a certain aspect, do not update the background for that aspect; even if the situations contain information about an aspect, if you believe that aspect is already reflected in the background summary or is too specific to include in the overall background, you should also keep the original background summary unchanged.
3. The updated background summary for each aspect should still be a one-sentence summary. Keep sentences as concise as possible; avoid repetition. When updating, you should consider compressing both the previous background and the new information as needed, and, if necessary, reorganize the original summary sentence to prevent the sentence from growing too long.
4. The time span of the previous background summary and the recent situations is only for reference when updating; if the previous background summary covers a long time period, try to minimize the impact of recent situation information on the background. There is no need to mention specific time in the updated background summary.
5. Imitate the JSON output example below: first list the aspects of the user background that need updating ("updating_aspects"), then provide the updated summary for each aspect ("updating_content").
6. {_NO_EXTRA}

## Output Example
\"\"\"
{{
  "updating_aspects": ["xxx"], // Aspects you believe need updating based on recent situations
  "updating_content": {{
    "xxx": "..." // Provide the updated summary for aspect xxx
  }}
}}
\"\"\"

Now, according to the above requirements and format, please provide the updated user background information based on the current situations.
""")

_register("mem.req_abstraction", ("requirements",), f"""
Consider a scenario where a user interacts with a daily assistant. The assistant has already summarized a series of user requirements in specific contexts based on their interaction history. Now, you are given a batch of requirement contents that are considered semantically similar, and you need to generalize this batch of specific requirements into a more abstract overall requirement type description.

# Specific Requirement Contents
The input is a list, each entry in the list is a specific user requirement:
\"\"\"
<requirements>
\"\"\"

# Detailed Requirements and Output Template
## Detailed Requirements
Please generalize all of the above given specific user requirements into a short phrase describing the user's overall requirement type.
Note:
1. The output should be a concise short phrase, without including situational details from the specific requirement contents.
2. The multiple specific requirements given in the list should be considered to belong to the same macro aspect, and the overall requirement type description should reflect this macro aspect.
3. When the number of specific requirement contents is small (such as just one), the generalized overall requirement type should still be an abstraction of the original requirement content.
4. Imitate the output example below and output in JSON format.
5. {_NO_EXTRA}

## Output Template
\"\"\"
{{"general_requirement": "..."}} // A short phrase describing the user's overall requirement type
\"\"\"

Now, according to the above requirements and format, please provide your output.
""")

_register("mem.pref_abstraction", ("general_requirement", "preferences"), f"""
Consider a scenario where a user interacts with a daily assistant. The assistant has already summarized a series of specific user preference experiences under a certain requirement type based on their interaction history. Now, you are given the specified requirement type and multiple corresponding user preference experiences. You are asked to further generalize these experiences into a more abstract and broadly applicable principle of preference.

# Requirement Type
\"\"\"
<general_requirement>
\"\"\"

# User Preference Experiences
The input is a list, each entry in the list is a user preference experience:
\"\"\"
<preferences>
\"\"\"

# Detailed Requirements and Output Template
## Detailed Requirements
Please generalize all the above experiences into a one-sentence principle of user preference.
Note:
1. The output principle should be a concise one-sentence form.
2. The multiple specific preference experiences given in the list should all be considered as corresponding to the "requirement type" given above, and the output principle should reflect the overall preference under that requirement type.
3. When the number of preference experiences is small (such as just one), the generalized principle should still be an abstraction of the original experience.
4. Imitate the output example below and output in JSON format.
5. {_NO_EXTRA}

## Output Template
\"\"\"
{{"principle": "..."}} // A one-sentence user preference principle
\"\"\"

Now, according to the above requirements and format, please provide your output.
""")

_register("mem.req_update", ("general_requirement", "requirements"), f"""
Consider a scenario where a user interacts with a daily assistant. The assistant summarizes a series of user requirements in specific contexts based on the interaction process, and also generalizes multiple requirements of the same type into a more abstract overall requirement type description. Now, suppose the assistant has already generalized multiple previous requirements of the same type into an overall requirement type, but there are now some new specific requirements of that type. You need to determine whether the previous overall requirement type description needs to be adjusted, and if so, provide the revised description.

# User Overall Requirement Type
\"\"\"
<general_requirement>
\"\"\"

# Newly Added Specific Requirement Contents
The input is a list; each entry in the list is a newly added specific user requirement:
\"\"\"
<requirements>
\"\"\"

# Detailed Requirements and Output Template
## Detailed Requirements
Please determine whether the newly added requirement contents already belong to the given overall requirement type. If the new requirements conflict with the given overall requirement type, you need to update the overall requirement type description.
Note:
1. The existing overall requirement type description is already a generalization of similar requirements in the interaction history, so you should keep the original overall requirement type description unchanged unless necessary.
2. If you need to revise the original overall requirement type description, you should comprehensively consider both the original description and the new requirement contents. The updated overall requirement type description should still meet the following requirements: it should be a concise short phrase, not include specific details (especially not concrete examples), and describe the overall requirement type at a more abstract macro level; there is no need to include user preference information.
3. Imitate the output examples below, and output in JSON format whether the original overall requirement type needs adjustment, and if so, the updated description.
4. {_NO_EXTRA}

## Output Template
If you believe the previous overall requirement type does not need adjustment, output:
\"\"\"
{{
  "adjust": "No"
}}
\"\"\"
If you believe the previous overall requirement type needs adjustment, output the judgment and the revised description:
\"\"\"
{{
  "adjust": "Yes",
  "general_requirement": "..." // The revised overall requirement type description, still in the form of a short phrase
}}
\"\"\"

Now, according to the above requirements and format, please provide your output.
""")

_register("mem.pref_update", ("general_requirement", "principle", "preferences"), f"""
Consider a scenario where a user interacts with a daily assistant. The assistant summarizes a series of specific user preference experiences under a certain requirement type based on the interaction process, and further generalizes multiple preference experiences into a more abstract and broadly applicable user preference principle. Now, suppose the assistant has already generalized multiple previous preference experiences under a certain requirement type into a principle, but there are now some newly added preference experiences of that type. You need to determine whether the previous user preference principle needs to be adjusted, and if so, provide the revised principle.

# User Requirement Type
\"\"\"
<general_requirement>
\"\"\"

# User Preference Principle
\"\"\"
<principle>
\"\"\"

# Newly Added Preference Experiences
The input is a list; each entry in the list is a newly added preference experience description:
\"\"\"
<preferences>
\"\"\"

# Detailed Requirements and Output Template
## Detailed Requirements
Please determine whether the newly added preference experience descriptions already conform to the given user preference principle. If the new preference experiences conflict with the given principle, or if the existing principle obviously omits some important content reflected in the current experiences, you need to update the user preference principle.
Note:
1. The existing user preference principle is already a generalization of similar preference experiences in the interaction history, so you should keep the original user preference principle unchanged unless necessary.
2. If you need to revise the original principle, you should comprehensively consider both the original principle and the new experiences. The updated user preference principle should still meet the following requirements: it should be a concise one-sentence form, a further abstraction and generalization of the specific experiences, and it should correspond to the "requirement type" provided in the input.
3. Imitate the output examples below, and output in JSON format whether the principle needs adjustment, and if so, the updated content.
4. {_NO_EXTRA}

## Output Template
If you believe the previous user preference principle does not need adjustment, output:
\"\"\"
{{
  "adjust": "No"
}}
\"\"\"
If you believe the previous user preference principle needs adjustment, output the judgment and the revised principle:
\"\"\"
{{
  "adjust": "Yes",
  "principle": "..." // The revised user preference principle, still in the form of a concise one-sentence statement
}}
\"\"\"

Now, according to the above requirements and format, please provide your output.
""")

# ----------------------------------------------------------------------------- retrieval and response

_register("rag.query_formation", ("dialogue_context",), f"""
You are interacting with a user in dialogue, and the interaction process may include the user's needs as well as discussions of solutions to the current need. The input will provide the dialogue context between you and the user. You are required to summarize the user's needs as expressed in the conversation.

# Dialogue Context
Below is the current dialogue context between the user ("user") and you ("assistant").
\"\"\"
<dialogue_context>
\"\"\"

# Output Requirements and Output Template
## Output Requirements
1. Imitate the output template below and provide your output in JSON format. The user's need ("requirement") should be summarized in a concise one-sentence form, describing the specific need for advice that the user wants to address in the interaction.
2. In the need description, you do not need to pay attention to the user's preferences regarding solutions.
3. {_NO_EXTRA}

## Output Template
\"\"\"
{{
  "requirement": "..." // The user's need for the current topic, summarized in a concise sentence
}}
\"\"\"

Now, please provide your output according to the output requirements and template above.
""")

_register("rag.respond", ("memory", "query"), f"""
You are a personalized interactive assistant, able to understand user needs and preferences by combining user history.

You are interacting with the user. Now you are given some user personalized information as reference, as well as the user's current inquiry. Please reply to the inquiry in a way that fits the user's situation, background, requirements and preferences.

# User Personalized Information
<memory>

# Current User Inquiry
\"\"\"
<query>
\"\"\"

# Output Template
\"\"\"
{{"content": "..."}}
\"\"\"

# Output Requirements
1. Use only the personalized information that is relevant to the current inquiry.
2. {_NO_EXTRA}

Now, according to the output requirements and template, please provide your output.
""")

# ----------------------------------------------------------------------------- benchmark tasks

_register("task.restate", ("memory", "user_query"), f"""
You are a personalized interactive assistant, able to understand user needs by combining user history.

You are interacting with the user. Now you are given some user personalized information as reference, as well as the user's current query. Please use the user's history to deeply understand the user's actual current need, and describe the user's actual need in one sentence.

# User Personalized Information
<memory>

# Current User Query
\"\"\"
<user_query>
\"\"\"

# Output Template
Below is the output template in JSON format, where "requirement" is the content to be generated.
\"\"\"
{{"requirement": "..."}}
\"\"\"

# Output Requirements
1. Combine the user's historical information provided in the input to understand the user background and context related to the current query, and describe the user's actual need in one sentence.
2. {_NO_EXTRA}

Now, according to the output requirements and template, please provide your output.
""")

_register("task.solution_generate", ("memory", "requirement"), f"""
You are a personalized assistant, able to propose solutions that match the user's personalized preferences according to their needs.

You are interacting with the user. Now you are given some user personalized information as reference, as well as the user's recent logs and the current user requirement description. Please use the user's history to deeply understand the user's personalized preferences, and provide a solution that matches their preferences for the current user requirement.

# User Personalized Information
<memory>

# Current User Requirement
\"\"\"
<requirement>
\"\"\"

# Output Template
Below is the output template in JSON format, where "solution" is the content to be generated.
\"\"\"
{{"solution": "..."}}
\"\"\"

# Output Requirements
1. Combine the user's historical information provided in the input to understand the user's personalized preferences, and provide a solution that matches the user's preferences. The solution should be described in one sentence in the output.
2. {_NO_EXTRA}

Now, according to the output requirements and template, please provide your output.
""")

_register("task.solution_select", ("memory", "requirement", "candidate_solutions"), f"""
You are a personalized assistant, able to provide solutions that match the user's personalized preferences according to their needs.

You are interacting with the user. Now you are given some user personalized information as reference, as well as the current user requirement description and 8 candidate solution suggestions for the current requirement. Please use the user's history to deeply understand the user's personalized preferences and select from the candidate solutions the 2 that best match the user's preferences.

# User Personalized Information
<memory>

# Current User Requirement
\"\"\"
<requirement>
\"\"\"

# Candidate Solution Suggestions
Below are 8 candidate solutions for the current user requirement, including the id and content for each solution.
\"\"\"
<candidate_solutions>
\"\"\"

# Output Template
Below is the output template in JSON format, where "solution" is the content to be generated.
\"\"\"
{{
"analysis": "...", // Provide an overall analysis of all candidate solutions, focusing on the user's personalized preferences
"selected_solutions": [...] // List the ids of the 2 solutions that best match the user's preferences
}}
\"\"\"

# Output Requirements
1. Combine the user's historical information provided in the input to understand the user's personalized preferences, and analyze and select candidate solutions based on the user's preferences.
2. Follow the output template above. In the "selected_solutions" section, only the 2 solution ids that best match the user's preferences may be selected - no more, no fewer.
3. {_NO_EXTRA}

Now, according to the output requirements and template, please provide your output.
""")

_register("judge.gscore", ("user_query", "reference", "prediction"), """
You are a good scorer who can score the outputs generated by the assistant model according to requirements.

Consider a scenario where a user interacts with a daily assistant. The assistant model needs to combine the user's personalized information to deeply understand the user's implicit needs for the current inquiry and provide a description of the user's actual need. Now, you are given the user's initial question as background, as well as the candidate model's prediction and the reference content of the user's actual need as the prediction target. You are required to compare the prediction to the reference and score the model's prediction performance.

# User Initial Query
\"\"\"
<user_query>
\"\"\"

# User Actual Requirement (Reference)
Contains two parts: the complete user requirement description ("requirement") and a list of the user's implicit needs ("implicit_needs"). The implicit needs list contains 2 entries, corresponding to two aspects of the user's implicit needs not explicitly mentioned in the inquiry.
\"\"\"
<reference>
\"\"\"

# Candidate Model Prediction
\"\"\"
<prediction>
\"\"\"

# Evaluation Requirements and Output Template
## Evaluation Requirements
1. The provided "User Initial Query" in the input is only for background; please focus on the match between the prediction and the reference.
2. In the input "User Actual Need" (the reference), the complete need description ("requirement") can be regarded as a summary that combines the two entries in the implicit needs list ("implicit_needs"), and can serve as a reference for the prediction. However, your evaluation should focus on the degree to which the prediction matches the two entries in the implicit needs list.
3. The scoring range is in [0, 2]. If the prediction matches both entries in the reference, it scores 2 points; if the prediction only matches one entry, it scores 1 point; if the prediction matches neither, it scores 0 points. The order of the two reference entries does not matter.
4. When considering the match between the prediction and the reference implicit needs entries, focus on whether the core elements of each reference entry are reflected in the prediction; do not pay too much attention to exact wording. If a part of the prediction provides more detailed information in the same aspect as a reference entry, it is considered a match.
5. Considering that the prediction and a reference entry may be partially matched, you may assign 0.5 points for a partially matched entry.
6. Output in the following JSON format: Provide an analysis paragraph for the current evaluation, followed by the score for the candidate model.

## Output Template
\"\"\"
{
"analysis": "...", // Evaluation analysis
"score": <score> // Value range: {0, 0.5, 1, 1.5, 2}
}
\"\"\"

Now, please provide your evaluation analysis and score as required.
""")

_JUDGE_TAIL = f"""
# Evaluation Requirements and Output Template
## Evaluation Requirements
1. Combine the user's personalized information and the dialogues between the user and the two assistants, and provide your output using the JSON format output template below. First, provide an analysis ("analysis") of the two assistants' reply effectiveness, then assign scores ("scores") to both assistants, with scores ranging from 1 to 10 (integer values).
2. In the "analysis" section, first analyze the dialogue reply effectiveness of both assistants separately, then provide an overall analysis and comparison. Note: The assistants' names ("assistant-1"/"assistant-2") are randomly assigned to the two specific assistants, so the order of appearance should be considered completely unrelated to the reply effectiveness. Please ensure the assistants' relative order does not affect your evaluation.
3. {_NO_EXTRA}

## Output Template
\"\"\"
{{
  "analysis": {{ // First analyze both assistants' reply effectiveness separately, then provide an overall analysis and comparison
    "assistant-1": "...",
    "assistant-2": "...",
    "overall": "..."
  }},
  "scores": {{ // Score range: integers from 1 to 10
    "assistant-1": <score>,
    "assistant-2": <score>
  }}
}}
\"\"\"

Now, according to the evaluation requirements and template, please provide your evaluation output.
"""

_JUDGE_DIALOGUES = """
# Dialogue Content to Evaluate
Below are the conversations between the user ("user") and two assistants ("assistant-1"/"assistant-2"). You should focus on the effectiveness of the assistants' replies.

## assistant-1
\"\"\"
<dialogue_assistant_1>
\"\"\"

## assistant-2
\"\"\"
<dialogue_assistant_2>
\"\"\"
"""

_JUDGE_PROFILE = """
# User Personalized Information
## User Background
\"\"\"
<background>
\"\"\"

## User Personality
\"\"\"
<personality>
\"\"\"

## User's Recent Situation
\"\"\"
<situation>
\"\"\"
"""

_register(
    "judge.requirement",
    ("background", "personality", "situation", "requirement", "dialogue_assistant_1", "dialogue_assistant_2"),
    """
You are an excellent dialogue evaluator. Consider a scenario where a user interacts in dialogue with an assistant, seeking advice about topics related to themselves. The assistant first tries to infer the user's needs and then attempts to provide solutions that match the user's preferences. Now you are given two separate conversations between the same user and two different assistants on the same topic. You need to compare and evaluate the assistants' replies according to my instructions.

You are given some personalized information about the user ("user"), including the user's background, personality, recent situation, and detailed information about the user's current need. Based on the user's personalized information, you are to judge how well the two assistants ("assistant-1"/"assistant-2") understood and inferred the user's needs during their respective interactions.
""" + _JUDGE_PROFILE + """
## User's Current Requirement
Below is information related to the user's current requirement. "user_query" is the user's initial content when actively asking the assistant; "implicit_needs" are the user's current implicit needs and related background or experiences, which the user expects the assistant to proactively infer in the conversation; "requirement" is a summary of the above two parts, i.e., the user's current actual need.
\"\"\"
<requirement>
\"\"\"
""" + _JUDGE_DIALOGUES + """
# Current Evaluation Dimension: Need Understanding
In each conversation between the user and the assistant, the dialogue revolves around a user need (i.e., the "requirement" content in the "User's Current Requirement" section). The assistant and user interact through the assistant's inference of needs and solution proposals. In this evaluation, focus on the assistant's "need understanding" ability, as described below:
1. You should focus on the "User's Current Requirement" section in the user's personalized information and judge whether the assistant proactively inferred the user's implicit needs and corresponding situational background information that the user did not mention.
2. The more specific and accurate the assistant's proactive inference, the higher the score should be; conversely, if the inference is vague or inaccurate, a lower score should be given.
3. In the conversation, the user may clarify some need content. After the user clarifies, if the assistant merely repeats the relevant content, this should not be considered a plus. Points should be given for the assistant's proactive inference of content the user has not mentioned. Also, in multi-turn interactions, the assistant who gives more specific and accurate need inferences earlier should be considered for a higher score.
4. This evaluation should focus mainly on the assistant's inference of the user's needs in the dialogue, and evaluate based on how well the assistant understood the user's needs. There is no need to consider the assistant's solution proposals and discussions.
""" + _JUDGE_TAIL,
)

_register(
    "judge.preference",
    ("background", "personality", "situation", "preference", "dialogue_assistant_1", "dialogue_assistant_2"),
    """
You are an excellent dialogue evaluator. Consider a scenario where a user interacts in dialogue with an assistant, seeking advice about topics related to themselves. The assistant first tries to infer the user's requirements and then attempts to provide solutions that match the user's preferences. Now you are given two separate conversations between the same user and two different assistants on the same topic. You need to compare and evaluate the assistants' replies according to my instructions.

You are given some personalized information about the user ("user"), including the user's background, personality, recent situation, and the user's current requirement and related preferences. Based on the user's personalized information, you are to judge how well the two assistants ("assistant-1"/"assistant-2") understood the user's preferences when proposing solutions to the user's requirements during their respective interactions.
""" + _JUDGE_PROFILE + """
## User's Current Requirement and Related Preferences
In the following information, "requirement" is a detailed description of the user's current requirement; "general_preference" gives the user's overall preference description for this type of requirement, divided into "pos" and "neg" parts, summarizing the types of solutions the user likes and dislikes, respectively; in "candidate_solutions", "pos_list" and "neg_list" list 2 specific solutions each that match or do not match the user's preferences for the current requirement.
\"\"\"
<preference>
\"\"\"
""" + _JUDGE_DIALOGUES + """
# Current Evaluation Dimension: Preference Understanding
In each conversation between the user and the assistant, the dialogue revolves around a user requirement (i.e., the "requirement" content in the "User's Current Requirement and Related Preferences" section). The assistant and user interact through the assistant's inference of requirements and solution proposals. In this evaluation, focus on the assistant's "preference understanding" ability, as described below:
1. You should focus on the "User's Current Requirement and Related Preferences" section in the user's personalized information, understand the user's preferences for different types of solutions under the current requirement, and judge whether the solutions proposed by the assistant in the dialogue match the user's personalized preferences.
2. If the assistant's proposed solutions highly match the user's positive preferences, they should receive a higher score; conversely, if the solutions do not match the user's positive preferences, or even align more with the user's negative preferences (i.e., the types of solutions the user dislikes), they should receive a lower score.
3. In the dialogue, the user may provide feedback on some solutions and may proactively state or reveal specific preferences. When evaluating the assistant's preference understanding ability, give higher priority to cases where the assistant proposes solutions that match the user's preferences before the user reveals those preferences.
4. This evaluation should focus mainly on the assistant's solution suggestions for the user's requirements, and evaluate based on how well the solutions match the user's preferences. There is no need to consider the assistant's inference and confirmation of the user's requirements.
""" + _JUDGE_TAIL,
)

_register("sim.user", ("persona", "dialogue_context", "current_turn", "action", "action_description"), f"""
You are an excellent user simulator. Consider a scenario where a user interacts in dialogue with an assistant, seeking advice about topics related to themselves and hoping the assistant can accurately infer their needs and provide solutions that match their preferences. You need to simulate this user according to the personalized information provided in the input, and generate user utterances of the specified type in each round of the conversation. The user utterance type is one of {{<topic query>, <need confirmation>, <solution discussion>, <solution feedback>}}.

Now, you are given some personalized information about this user, the current interaction context, and the type of user utterance you (as the user) need to generate next. Please generate the corresponding user utterance content according to the user's personalized characteristics and the specified utterance type.

# User Personalized Information
<persona>

# Current Interaction Status
## Current Dialogue Context
Below is the dialogue context between you ("user") and the assistant ("assistant"). The last user utterance is the one you need to generate, and its utterance type has been specified.
\"\"\"
<dialogue_context>
\"\"\"

## Current Dialogue Turn
\"\"\"
<current_turn>
\"\"\"

## Current User Utterance Type Definition (<action>)
\"\"\"
<action_description>
\"\"\"

# Output Template and Output Requirements
## Output Requirements
1. Combine the information provided in the input and follow the specified user utterance type to generate an appropriate interaction utterance as the user ("user").
2. You must follow the utterance type specified in the current dialogue turn and the definition of this type provided in the input.
3. While following the specified utterance type, you may include some transitional phrases in the generated content to ensure smoother context flow.
4. The user utterance should be a relatively brief sentence.
5. The user should be able to simply and directly express their attitude, rather than always overly accommodating the assistant's reply. If the assistant's inference of the user's need is off, or the proposed solution does not match the user's preferences, the user should directly express negative attitude, even anger or dissatisfaction; avoid overly euphemistic expressions such as "sounds great, but..." or "looks nice, but...".
6. {_NO_EXTRA}

## Output Template
Below is the output template in JSON format, where "content" is the user utterance to be generated.
\"\"\"
{{"content": "..."}}
\"\"\"

Now, according to the output requirements and template, please provide your output.
""")

_register("sim.assistant", ("memory", "dialogue_context", "current_turn", "action", "action_description"), f"""
You are a personalized dialogue assistant who can generate dialogue replies that meet the user's personalized needs and preferences according to the specified reply type. Each utterance's reply type is one of {{<need inference>, <solution proposal>, <solution discussion>, <feedback response>}}.

You are currently interacting in dialogue with the user. Now you are given some user personalized information as a reference, as well as the dialogue context between you and the user. Please provide an appropriate dialogue reply according to the specified reply type.

# User Personalized Information
<memory>

# Current Dialogue Context
Below is the current dialogue context between the user ("user") and you ("assistant"). The last assistant utterance is the one you need to generate, and its reply type has been specified.
\"\"\"
<dialogue_context>
\"\"\"

# Current Dialogue Turn
\"\"\"
<current_turn>
\"\"\"

# Current Reply Type Definition (<action>)
\"\"\"
<action_description>
\"\"\"

# Output Template
Below is the output template in JSON format, where "content" is the reply content to be generated.
\"\"\"
{{"content": "..."}}
\"\"\"

# Output Requirements
1. Combine the information provided in the input and follow the specified reply type to generate an appropriate dialogue reply as the assistant ("assistant").
2. You must follow the reply type specified in the current dialogue turn and the definition of this type provided in the input.
3. While following the specified reply type, you may include some transitional phrases in the reply to make the context flow more smoothly. For example, for a "solution proposal" type reply, you may briefly respond to the user's feedback on the previous solution (if any) before recommending a new solution.
4. The reply content does not need to be long - 1 to 3 sentences is sufficient.
5. {_NO_EXTRA}

Now, according to the output requirements and template, please provide your output.
""")

# ----------------------------------------------------------------------------- baselines

_register("baseline.dialogue_summary", ("previous_summary", "dialogue"), f"""
You are maintaining a long-term memory of a user's conversations with a daily assistant. Given the previous memory summary and a new dialogue session, produce an updated summary that keeps the user's long-term requirements, background and preferences, and drops details that are no longer useful.

# Previous Summary
\"\"\"
<previous_summary>
\"\"\"

# New Dialogue Session
\"\"\"
<dialogue>
\"\"\"

# Output Template
\"\"\"
{{"summary": "..."}}
\"\"\"

# Output Requirements
1. The summary should be a single concise paragraph.
2. {_NO_EXTRA}
""")

_register("baseline.log_summary", ("previous_summary", "logs"), f"""
You are maintaining a long-term memory of a user's behaviour logs collected on their personal devices. Given the previous log summary and the logs of a new session, produce an updated summary of the user's experiences and background.

# Previous Summary
\"\"\"
<previous_summary>
\"\"\"

# New Session Logs
\"\"\"
<logs>
\"\"\"

# Output Template
\"\"\"
{{"summary": "..."}}
\"\"\"

# Output Requirements
1. The summary should be a single concise paragraph.
2. {_NO_EXTRA}
""")
