"""Judge prompts, response parsers, the endpoint client and a mock judge."""

from ..core import JudgeVerdict
from .client import API_KEY_ENV, EndpointConfig, JudgeClient, query_judge
from .mock import MockJudge, mock_judge
from .parsing import (
    InstructionTriple,
    parse_box_response,
    parse_instruction_response,
    parse_score_response,
    serialize_verdict,
)
from .templates import (
    SLOTS,
    PromptTemplate,
    TemplateId,
    load_template,
    load_templates,
    render_prompt,
    to_wire_messages,
)


class EndpointJudge:
    """Callable judge that renders a template and sends it to a live endpoint."""

    def __init__(self, cfg: EndpointConfig, templates=None, client: JudgeClient = None):
        self.client = client or JudgeClient(cfg)
        self.templates = templates or load_templates()

    def __call__(self, template_id, sample, messages=None, *, beam: int = 0) -> str:
        if messages is None:
            messages = render_prompt(self.templates[TemplateId(template_id)], sample)
        return self.client.complete(to_wire_messages(messages))


__all__ = [
    "API_KEY_ENV",
    "EndpointConfig",
    "EndpointJudge",
    "InstructionTriple",
    "JudgeClient",
    "JudgeVerdict",
    "MockJudge",
    "PromptTemplate",
    "SLOTS",
    "TemplateId",
    "load_template",
    "load_templates",
    "mock_judge",
    "parse_box_response",
    "parse_instruction_response",
    "parse_score_response",
    "query_judge",
    "render_prompt",
    "serialize_verdict",
    "to_wire_messages",
]
