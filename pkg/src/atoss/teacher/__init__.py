from .clients import (
    RemoteTeacher,
    ReplayCacheTeacher,
    ScriptedTeacher,
    TeacherClient,
    TeacherUnavailable,
    prompt_digest,
)
from .filtering import (
    FilterConfig,
    LLMJudge,
    NoCandidates,
    SplitCandidate,
    criteria_subscores,
    filter_top_k,
    generate_candidates,
    generate_for_examples,
    score_candidate,
    segment_text,
)
from .prompts import DEFAULT_DEMOS, FEW_SHOT, ZERO_SHOT, MissingDemos, render_prompt
