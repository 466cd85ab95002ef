"""Campaign orchestrator: scripted or live model, simulated range, evaluation harness."""

from ._core import (
    ConfigError,
    Error,
    GatewayError,
    LoadError,
    TranscriptError,
    ablation_variants,
    builtin_scenarios,
    detect_placeholders,
    estimate_tokens,
    export_scenario,
    export_templates,
    parse_commands,
    parse_tactic,
    parse_translation,
    render_narrative,
    run_ablation,
    run_campaign,
    run_trials,
    transcript_events,
)

__all__ = [
    "ConfigError",
    "Error",
    "GatewayError",
    "LoadError",
    "TranscriptError",
    "ablation_variants",
    "builtin_scenarios",
    "detect_placeholders",
    "estimate_tokens",
    "export_scenario",
    "export_templates",
    "parse_commands",
    "parse_tactic",
    "parse_translation",
    "render_narrative",
    "run_ablation",
    "run_campaign",
    "run_trials",
    "transcript_events",
]
