import json
import math
import os
import pathlib

import pytest

import redchain

DATA = pathlib.Path(os.environ.get("REDCHAIN_DATA_DIR", pathlib.Path(__file__).resolve().parents[2] / "data"))


def test_demo_campaign_runs_three_stages():
    out = redchain.run_campaign(str(DATA / "configs" / "demo.conf"))
    assert out["stop_reason"] == "EndOfCampaign"
    assert out["tactics"] == ["RECON", "EXPLOIT", "EXFILTRATION"]
    again = redchain.run_campaign(str(DATA / "configs" / "demo.conf"))
    assert again["transcript"] == out["transcript"]
    narrative = redchain.render_narrative(out["transcript"], False)
    assert "session 1 opened on 172.16.2.3 as root" in narrative


def test_overrides_and_errors():
    with pytest.raises(redchain.ConfigError):
        redchain.run_campaign(str(DATA / "configs" / "demo.conf"), {"target_ip": "not-an-ip"})
    with pytest.raises(redchain.LoadError):
        redchain.run_campaign(str(DATA / "configs" / "missing.conf"))
    with pytest.raises(redchain.ConfigError):
        redchain.run_campaign(str(DATA / "configs" / "assisted.conf"))
    out = redchain.run_campaign(str(DATA / "configs" / "demo.conf"), {"max_actions": 2})
    assert out["stop_reason"] == "MaxActions"


def test_parsers():
    fig3 = (
        "1) use exploit/unix/ftp/vsftpd_234_backdoor\n2) set RHOSTS 172.16.2.3\n"
        "3) set payload cmd/unix/interact\n4) exploit"
    )
    got = redchain.parse_commands(fig3)
    assert got["ok"] and len(got["commands"]) == 4 and not got["stop_requested"]
    refused = redchain.parse_commands("I'm sorry, but I cannot assist with that request.")
    assert not refused["ok"] and refused["reason"] == "refusal"
    for token in ["RECON", "EXPLOIT", "EXFILTRATION", "END_OF_CAMPAIGN"]:
        assert redchain.parse_tactic(token) == token
    assert redchain.parse_translation("SUCCESS the shell opened")["verdict"] == "SUCCESS"
    assert redchain.parse_translation("maybe") is None


def test_placeholders_and_tokens():
    spans = redchain.detect_placeholders(["cd /home/<USERNAME>/"])
    assert spans == [{"command_index": 0, "offset": 9, "length": 10, "text": "<USERNAME>"}]
    text = "one two three four five six seven"
    assert redchain.estimate_tokens(text) == math.ceil(len(text.split()) / 0.75)


def test_eval_row_and_exports():
    r = redchain.run_trials("builtin:single-service:vsftpd", str(DATA / "scripts" / "eval" / "vsftpd.script"), 10, 0)
    assert r["counts"] == {"SuccessfulExploit": 10, "ExecutedNoAccess": 0, "SyntaxError": 0, "IncorrectAction": 0}
    assert r["unique_actions"] == 1
    assert "vsftpd 2.3.4,10,0,0,0,1" in r["csv"]
    names = redchain.builtin_scenarios()
    assert "metasploitable-like" in names
    exported = redchain.export_scenario("single-service:vsftpd")
    assert exported == (DATA / "scenarios" / "single-service-vsftpd.json").read_text()
    json.loads(redchain.export_templates())


def test_ablation_rows_follow_variants():
    fixture = (DATA / "fixtures" / "vsftpd_scan.txt").read_text()
    rows = redchain.run_ablation(fixture, str(DATA / "scripts" / "ablation.script"))
    variants = redchain.ablation_variants()
    assert len(rows) == len(variants)
    assert [r["prompt"] for r in rows] == [fixture.strip() + "\n\n" + v for v in variants]
    assert "STOP" in rows[-1]["response"]


def test_corrupt_transcript_raises():
    out = redchain.run_campaign(str(DATA / "configs" / "demo.conf"))
    with pytest.raises(redchain.TranscriptError):
        redchain.transcript_events(out["transcript"][: len(out["transcript"]) // 2])
    events = redchain.transcript_events(out["transcript"])
    assert [e["seq"] for e in events] == list(range(len(events)))
