import filecmp
from dataclasses import replace

import pytest

from mprbench.dataset import (
    BundleConfig,
    DatasetBundle,
    EndpointMissing,
    GenerationFailed,
    LeakageDetected,
    LlmTextGen,
    QuotaUnmeetable,
    TemplateTextGen,
    ValueOrientedEdge,
    build_bundle,
    derive_question,
    load_bundle,
    mentions,
    render_statement,
    save_bundle,
    validate_bundle,
)
from mprbench.graph import Edge, GraphScaleConfig, Node, PathStep, ReasoningPath, SpecificGraph, resolve_answer
from mprbench.providers import ScriptedProvider, ScriptedRule
from helpers import toy_graph, toy_meta


def _husband_world():
    g = toy_graph(
        [("a", "person", "Alice"), ("d", "person", "David"), ("ny", "city", "New York"),
         ("s1", "salary", "100 (USD)"), ("s2", "salary", "200 (USD)")],
        [("person_person", "a", "d", "husband"), ("person_city", "d", "ny", "works in"),
         ("salary_salary", "s2", "s1", "greater than")],
    )
    path = ReasoningPath((PathStep("e0"), PathStep("e1")), anchor="a", answer_node="ny")
    return g, path


def test_template_statement(meta):
    g = SpecificGraph(meta, [Node("n0", "person", "Alice"), Node("n1", "person", "Bob")],
                      [Edge("e0", "person_person", "n0", "n1", "supervisor", "entity-oriented")])
    st = render_statement(g.edge("e0"), g, TemplateTextGen(), "u7")
    assert st.text == "Alice is supervised by Bob."
    assert (st.id, st.edge_ref, st.user_id) == ("u7-s0", "e0", "u7")


def test_value_edges_have_no_statement():
    g, _ = _husband_world()
    with pytest.raises(ValueOrientedEdge):
        render_statement(g.edge("e2"), g, TemplateTextGen())


def test_two_hop_question():
    g, path = _husband_world()
    gen = TemplateTextGen()
    refs = [render_statement(g.edge(e), g, gen) for e in ("e0", "e1")]
    q = derive_question(path, refs, g, gen)
    assert q == "Which city does the husband of Alice work in?"
    assert resolve_answer(g, path) == {"New York"}
    assert not mentions(q, "David") and not mentions(q, "New York")


def test_leaky_generator_is_rejected():
    g, path = _husband_world()

    class Leaky(TemplateTextGen):
        def question(self, path, refs, graph):
            return "Which city does David, the husband of Alice, work in?"

    refs = [render_statement(g.edge(e), g, TemplateTextGen()) for e in ("e0", "e1")]
    with pytest.raises(LeakageDetected):
        derive_question(path, refs, g, Leaky())


def test_llm_statement_regenerates_until_endpoints_present():
    g, _ = _husband_world()
    provider = ScriptedProvider([ScriptedRule("Fact:", ("Her spouse is David.", "Alice is married to David."))])
    st = render_statement(g.edge("e0"), g, LlmTextGen(provider))
    assert st.text == "Alice is married to David."
    assert len(provider.calls) == 2
    stubborn = ScriptedProvider([ScriptedRule("Fact:", ("Her spouse is David.",))])
    with pytest.raises(EndpointMissing):
        render_statement(g.edge("e0"), g, LlmTextGen(stubborn, retries=2))
    assert len(stubborn.calls) == 3


def test_llm_question_validated():
    g, path = _husband_world()
    refs = [render_statement(g.edge(e), g, TemplateTextGen()) for e in ("e0", "e1")]
    ok = ScriptedProvider([ScriptedRule("Draft question:", ("Where does David work?", "In which city is Alice's husband employed?"))])
    assert derive_question(path, refs, g, LlmTextGen(ok)) == "In which city is Alice's husband employed?"
    bad = ScriptedProvider([ScriptedRule("Draft question:", ("Where does David work?",))])
    with pytest.raises(GenerationFailed):
        derive_question(path, refs, g, LlmTextGen(bad, retries=1))


def test_small_bundle_schema(meta):
    b = build_bundle(meta, BundleConfig(users=2, hop_min=2, hop_max=4, per_hop=3, seed=1))
    assert [len(sd.tasks) for sd in b.sub_datasets] == [9, 9]
    for sd in b.sub_datasets:
        ids = {s.id for s in sd.statements}
        for t in sd.tasks:
            assert set(t.references) <= ids
    assert b.manifest["counts_by_hop"] == {"2": 6, "3": 6, "4": 6}
    assert validate_bundle(b).ok


def test_every_task_passes_oracles(small_bundle):
    report = validate_bundle(small_bundle)
    assert report.checked == len(small_bundle.tasks)
    assert report.failures == []
    for sd in small_bundle.sub_datasets:
        for t in sd.tasks:
            assert resolve_answer(sd.graph, t.path_detail) == {t.answer}
            smap = sd.statement_map()
            for r in t.references:
                e = sd.graph.edge(smap[r].edge_ref)
                assert mentions(smap[r].text, sd.graph.value(e.source))
                assert mentions(smap[r].text, sd.graph.value(e.target))


def test_validation_catches_corruption(small_bundle):
    sd = small_bundle.sub_datasets[0]
    t = sd.tasks[0]
    broken = replace(t, answer="Nowhere", references=t.references[:-1] + ("u00-s999999",))
    sd2 = replace(sd, tasks=[broken])
    report = validate_bundle(DatasetBundle([sd2], {}))
    msgs = " ".join(m for _, m in report.failures)
    assert "does not resolve" in msgs and "answer set" in msgs


def test_round_trip_and_byte_determinism(tmp_path, meta):
    cfg = BundleConfig(users=1, hop_min=2, hop_max=5, per_hop=2, seed=9)
    save_bundle(build_bundle(meta, cfg), tmp_path / "a")
    save_bundle(build_bundle(meta, cfg), tmp_path / "b")
    for name in ("statements.jsonl", "tasks.jsonl", "manifest.json", "graphs/u00.json"):
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False)
    loaded = load_bundle(tmp_path / "a")
    fresh = build_bundle(meta, cfg)
    assert [t.to_dict() for t in loaded.tasks] == [t.to_dict() for t in fresh.tasks]
    assert validate_bundle(loaded).ok


def test_quota_unmeetable():
    meta = toy_meta()
    scale = GraphScaleConfig(nodes={"person": 2, "city": 1, "salary": 1}, edges={
        "person_person": 1, "person_city": 1, "person_salary": 0, "salary_salary": 0})
    with pytest.raises(QuotaUnmeetable):
        build_bundle(meta, BundleConfig(users=1, hop_min=6, hop_max=6, per_hop=1, scale=scale, attempts_per_task=2))
