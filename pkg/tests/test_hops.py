import pytest

from hopfuse.backends import BackendSuite, MockRRBackend, mock_suite
from hopfuse.dense_index import build
from hopfuse.errors import PipelineError
from hopfuse.evidence import best_hop
from hopfuse.hops import IteratorConfig, RunFailure, batch_run, run, trace_line

from helpers import build_planted_world, paragraph_record, planted_chains


class TestPlantedRecovery:
    def test_four_hop_chain_recovered_in_order(self):
        chains = {"q4?": ["d0400", "d0210", "d0333", "d0150"]}
        corpus, index, suite = build_planted_world(1000, chains)
        config = IteratorConfig(t_max=4, k=5)
        result = run("q4?", corpus, index, suite, config)
        assert list(result.final_chain)[:4] == chains["q4?"]
        assert result.best.hop == 3
        assert result.best.set_score == 1.0

    def test_two_hop_chain_best_hop_is_final_planted(self):
        chains = {"q2?": ["d0200", "d0300"]}
        corpus, index, suite = build_planted_world(600, chains)
        result = run("q2?", corpus, index, suite, IteratorConfig(t_max=4, k=5))
        assert list(result.final_chain)[:2] == chains["q2?"]
        # the chain completes at hop 1; later hops tie at 1.0 and the
        # earliest-tie rule selects the final planted hop
        assert result.best.hop == 1

    def test_hundred_planted_chains_all_recovered(self):
        chains = planted_chains(100, 1000)
        corpus, index, suite = build_planted_world(1000, chains)
        config = IteratorConfig(t_max=4, k=5)
        outcomes = batch_run(list(chains), corpus, index, suite, config, workers=4)
        for question, outcome in zip(chains, outcomes):
            planted = chains[question]
            assert not isinstance(outcome, RunFailure)
            assert list(outcome.final_chain)[: len(planted)] == planted
            assert outcome.best.hop == len(planted) - 1

    def test_single_hop_degenerate(self):
        chains = {"q1?": ["d0123"]}
        corpus, index, suite = build_planted_world(300, chains)
        result = run("q1?", corpus, index, suite, IteratorConfig(t_max=1, k=5))
        assert len(result.history) == 1
        assert result.best.hop == 0
        assert result.final_chain[0] == "d0123"


class TestLoopInvariants:
    def make_world(self):
        chains = {"q?": ["d0150", "d0250"]}
        return build_planted_world(400, chains)

    def test_retrieved_never_in_chain(self):
        corpus, index, suite = self.make_world()
        result = run("q?", corpus, index, suite, IteratorConfig(t_max=4, k=5))
        for hop in result.trace:
            chain_at_start = set(hop["chain"])
            hits = {h["doc_id"] for h in hop["hits"]}
            assert not (chain_at_start & hits)

    def test_dedup_across_hops(self):
        corpus, index, suite = self.make_world()
        result = run("q?", corpus, index, suite, IteratorConfig(t_max=4, k=5))
        seen: set[str] = set()
        for hop in result.trace:
            hits = {h["doc_id"] for h in hop["hits"]}
            assert not (seen & hits)
            seen |= hits

    def test_redundant_retrieval_allowed_when_dedup_off(self):
        corpus, index, suite = self.make_world()
        config = IteratorConfig(t_max=4, k=5, dedup_across_hops=False)
        result = run("q?", corpus, index, suite, config)
        all_hits = [h["doc_id"] for hop in result.trace for h in hop["hits"]]
        assert len(all_hits) > len(set(all_hits))

    def test_history_length_and_best_invariant(self):
        corpus, index, suite = self.make_world()
        config = IteratorConfig(t_max=3, k=5)
        result = run("q?", corpus, index, suite, config)
        assert len(result.history) == 3
        assert result.best == best_hop(result.history)

    def test_evidence_cap_respected(self):
        corpus, index, suite = self.make_world()
        result = run("q?", corpus, index, suite, IteratorConfig(t_max=4, k=5))
        for ev in result.history:
            assert len(ev.sentences) <= 9

    def test_early_exit(self):
        corpus, index, suite = self.make_world()
        config = IteratorConfig(t_max=4, k=5, early_exit_score=1.0)
        result = run("q?", corpus, index, suite, config)
        assert len(result.history) == 2  # chain completes at hop 1

    def test_empty_retrieval_records_empty_evidence_and_continues(self):
        chains = {"q?": ["d0004", "d0005"]}
        corpus, index, suite = build_planted_world(6, chains)
        # k exceeds the corpus: hop 0 retrieves everything, later hops
        # find nothing eligible and must be recorded with empty evidence
        result = run("q?", corpus, index, suite, IteratorConfig(t_max=3, k=10))
        assert len(result.history) == 3
        assert result.trace[1]["hits"] == []
        assert result.history[1].sentences == ()
        assert result.history[1].set_score == 0.0
        assert result.trace[2]["hits"] == []
        # the populated hop still wins best_hop
        assert result.best.hop == 0


class TestMockPipeline:
    def make_world(self, n=30, dim=64, seed=0):
        records = [paragraph_record(f"m{i:03d}") for i in range(n)]
        from hopfuse.corpus import ingest

        corpus, _ = ingest(records)
        suite = mock_suite(dim=dim, seed=seed)
        index = build([(p.doc_id, suite.encoder.encode_doc(p)) for p in corpus], dim=dim)
        return corpus, index, suite

    def test_bit_deterministic_across_runs_and_workers(self):
        corpus, index, suite = self.make_world()
        questions = [f"mock question {i}?" for i in range(6)]
        config = IteratorConfig(t_max=3, k=4)
        lines = []
        for workers in (1, 4):
            outcomes = batch_run(questions, corpus, index, suite, config, workers=workers)
            lines.append([trace_line(o) for o in outcomes])
        assert lines[0] == lines[1]
        again = [trace_line(o)
                 for o in batch_run(questions, corpus, index, suite, config, workers=2)]
        assert lines[0] == again

    def test_batch_preserves_order(self):
        corpus, index, suite = self.make_world()
        questions = [f"ordered {i}?" for i in range(5)]
        outcomes = batch_run(questions, corpus, index, suite,
                             IteratorConfig(t_max=2, k=3), workers=3)
        assert [o.question for o in outcomes] == questions

    def test_empty_question_list(self):
        corpus, index, suite = self.make_world()
        assert batch_run([], corpus, index, suite) == []

    def test_backend_failure_isolated_in_batch(self):
        corpus, index, suite = self.make_world()

        class FlakyRR:
            pass

        class FlakyReranker:
            def __init__(self, inner):
                self.inner = inner

            def score(self, question, chain, paragraph):
                if question == "bad?":
                    raise RuntimeError("backend exploded")
                return self.inner.score(question, chain, paragraph)

        flaky = BackendSuite(
            encoder=suite.encoder,
            reranker=FlakyReranker(suite.reranker),
            evidence=suite.evidence,
            rr=MockRRBackend(0),
        )
        outcomes = batch_run(["ok one?", "bad?", "ok two?"], corpus, index, flaky,
                             IteratorConfig(t_max=2, k=3))
        assert not isinstance(outcomes[0], RunFailure)
        assert isinstance(outcomes[1], RunFailure)
        assert "backend exploded" in outcomes[1].error
        assert not isinstance(outcomes[2], RunFailure)

    def test_backend_failure_aborts_single_run_with_partial_trace(self):
        corpus, index, suite = self.make_world()

        class FailsOnSecondHop:
            def __init__(self, inner):
                self.inner = inner
                self.calls = 0

            def encode_query(self, question, chain):
                if chain:
                    raise RuntimeError("encoder exploded")
                return self.inner.encode_query(question, chain)

            def encode_doc(self, paragraph):
                return self.inner.encode_doc(paragraph)

            @property
            def dim(self):
                return self.inner.dim

        failing = BackendSuite(
            encoder=FailsOnSecondHop(suite.encoder),
            reranker=suite.reranker,
            evidence=suite.evidence,
        )
        with pytest.raises(PipelineError) as err:
            run("any question?", corpus, index, failing, IteratorConfig(t_max=3, k=3))
        assert len(err.value.partial_trace) == 1  # hop 0 completed


class TestTraceRecords:
    def test_trace_line_round_trips_evidence(self):
        import json

        from hopfuse.hops import sentence_from_record

        chains = {"q?": ["d0150", "d0250"]}
        corpus, index, suite = build_planted_world(400, chains)
        result = run("q?", corpus, index, suite, IteratorConfig(t_max=2, k=5))
        record = json.loads(trace_line(result, {"id": "q-1"}))
        assert record["id"] == "q-1"
        assert record["best_hop"] == result.best.hop
        best = next(h for h in record["hops"] if h["hop"] == record["best_hop"])
        rebuilt = [sentence_from_record(s) for s in best["evidence"]]
        assert [s.key for s in rebuilt] == [s.key for s in result.best.sentences]
