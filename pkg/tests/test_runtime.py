import json
import logging

import pytest

from utility.logging_config import JSONFormatter, bind_run, get_logger, log_timing
from utility.runtime import derive_rng, derive_seed, ordered_map


def square(value: int) -> int:
    return value * value


class TestSeeds:
    def test_stable_and_in_range(self):
        assert derive_seed(7, 2, 0) == derive_seed(7, 2, 0)
        assert 0 <= derive_seed(7, 2, 0) < 2**64

    def test_keys_give_distinct_streams(self):
        seeds = {derive_seed(7), derive_seed(7, 0), derive_seed(7, 1), derive_seed(7, 0, 1), derive_seed(8, 0)}
        assert len(seeds) == 5

    def test_rng_streams_repeat(self):
        assert derive_rng(3, 1).integers(0, 1000, size=10).tolist() == derive_rng(3, 1).integers(0, 1000, size=10).tolist()


class TestOrderedMap:
    @pytest.mark.parametrize("workers", [1, 2])
    def test_keeps_input_order(self, workers):
        assert list(ordered_map(square, range(8), workers)) == [0, 1, 4, 9, 16, 25, 36, 49]


class TestLogging:
    def test_bound_run_id_reaches_records(self, caplog):
        caplog.set_level(logging.INFO)
        bind_run(get_logger("test"), "T=20").info("hello")
        assert caplog.records[-1].run_id == "T=20"
        assert caplog.records[-1].name == "distill_defense.test"

    def test_log_timing_records_duration(self, caplog):
        caplog.set_level(logging.INFO)
        with log_timing(get_logger("test"), "work"):
            pass
        assert caplog.records[-1].message.startswith("work completed in ")
        assert caplog.records[-1].duration >= 0

    def test_json_formatter(self):
        record = logging.LogRecord("distill_defense.x", logging.INFO, __file__, 1, "msg %s", ("a",), None)
        record.run_id = "baseline"
        document = json.loads(JSONFormatter().format(record))
        assert document["message"] == "msg a"
        assert document["run_id"] == "baseline"
        assert document["level"] == "INFO"
