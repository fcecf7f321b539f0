from explainable_bpr.constants import (
    EXIT_DATA,
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_USAGE,
    TOOL_DATASET_STATS,
    TOOL_EXPLAIN,
    TOOL_RECOMMEND,
)
from explainable_bpr.schemas import LossKind


def test_loss_kind_names():
    assert [kind.value for kind in LossKind] == ["BPR", "UBPR", "EBPR", "pUEBPR", "UEBPR"]


def test_exit_codes():
    assert [EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC] == [0, 1, 2, 3]


def test_tool_names():
    for name in [TOOL_RECOMMEND, TOOL_EXPLAIN, TOOL_DATASET_STATS]:
        assert name.startswith("ebpr_")
