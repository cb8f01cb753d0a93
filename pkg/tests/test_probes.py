import pytest
import torch

import ctrrefine.probes as P
from ctrrefine.data import FieldSchema
from ctrrefine.probes import (AuditFailure, GradientCheckError, ProbeError, ProbeSetup,
                              audit_param_counts, criteo_schema, gradient_check,
                              gradient_check_backbone, gradient_check_module, probe_context_awareness,
                              probe_linearity, probe_module, probe_weight_range)
from ctrrefine.refine import NONNEG, REAL, UNIT, soft_gate_combine


def setup(name, seed=0):
    return ProbeSetup.make(name, seed)


# -- taxonomy probes -------------------------------------------------------------------------

@pytest.mark.parametrize("name,expected", [("FWN", False), ("VGate", False), ("BGate", False),
                                           ("SKIP", False), ("TCE", True), ("FRNetV", True),
                                           ("FRNetB", True), ("SENET", True)])
def test_context_awareness(name, expected):
    assert probe_context_awareness(setup(name)) is expected


@pytest.mark.parametrize("name,expected", [("FEN", True), ("VGate", True), ("SKIP", True),
                                           ("FRNetB", False), ("GFRL", False), ("TCE", False)])
def test_linearity(name, expected):
    linear, cos = probe_linearity(setup(name))
    assert linear is expected
    assert 0.0 <= cos <= 1.0 + 1e-12


@pytest.mark.parametrize("name,expected", [("GFRL", UNIT), ("FEN", UNIT), ("DFEN", NONNEG),
                                           ("SENET", NONNEG), ("BGate", REAL), ("SelfAtt", None),
                                           ("DRM", None), ("PFFN", None)])
def test_weight_range(name, expected):
    assert probe_weight_range(setup(name))[0] == expected


def test_context_probe_needs_two_fields():
    with pytest.raises(ProbeError):
        probe_context_awareness(ProbeSetup.make("FEN", vocab_sizes=(5,)))


def test_linearity_indeterminate_on_all_zero_output():
    s = setup("TCE")
    with torch.no_grad():
        s.module.aggregate.weight.zero_()
    with pytest.raises(ProbeError):
        probe_linearity(s)


def test_probe_report_round_trip():
    rep = probe_module("GFRL", seed=1, trials=30)
    d = rep.to_dict()
    assert d["matches_declared"] and rep.matches_declared
    assert d["weight_range"] == UNIT and 0.0 <= d["weight_min"] <= d["weight_max"] <= 1.0


def test_report_mismatch_detected():
    rep = probe_module("VGate", trials=20)
    rep.context_aware = True
    assert not rep.matches_declared


# -- gradient checks ------------------------------------------------------------------------

def test_gradient_check_skip_is_exact():
    err = gradient_check_module("SKIP")
    assert err["E"] == pytest.approx(0.0, abs=1e-9)


def test_gradient_of_soft_gate_is_weight():
    E = torch.randn(2, 3, 4, dtype=torch.float64, requires_grad=True)
    W = torch.rand(2, 3, 4, dtype=torch.float64)
    C = torch.randn(2, 3, 4, dtype=torch.float64)
    err = gradient_check(lambda: soft_gate_combine(E, C, W).sum(), {"E": E})
    assert err["max"] < 1e-9
    assert torch.equal(E.grad, W)


def test_gradient_check_frnet_b():
    assert gradient_check_module("FRNetB")["max"] < 1e-4


def test_gradient_check_reports_nonfinite_block():
    x = torch.tensor([0.0, 1.0], dtype=torch.float64, requires_grad=True)
    with pytest.raises(GradientCheckError, match="x"):
        gradient_check(lambda: torch.sqrt(x).sum(), {"x": x})


def test_gradient_check_refuses_vanishing_gradient():
    with pytest.raises(GradientCheckError, match="vanish"):
        P._check_network(torch.nn.Sequential(torch.nn.Flatten(1), torch.nn.Linear(12, 1),
                                             torch.nn.Hardtanh(5, 6)), 4, 3, seed=0)


def test_gradient_check_catches_wrong_analytic_gradient():
    class Wrong(torch.autograd.Function):
        @staticmethod
        def forward(ctx, x):
            ctx.save_for_backward(x)
            return x ** 2

        @staticmethod
        def backward(ctx, g):
            (x,) = ctx.saved_tensors
            return g * 3 * x  # should be 2x

    x = torch.randn(5, dtype=torch.float64, requires_grad=True)
    assert gradient_check(lambda: Wrong.apply(x).sum(), {"x": x})["max"] > 0.1


@pytest.mark.parametrize("name", ["FM", "CN", "CN2", "DNN", "AFN"])
def test_backbone_gradients(name):
    assert gradient_check_backbone(name)["max"] < 1e-4


# -- parameter audit ----------------------------------------------------------------------------

def test_audit_on_criteo_schema():
    rows = {r["module"]: r for r in audit_param_counts(criteo_schema())}
    assert rows["VGate"] == {"module": "VGate", "actual": 624, "expected": 624, "status": "pass"}
    assert rows["SKIP"]["actual"] == 0 and rows["SKIP"]["status"] == "pass"
    for name in P.PUBLISHED_EXACT:
        assert rows[name]["status"] == "pass"
    assert rows["FEN"]["status"] == "reported"
    total = [r for r in rows.values() if r["module"].startswith("FM total")][0]
    assert total["actual"] == 18_475_329 and total["status"] == "pass"


def test_audit_flags_config_difference():
    (row, _) = audit_param_counts(criteo_schema(), ["TCE"], cfgs={"TCE": {"m": 16}})
    assert row["actual"] == 2 * 39 * 16 * 16 == 19_968
    assert row["status"].startswith("config differs") and "32" in row["status"]


def test_audit_other_schema_is_not_asserted():
    rows = audit_param_counts(FieldSchema.synthetic([4, 4, 4]), ["SENET"])
    assert rows[0]["status"] == "schema differs from table"
    assert rows[0]["actual"] == 2 * (9 + 3)


def test_audit_mismatch_raises(monkeypatch):
    monkeypatch.setitem(P.PUBLISHED_EXACT, "SENET", 3121)
    with pytest.raises(AuditFailure, match="SENET: expected 3121, got 3120"):
        audit_param_counts(criteo_schema(), ["SENET"])
    rows = audit_param_counts(criteo_schema(), ["SENET"], strict=False)
    assert rows[0]["status"] == "fail"
