"""Frozen reference values shared by the unit and acceptance tests."""
from ctrrefine.refine import NONNEG, REAL, UNIT

# Frozen taxonomy: information types, context-aware, granularity, activation, range,
# non-linearity, paradigm.
TAXONOMY = {
    "FEN": ({"CI"}, True, "vector", "softmax", UNIT, False, "selection"),
    "SENET": ({"OI"}, True, "vector", "relu", NONNEG, False, "selection"),
    "FWN": ({"IF"}, False, "bit", "relu", NONNEG, False, "selection"),
    "DFEN": ({"CF", "CI"}, True, "vector", "relu", NONNEG, False, "selection"),
    "DRM": ({"OI"}, True, None, None, None, True, "transformation"),
    "VGate": ({"IF"}, False, "vector", "identity", REAL, False, "selection"),
    "BGate": ({"IF"}, False, "bit", "identity", REAL, False, "selection"),
    "SelfAtt": ({"CF"}, True, None, None, None, True, "transformation"),
    "TCE": ({"CI"}, True, "bit", "identity", REAL, True, "selection"),
    "PFFN": ({"IF", "CI"}, True, None, None, None, True, "transformation"),
    "GFRL": ({"IF", "CI"}, True, "bit", "sigmoid", UNIT, True, "composite"),
    "FRNetV": ({"CF", "CI"}, True, "vector", "sigmoid", UNIT, True, "composite"),
    "FRNetB": ({"CF", "CI"}, True, "bit", "sigmoid", UNIT, True, "composite"),
}

# Frappe block of the overall comparison: SKIP followed by the thirteen modules.
FRAPPE_COLUMNS = ["SKIP", "FEN", "SENET", "FWN", "DFEN", "DRM", "VGate", "BGate", "SelfAtt", "TCE",
                  "PFFN", "GFRL", "FRNetV", "FRNetB"]
FRAPPE = {
    "FM": [0.9786, 0.9789, 0.9800, 0.9808, 0.9799, 0.9820, 0.9801, 0.9803, 0.9806, 0.9800, 0.9822, 0.9821, 0.9828, 0.9831],
    "DeepFM": [0.9824, 0.9828, 0.9827, 0.9824, 0.9824, 0.9827, 0.9828, 0.9825, 0.9831, 0.9824, 0.9830, 0.9828, 0.9837, 0.9840],
    "DeepFM(2)": [0.9824, 0.9830, 0.9829, 0.9829, 0.9827, 0.9825, 0.9835, 0.9828, 0.9836, 0.9839, 0.9829, 0.9843, 0.9848, 0.9846],
    "CN": [0.9797, 0.9829, 0.9798, 0.9810, 0.9810, 0.9803, 0.9803, 0.9803, 0.9816, 0.9819, 0.9826, 0.9827, 0.9825, 0.9826],
    "DCN": [0.9825, 0.9830, 0.9822, 0.9826, 0.9838, 0.9834, 0.9829, 0.9820, 0.9829, 0.9827, 0.9828, 0.9838, 0.9838, 0.9837],
    "DCN(2)": [0.9825, 0.9834, 0.9829, 0.9831, 0.9843, 0.9843, 0.9835, 0.9829, 0.9832, 0.9839, 0.9838, 0.9840, 0.9844, 0.9847],
    "AFN": [0.9812, 0.9826, 0.9812, 0.9816, 0.9822, 0.9821, 0.9821, 0.9814, 0.9820, 0.9826, 0.9815, 0.9835, 0.9838, 0.9838],
    "AFN+": [0.9827, 0.9838, 0.9827, 0.9831, 0.9840, 0.9836, 0.9830, 0.9826, 0.9830, 0.9836, 0.9827, 0.9838, 0.9843, 0.9844],
    "AFN+(2)": [0.9827, 0.9840, 0.9830, 0.9840, 0.9846, 0.9838, 0.9839, 0.9827, 0.9837, 0.9838, 0.9834, 0.9841, 0.9844, 0.9847],
    "CN2": [0.9810, 0.9822, 0.9813, 0.9826, 0.9830, 0.9825, 0.9827, 0.9813, 0.9827, 0.9821, 0.9817, 0.9825, 0.9826, 0.9834],
    "DCNV2": [0.9830, 0.9833, 0.9835, 0.9831, 0.9839, 0.9837, 0.9833, 0.9826, 0.9829, 0.9833, 0.9831, 0.9840, 0.9839, 0.9845],
    "DCNV2(2)": [0.9830, 0.9838, 0.9838, 0.9838, 0.9844, 0.9838, 0.9837, 0.9828, 0.9832, 0.9841, 0.9835, 0.9845, 0.9841, 0.9849],
}
FRAPPE_AVE_IMP = [0.10, 0.04, 0.08, 0.12, 0.11, 0.08, 0.02, 0.09, 0.11, 0.10, 0.17, 0.20, 0.22]

#: desk-scale targets on the Frappe FM row
FRAPPE_FM_SKIP_AUC = 0.9786
FRAPPE_FM_TOLERANCE = 0.004
#: exact added-parameter counts on the Criteo schema (F=39, D=16, M=1,086,784), TCE with m=32
CRITEO_EXACT_COUNTS = {"SKIP": 0, "SENET": 3120, "FWN": 10608, "DRM": 4563, "VGate": 624,
                       "BGate": 9984, "TCE": 39936}
CRITEO_FM_TOTAL = 18_475_329
