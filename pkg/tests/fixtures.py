"""Worked example tables, transcribed with exact fractions where printed."""

from mdmkit.core import ChoiceDataset, Grouping

A, B, C, D = [1, 2, 3], [1, 2], [1, 3], [2, 3]

# all 1/3 on {1,2,3}; cyclic 5/9 vs 4/9 on the pairs
NOT_MDM_N3 = ChoiceDataset(3, [A, B, C, D], [
    [1 / 3, 1 / 3, 1 / 3],
    [5 / 9, 4 / 9],
    [4 / 9, 5 / 9],
    [5 / 9, 4 / 9],
])
# ranking weights reproducing NOT_MDM_N3
NOT_MDM_N3_RANKINGS = {
    (1, 2, 3): 2 / 9, (1, 3, 2): 1 / 9, (2, 1, 3): 1 / 9,
    (2, 3, 1): 2 / 9, (3, 1, 2): 2 / 9, (3, 2, 1): 1 / 9,
}

N4_SETS = [[1, 2, 3, 4], [1, 2, 3], [1, 2, 4], [1, 2]]
# representable by rankings, not by marginals
N4_CASE2 = ChoiceDataset(4, N4_SETS, [
    [3 / 20, 3 / 20, 7 / 20, 7 / 20],
    [7 / 20, 2 / 8, 2 / 5],
    [2 / 8, 7 / 20, 2 / 5],
    [1 / 2, 1 / 2],
])
# representable by marginals, not by rankings
N4_CASE3 = ChoiceDataset(4, N4_SETS, [
    [0.1, 0.2, 0.2, 0.5],
    [0.2, 0.25, 0.55],
    [0.2, 0.25, 0.55],
    [0.25, 0.75],
])

PAIRS3 = [[1, 2], [1, 3], [2, 3]]
MIX_X = ChoiceDataset(3, PAIRS3, [[0.3, 0.7], [0.9, 0.1], [0.8, 0.2]])
MIX_Y = ChoiceDataset(3, PAIRS3, [[0.75, 0.25], [0.1, 0.9], [0.2, 0.8]])
MIX_W = ChoiceDataset(3, PAIRS3, [[0.57, 0.43], [0.42, 0.58], [0.44, 0.56]])

GROUP_TABLE = ChoiceDataset(4, [[1, 2, 3], [1, 2, 4]], [[0.28, 0.40, 0.32], [0.25, 0.20, 0.55]])
GROUP_TABLE_SPLIT = Grouping.from_groups([[1, 3], [2, 4]], 4)

APU_SETS = [[1, 2, 3], [1, 2], [1, 3]]
APU_P = ChoiceDataset(3, APU_SETS, [[0.1, 0.2, 0.7], [0.4, 0.6], [0.25, 0.75]])
APU_Q = ChoiceDataset(3, APU_SETS, [[0.6, 0.3, 0.1], [0.65, 0.35], [0.8, 0.2]])
APU_R = ChoiceDataset(3, APU_SETS, [[0.3, 0.24, 0.46], [0.5, 0.5], [0.47, 0.53]])

KEMENY_SETS = [[1, 2, 4], [1, 3, 5], [2, 3, 6]]
KEMENY_FEASIBLE = ChoiceDataset(6, KEMENY_SETS, [
    [1 / 9, 1 / 9, 7 / 9],
    [2 / 9, 1 / 9, 6 / 9],
    [2 / 9, 2 / 9, 5 / 9],
])
KEMENY_INFEASIBLE = ChoiceDataset(6, KEMENY_SETS, [
    [1 / 9, 2 / 9, 6 / 9],
    [2 / 9, 1 / 9, 6 / 9],
    [1 / 9, 2 / 9, 6 / 9],
])
