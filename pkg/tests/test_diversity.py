import random
import statistics

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pipetrack.diversity import (
    CalibrationError,
    Combiner,
    CombinerConfig,
    CombinerConfigError,
    RssVector,
    SwitchState,
    calibrate_threshold,
    egc,
    mrc,
    sc,
    scanc,
    ssc,
)

CFG = CombinerConfig()


def vec(*readings):
    return RssVector(epoch=0, readings=tuple(readings))


readings_strategy = st.lists(
    st.one_of(st.none(), st.floats(-85.0, -40.0)), min_size=1, max_size=8
).map(lambda r: vec(*r))


class TestEgc:
    def test_two_point_mean(self):
        assert egc(vec(-50.0, -60.0)) == pytest.approx(-55.0)

    def test_mean_over_present_subset(self):
        assert egc(vec(-50.0, None, -70.0, None)) == pytest.approx(-60.0)

    def test_all_absent(self):
        assert egc(vec(None, None)) is None


class TestMrc:
    def test_hand_worked_weights(self):
        # weights 40/60 and 20/60 over rss_min -90
        out = mrc(vec(-50.0, -70.0), CFG)
        assert out == pytest.approx(-56.666666666666664)

    def test_equal_readings_exact(self):
        assert mrc(vec(-63.0, -63.0, -63.0), CFG) == pytest.approx(-63.0)

    def test_single_reading_weight_one(self):
        assert mrc(vec(None, -72.5), CFG) == pytest.approx(-72.5)

    def test_reading_at_floor_is_config_error(self):
        with pytest.raises(CombinerConfigError):
            mrc(vec(-90.0, -60.0), CFG)

    def test_all_absent(self):
        assert mrc(vec(None, None), CFG) is None


class TestSc:
    def test_max(self):
        assert sc(vec(-50.0, -60.0)) == (-50.0, 0)

    def test_tie_breaks_to_lowest_index(self):
        assert sc(vec(-60.0, -50.0, -50.0)) == (-50.0, 1)

    def test_only_candidate(self):
        assert sc(vec(None, -72.0)) == (-72.0, 1)

    def test_all_absent(self):
        assert sc(vec(None, None)) is None


class TestSsc:
    def test_stays_above_threshold(self):
        out, state = ssc(SwitchState(0, -70.0), vec(-60.0, -80.0))
        assert out == -60.0
        assert state.current_antenna == 0

    def test_blind_switch_emits_worse_reading(self):
        out, state = ssc(SwitchState(0, -70.0), vec(-75.0, -90.0))
        assert out == -90.0
        assert state.current_antenna == 1

    def test_boundary_equality_counts_as_above(self):
        out, state = ssc(SwitchState(1, -70.0), vec(-60.0, -70.0))
        assert out == -70.0
        assert state.current_antenna == 1

    def test_absent_current_switches(self):
        out, state = ssc(SwitchState(0, -70.0), vec(None, -70.0))
        assert out == -70.0
        assert state.current_antenna == 1

    def test_wraps_around(self):
        out, state = ssc(SwitchState(1, -70.0), vec(-60.0, -80.0))
        assert state.current_antenna == 0
        assert out == -60.0


class TestScanc:
    def test_cyclic_scan_picks_first_qualifier(self):
        out, state = scanc(SwitchState(0, -70.0), vec(-75.0, -85.0, -65.0, -90.0))
        assert out == -65.0
        assert state.current_antenna == 2

    def test_no_qualifier_keeps_current(self):
        out, state = scanc(SwitchState(0, -70.0), vec(-75.0, -85.0, -88.0, -90.0))
        assert out == -75.0
        assert state.current_antenna == 0

    def test_current_above_threshold_stays(self):
        out, state = scanc(SwitchState(0, -70.0), vec(-60.0, -50.0))
        assert out == -60.0
        assert state.current_antenna == 0

    def test_no_qualifier_absent_current(self):
        out, state = scanc(SwitchState(0, -70.0), vec(None, -85.0))
        assert out is None
        assert state.current_antenna == 0


class TestCalibration:
    def test_zero_variance_gives_mean(self):
        window = [vec(-60.0, -60.0), vec(-60.0)]
        assert calibrate_threshold(window, CFG) == pytest.approx(-60.0)

    def test_hand_worked_two_values(self):
        # mean -60, population std 2, k=1
        assert calibrate_threshold([vec(-58.0, -62.0)], CFG) == pytest.approx(-62.0)

    def test_k_zero_gives_mean(self):
        cfg = CombinerConfig(calibration_k=0.0)
        assert calibrate_threshold([vec(-58.0, -62.0)], cfg) == pytest.approx(-60.0)

    def test_insufficient_data(self):
        with pytest.raises(CalibrationError):
            calibrate_threshold([vec(-60.0, None)], CFG)


class TestProperties:
    @given(v=readings_strategy)
    def test_range_containment(self, v):
        present = [r for _, r in v.present()]
        if not present:
            assert egc(v) is None and mrc(v, CFG) is None and sc(v) is None
            return
        lo, hi = min(present), max(present)
        for out in (egc(v), mrc(v, CFG), sc(v)[0]):
            assert lo - 1e-9 <= out <= hi + 1e-9

    @given(v=readings_strategy)
    def test_mrc_dominates_egc(self, v):
        present = [r for _, r in v.present()]
        if not present:
            return
        e, m = egc(v), mrc(v, CFG)
        if len(set(present)) == 1:
            assert m == pytest.approx(e)
        else:
            assert m > e

    @given(v=readings_strategy, seed=st.integers(0, 2**16))
    def test_permutation_invariance(self, v, seed):
        perm = list(range(v.antenna_count))
        random.Random(seed).shuffle(perm)
        shuffled = RssVector(epoch=0, readings=tuple(v.readings[i] for i in perm))
        present = [r for _, r in v.present()]
        if not present:
            return
        assert egc(shuffled) == pytest.approx(egc(v))
        assert mrc(shuffled, CFG) == pytest.approx(mrc(v, CFG))
        assert sc(shuffled)[0] == sc(v)[0]

    @given(r=st.floats(-85.0, -40.0), thr=st.floats(-90.0, -40.0))
    def test_single_antenna_degeneracy(self, r, thr):
        v = vec(r)
        assert egc(v) == r
        assert mrc(v, CFG) == r
        assert sc(v) == (r, 0)
        out, state = ssc(SwitchState(0, thr), v)
        assert out == r and state.current_antenna == 0
        out, state = scanc(SwitchState(0, thr), v)
        assert out == r and state.current_antenna == 0


def prose_rule_oracle(technique, threshold, n_ant, vectors):
    """Independent literal transcription of the switching rules."""
    current = 0
    outputs = []
    for v in vectors:
        r = v.readings[current]
        if r is not None and r >= threshold:
            outputs.append(r)
            continue
        if technique == "ssc":
            current = (current + 1) % n_ant
            outputs.append(v.readings[current])
        else:
            chosen = None
            for k in range(1, n_ant):
                cand = (current + k) % n_ant
                rc = v.readings[cand]
                if rc is not None and rc >= threshold:
                    chosen = cand
                    break
            if chosen is not None:
                current = chosen
                outputs.append(v.readings[current])
            else:
                outputs.append(v.readings[current])
    return outputs


@pytest.mark.parametrize("technique", ["ssc", "scanc"])
def test_switching_matches_prose_oracle(technique):
    rng = random.Random(2718)
    n_ant = 4
    threshold = -65.0
    vectors = []
    for _ in range(2000):
        vectors.append(vec(*[
            rng.uniform(-80, -50) if rng.random() < 0.8 else None
            for _ in range(n_ant)
        ]))
    expected = prose_rule_oracle(technique, threshold, n_ant, vectors)
    fn = ssc if technique == "ssc" else scanc
    state = SwitchState(0, threshold)
    got = []
    for v in vectors:
        out, state = fn(state, v)
        got.append(out)
    assert got == expected


class TestCombinerDispatcher:
    def test_unknown_technique(self):
        with pytest.raises(ValueError):
            Combiner("best")

    def test_stateless_dispatch(self):
        assert Combiner("egc").combine(vec(-50.0, -60.0)) == pytest.approx(-55.0)
        assert Combiner("sc").combine(vec(-50.0, -60.0)) == -50.0

    def test_stateful_dispatch_carries_antenna(self):
        c = Combiner("ssc", threshold=-70.0)
        assert c.combine(vec(-75.0, -60.0)) == -60.0  # blind switch to 1
        assert c.combine(vec(-80.0, -60.0)) == -60.0  # stays on 1
