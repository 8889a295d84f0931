import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lebid.domain import (
    BandSequence,
    Dataset,
    Hyperparameters,
    SamplingConfig,
    ZohInput,
    load_dataset,
    save_dataset,
)
from lebid.errors import ValidationError


def make_dataset(eta=(0.0,), h=1.0, oracle_z=None, events=None):
    return Dataset(
        input=ZohInput(delta_u=1.0, amplitudes=(1.0,)),
        bands=BandSequence(eta=eta, h=h, delta=0.5),
        oracle_z=oracle_z,
        events=events,
    )


class TestTypeInvariants:
    def test_sampling_config_rejects_nonpositive(self):
        with pytest.raises(ValidationError):
            SamplingConfig(delta=0.0, h=1.0)
        with pytest.raises(ValidationError):
            SamplingConfig(delta=0.1, h=-1.0)
        with pytest.raises(ValidationError):
            SamplingConfig(delta=0.1, h=1.0, sim_substeps=0)

    def test_zoh_input_invariants(self):
        with pytest.raises(ValidationError):
            ZohInput(delta_u=0.0, amplitudes=(1.0,))
        with pytest.raises(ValidationError):
            ZohInput(delta_u=1.0, amplitudes=())
        with pytest.raises(ValidationError):
            ZohInput(delta_u=1.0, amplitudes=(1.0,), t0=0.5)

    def test_zoh_input_is_causal_and_finite_support(self):
        u = ZohInput(delta_u=2.0, amplitudes=(3.0, -1.0))
        assert u.value_at(-0.001) == 0.0
        assert u.value_at(0.0) == 3.0
        assert u.value_at(1.999) == 3.0
        assert u.value_at(2.0) == -1.0
        assert u.value_at(4.0) == 0.0

    def test_hold_substeps_requires_integer_multiple(self):
        u = ZohInput(delta_u=3.0, amplitudes=(1.0,))
        assert u.hold_substeps(0.1) == 30
        with pytest.raises(ValidationError):
            u.hold_substeps(0.7)

    def test_band_edges_must_sit_on_threshold_grid(self):
        with pytest.raises(ValidationError, match="eta not on grid"):
            BandSequence(eta=(0.5,), h=1.0, delta=0.1)
        b = BandSequence(eta=(-2.0, 0.0, 3.0), h=1.0, delta=0.1)
        assert b.n == 3

    def test_band_membership_is_lower_inclusive(self):
        b = BandSequence(eta=(1.0,), h=1.0, delta=0.1)
        assert b.contains(0, 1.0)
        assert b.contains(0, 1.999)
        assert not b.contains(0, 2.0)
        assert not b.contains(0, 0.999)

    def test_hyperparameters_strictly_positive(self):
        Hyperparameters(gamma=1.0, beta=2.0, sigma2=0.01)
        for bad in (dict(gamma=0.0, beta=1.0, sigma2=1.0),
                    dict(gamma=1.0, beta=-1.0, sigma2=1.0),
                    dict(gamma=1.0, beta=1.0, sigma2=math.inf)):
            with pytest.raises(ValidationError):
                Hyperparameters(**bad)

    def test_oracle_z_must_lie_in_bands(self):
        make_dataset(eta=(0.0, 1.0), oracle_z=(0.3, 1.9))
        with pytest.raises(ValidationError, match="outside its band"):
            make_dataset(eta=(0.0, 1.0), oracle_z=(0.3, 2.0))

    def test_oracle_z_length_must_match(self):
        with pytest.raises(ValidationError, match="length"):
            make_dataset(eta=(0.0, 1.0), oracle_z=(0.3,))

    def test_events_strictly_increasing(self):
        make_dataset(events=((0.0, 0.0), (0.7, 1.0)))
        with pytest.raises(ValidationError, match="strictly increasing"):
            make_dataset(events=((0.0, 0.0), (0.0, 1.0)))

    def test_event_values_on_grid(self):
        with pytest.raises(ValidationError, match="event value not on grid"):
            make_dataset(events=((0.0, 0.25),))


class TestDatasetIo:
    def test_minimal_roundtrip_identity(self, tmp_path):
        ds = make_dataset(eta=(0.0,), h=1.0)
        p = tmp_path / "ds.json"
        save_dataset(ds, p)
        assert load_dataset(p) == ds

    def test_roundtrip_preserves_oracle_z_exactly(self, tmp_path):
        z = (0.1 + 0.2, 1.0 / 3.0, 0.9999999999999999)
        ds = make_dataset(eta=(0.0, 0.0, 0.0), oracle_z=z)
        p = tmp_path / "ds.json"
        save_dataset(ds, p)
        back = load_dataset(p)
        assert back.oracle_z == z
        assert back == ds

    def test_roundtrip_preserves_events(self, tmp_path):
        ds = make_dataset(events=((0.0, 0.0), (0.123456789012345678, 1.0)))
        p = tmp_path / "ds.json"
        save_dataset(ds, p)
        assert load_dataset(p) == ds

    def test_unwritable_path_errors_without_partial_file(self, tmp_path):
        ds = make_dataset()
        missing_dir = tmp_path / "no" / "such" / "dir"
        target = missing_dir / "ds.json"
        with pytest.raises(ValidationError, match="cannot write"):
            save_dataset(ds, target)
        assert not target.exists()

    def test_load_rejects_eta_off_grid(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(
            '{"schema_version": 1,'
            ' "input": {"delta_u": 1.0, "amplitudes": [1.0], "t0": 0.0},'
            ' "bands": {"eta": [0.5], "h": 1.0, "delta": 0.5},'
            ' "oracle_z": null, "events": null}'
        )
        with pytest.raises(ValidationError, match="eta not on grid"):
            load_dataset(p)

    def test_load_rejects_oracle_z_outside_band(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(
            '{"schema_version": 1,'
            ' "input": {"delta_u": 1.0, "amplitudes": [1.0], "t0": 0.0},'
            ' "bands": {"eta": [0.0], "h": 1.0, "delta": 0.5},'
            ' "oracle_z": [1.5], "events": null}'
        )
        with pytest.raises(ValidationError, match="outside its band"):
            load_dataset(p)

    def test_load_rejects_garbage_and_wrong_schema(self, tmp_path):
        p = tmp_path / "garbage.json"
        p.write_text("not json at all {")
        with pytest.raises(ValidationError, match="invalid JSON"):
            load_dataset(p)
        p.write_text('{"schema_version": 99}')
        with pytest.raises(ValidationError, match="schema"):
            load_dataset(p)
        with pytest.raises(ValidationError, match="cannot read"):
            load_dataset(tmp_path / "missing.json")

    def test_save_rejects_non_finite(self, tmp_path):
        ds = make_dataset()
        object.__setattr__(ds.input, "amplitudes", (math.nan,))
        with pytest.raises(ValidationError, match="non-finite"):
            save_dataset(ds, tmp_path / "ds.json")

    @given(
        amps=st.lists(
            st.floats(allow_nan=False, allow_infinity=False, width=64),
            min_size=1,
            max_size=8,
        )
    )
    @settings(max_examples=200, deadline=None)
    def test_arbitrary_finite_floats_roundtrip_bit_exactly(self, amps, tmp_path_factory):
        ds = Dataset(
            input=ZohInput(delta_u=1.0, amplitudes=tuple(amps)),
            bands=BandSequence(eta=(0.0,), h=1.0, delta=0.5),
        )
        p = tmp_path_factory.mktemp("rt") / "ds.json"
        save_dataset(ds, p)
        back = load_dataset(p)
        assert all(
            math.copysign(1, a) == math.copysign(1, b) and (a == b or (math.isnan(a) and math.isnan(b)))
            for a, b in zip(ds.input.amplitudes, back.input.amplitudes)
        )
