import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spcdi.errors import FormatError, InvalidArgument, SamplingWarning
from spcdi.field import (
    ComplexField,
    OpticalGeometry,
    dc_component,
    dft2,
    fresnel_number,
    fresnel_propagate,
    idft2,
    load_field,
    save_field,
)

from conftest import dft_by_definition, random_complex


def rel(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(np.asarray(b))


class TestComplexField:
    def test_rejects_non_square_and_tiny(self):
        with pytest.raises(InvalidArgument):
            ComplexField(np.zeros((3, 4)))
        with pytest.raises(InvalidArgument):
            ComplexField(np.zeros((1, 1)))
        with pytest.raises(InvalidArgument):
            ComplexField(np.zeros((0, 0)))

    def test_rejects_non_finite(self):
        x = np.ones((4, 4), complex)
        x[1, 2] = np.nan
        with pytest.raises(InvalidArgument):
            ComplexField(x)

    def test_immutable_copy(self):
        x = np.ones((4, 4), complex)
        f = ComplexField(x)
        x[0, 0] = 5
        assert f.data[0, 0] == 1
        with pytest.raises(ValueError):
            f.data[0, 0] = 2


class TestDFT:
    def test_ones(self):
        s = dft2(np.ones((4, 4))).data
        assert s[0, 0] == 16 + 0j
        rest = s.copy()
        rest[0, 0] = 0
        assert np.all(rest == 0)

    def test_impulse(self):
        x = np.zeros((4, 4))
        x[0, 0] = 1
        assert np.allclose(dft2(x).data, 1 + 0j, atol=0)

    def test_matches_definition(self, gen):
        x = random_complex(gen, 8)
        assert rel(dft2(x).data, dft_by_definition(x)) <= 1e-9

    def test_rejects_non_square(self):
        with pytest.raises(InvalidArgument):
            dft2(np.zeros((4, 5)))
        with pytest.raises(InvalidArgument):
            dft2(np.zeros((0, 0)))

    def test_round_trip(self, gen):
        x = random_complex(gen, 16)
        assert rel(idft2(dft2(x)).data, x) <= 1e-10

    def test_inverse_of_flat(self):
        out = idft2(np.ones((4, 4), complex)).data
        expect = np.zeros((4, 4), complex)
        expect[0, 0] = 1
        assert np.allclose(out, expect, atol=1e-15)

    def test_linearity(self, gen):
        s1, s2 = random_complex(gen, 8), random_complex(gen, 8)
        a, b = 1.3 - 0.2j, -0.7 + 2j
        lhs = idft2(a * s1 + b * s2).data
        rhs = a * idft2(s1).data + b * idft2(s2).data
        assert rel(lhs, rhs) <= 1e-10

    @pytest.mark.parametrize("side", [4, 8, 16, 32, 64, 128])
    def test_round_trip_and_parseval_sizes(self, gen, side):
        x = random_complex(gen, side)
        s = dft2(x).data
        assert rel(idft2(s).data, x) <= 1e-10
        e_spec = np.sum(np.abs(s) ** 2)
        e_x = side * side * np.sum(np.abs(x) ** 2)
        assert abs(e_spec - e_x) / e_x <= 1e-9


class TestDC:
    def test_ones(self):
        assert dc_component(dft2(np.ones((4, 4)))) == 16 + 0j

    def test_zero_sum(self):
        x = np.zeros((4, 4))
        x[0, 0], x[2, 3] = 1.5, -1.5
        assert dc_component(dft2(x)) == 0

    def test_sum_oracle(self, gen):
        x = random_complex(gen, 16)
        direct = 0j
        for v in x.ravel():
            direct += v
        assert abs(dc_component(dft2(x)) - direct) / abs(direct) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(side=st.integers(2, 24), seed=st.integers(0, 2**32 - 1))
def test_dc_convention_property(side, seed):
    g = np.random.default_rng(seed)
    x = g.normal(size=(side, side)) + 1j * g.normal(size=(side, side))
    total = x.sum()
    assert abs(dc_component(dft2(x)) - total) <= 1e-10 * max(1.0, np.abs(x).sum())


class TestFresnel:
    geom = OpticalGeometry.for_grid(488e-9, 2.63e-3, 32, 0.1)

    def test_zero_distance_identity(self, gen):
        x = random_complex(gen, 32)
        out = fresnel_propagate(x, self.geom.with_distance(0.0))
        assert np.array_equal(out.data, x)

    def test_energy_preserved(self, gen):
        x = random_complex(gen, 32)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SamplingWarning)
            out = fresnel_propagate(x, self.geom)
        e0 = np.sum(np.abs(x) ** 2)
        assert abs(np.sum(np.abs(out.data) ** 2) - e0) / e0 <= 1e-9

    def test_composes_additively(self, gen):
        x = random_complex(gen, 32)
        g1, g2 = self.geom.with_distance(0.03), self.geom.with_distance(0.05)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SamplingWarning)
            two = fresnel_propagate(fresnel_propagate(x, g1), g2)
            one = fresnel_propagate(x, self.geom.with_distance(0.08))
        assert rel(two.data, one.data) <= 1e-8

    def test_sampling_warning_not_error(self, gen):
        x = random_complex(gen, 32)
        far = self.geom.with_distance(10 * self.geom.tf_distance_limit(32))
        with pytest.warns(SamplingWarning):
            out = fresnel_propagate(x, far)
        assert np.all(np.isfinite(out.data))

    def test_no_warning_inside_limit(self, gen):
        x = random_complex(gen, 32)
        near = self.geom.with_distance(0.5 * self.geom.tf_distance_limit(32))
        with warnings.catch_warnings():
            warnings.simplefilter("error", SamplingWarning)
            fresnel_propagate(x, near)

    def test_grid_mismatch_rejected(self, gen):
        with pytest.raises(InvalidArgument):
            fresnel_propagate(random_complex(gen, 16), self.geom)


class TestFresnelNumber:
    def test_s5_constants(self):
        g = OpticalGeometry.for_grid(488e-9, 2.63e-3, 32, 1.0)
        assert fresnel_number(g) == pytest.approx(2.63e-3**2 / 488e-9, rel=1e-12)
        assert fresnel_number(g) == pytest.approx(14.17, abs=0.01)

    def test_blood_smear_geometry(self):
        g = OpticalGeometry.for_grid(488e-9, 50e-6, 32, 1.0)
        assert fresnel_number(g) == pytest.approx(5.12e-3, rel=1e-3)

    def test_inverse_proportional_in_z(self):
        g = OpticalGeometry.for_grid(488e-9, 2.63e-3, 32, 0.37)
        assert fresnel_number(g) / fresnel_number(g.with_distance(3.7)) == pytest.approx(10.0, rel=1e-14)

    def test_monotone_in_z_and_extent(self):
        zs = [0.01, 0.1, 1.0, 10.0]
        f = [fresnel_number(OpticalGeometry.for_grid(488e-9, 1e-3, 8, z)) for z in zs]
        assert all(a > b for a, b in zip(f, f[1:]))
        ds = [1e-4, 1e-3, 1e-2]
        f = [fresnel_number(OpticalGeometry.for_grid(488e-9, d, 8, 1.0)) for d in ds]
        assert all(a < b for a, b in zip(f, f[1:]))

    def test_zero_distance_rejected(self):
        with pytest.raises(InvalidArgument):
            fresnel_number(OpticalGeometry.for_grid(488e-9, 1e-3, 8, 0.0))

    def test_from_fresnel_number_round_trip(self):
        g = OpticalGeometry.from_fresnel_number(0.03, 488e-9, 2.63e-3, 32)
        assert fresnel_number(g) == pytest.approx(0.03, rel=1e-12)

    def test_geometry_validation(self):
        with pytest.raises(InvalidArgument):
            OpticalGeometry(-1.0, 1e-3, 1e-5, 1.0)
        with pytest.raises(InvalidArgument):
            OpticalGeometry(488e-9, 1e-3, 1e-5, -1.0)


class TestFieldFile:
    def test_round_trip_bit_exact(self, gen, tmp_path):
        x = ComplexField(random_complex(gen, 16))
        p = tmp_path / "x.field"
        save_field(x, p)
        y = load_field(p)
        assert np.array_equal(x.data.view(np.uint64), y.data.view(np.uint64))

    def test_header(self, gen, tmp_path):
        p = tmp_path / "x.field"
        save_field(random_complex(gen, 4), p)
        blob = p.read_bytes()
        assert blob.startswith(b"SPCDI-FIELD v1 4\n")
        assert len(blob) == len(b"SPCDI-FIELD v1 4\n") + 4 * 4 * 16

    def test_truncated(self, gen, tmp_path):
        p = tmp_path / "x.field"
        save_field(random_complex(gen, 8), p)
        blob = p.read_bytes()
        p.write_bytes(blob[:-5])
        with pytest.raises(FormatError) as ei:
            load_field(p)
        assert ei.value.offset == len(blob) - 5
        assert "byte offset" in str(ei.value)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.field"
        p.write_bytes(b"NOPE v1 2\n" + bytes(64))
        with pytest.raises(FormatError) as ei:
            load_field(p)
        assert ei.value.offset == 0
