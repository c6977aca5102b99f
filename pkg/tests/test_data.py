"""Delimited schema: round-trips, diagnostics, validation."""

import pytest

import numpy as np

from qcffit.data import DataPoint, KinematicBin, load_bins_csv, save_bins_csv
from qcffit.errors import SchemaError


def sample_bins():
    pts_a = [DataPoint(7.5, 0.12, 0.01), DataPoint(22.5, 0.1, 0.012)]
    pts_b = [DataPoint(7.5, 0.7, 0.05), DataPoint(180.0, 0.22, 0.02)]
    return [
        KinematicBin("s1", 5.75, 2.22, 0.333, -0.16, pts_a),
        KinematicBin("s2", 8.5, 3.6, 0.37, -0.2, pts_b),
    ]


class TestRoundTrip:
    def test_save_load_preserves_everything(self, tmp_path):
        path = tmp_path / "bins.csv"
        bins = sample_bins()
        save_bins_csv(bins, path)
        loaded = load_bins_csv(path)
        assert [b.set_id for b in loaded] == ["s1", "s2"]
        for orig, back in zip(bins, loaded):
            assert (back.k, back.Q2, back.xB, back.t) == (orig.k, orig.Q2, orig.xB, orig.t)
            np.testing.assert_array_equal(back.phi(), orig.phi())
            np.testing.assert_array_equal(back.f_values(), orig.f_values())
            np.testing.assert_array_equal(back.sigma(), orig.sigma())

    def test_byte_identical_rewrite(self, tmp_path):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        bins = sample_bins()
        save_bins_csv(bins, p1)
        save_bins_csv(load_bins_csv(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestDiagnostics:
    def write(self, tmp_path, body):
        path = tmp_path / "bad.csv"
        path.write_text("set_id,k,Q2,xB,t,phi_deg,F,sigma_F\n" + body)
        return path

    def test_nan_rejected_with_row_and_column(self, tmp_path):
        path = self.write(tmp_path, "s1,5.75,2.22,0.333,-0.16,7.5,nan,0.01\n")
        with pytest.raises(SchemaError, match=r":2.*'F'"):
            load_bins_csv(path)

    def test_negative_sigma_rejected(self, tmp_path):
        path = self.write(tmp_path, "s1,5.75,2.22,0.333,-0.16,7.5,0.1,-0.01\n")
        with pytest.raises(SchemaError, match="sigma_F"):
            load_bins_csv(path)

    def test_inconsistent_kinematics_rejected(self, tmp_path):
        body = ("s1,5.75,2.22,0.333,-0.16,7.5,0.1,0.01\n"
                "s1,5.75,2.30,0.333,-0.16,22.5,0.1,0.01\n")
        path = self.write(tmp_path, body)
        with pytest.raises(SchemaError, match=r":3.*'Q2'"):
            load_bins_csv(path)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(SchemaError, match="header"):
            load_bins_csv(path)

    def test_phi_out_of_range_rejected(self, tmp_path):
        path = self.write(tmp_path, "s1,5.75,2.22,0.333,-0.16,361.0,0.1,0.01\n")
        with pytest.raises(SchemaError, match="phi"):
            load_bins_csv(path)

    def test_point_validation(self):
        with pytest.raises(SchemaError):
            DataPoint(-1.0, 0.1, 0.01)
        with pytest.raises(SchemaError):
            DataPoint(10.0, 0.1, 0.0)
