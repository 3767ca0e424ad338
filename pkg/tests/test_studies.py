"""Study harnesses at smoke scale (full-scale runs live in acceptance)."""

import numpy as np
import pytest

from pixreg.errors import ArgumentError
from pixreg.studies import (
    InterpStudyConfig,
    ReduceStudyConfig,
    study_interp,
    study_reduce,
)


SMOKE = dict(n_per_point=1, epochs=2, batch_size=512, learning_rate=1e-3,
             width=24, height=24, seed=0)


class TestStudyInterp:
    def test_report_shape_is_three_by_three(self):
        report = study_interp(InterpStudyConfig(**SMOKE))
        assert list(report.rmse_table) == ["reference", "interpolation", "extrapolation"]
        for rmses in report.rmse_table.values():
            assert len(rmses) == 3
            assert all(0.0 <= v <= 1.0 for v in rmses)
        assert report.trained_levels["reference"] == [1.0, 1.15, 1.3]
        assert report.trained_levels["interpolation"] == [1.0, 1.3]
        assert report.trained_levels["extrapolation"] == [1.15, 1.3]

    def test_deterministic(self):
        a = study_interp(InterpStudyConfig(**SMOKE))
        b = study_interp(InterpStudyConfig(**SMOKE))
        assert a.as_dict() == b.as_dict()

    def test_needs_three_levels(self):
        with pytest.raises(ArgumentError):
            study_interp(InterpStudyConfig(levels=(1.0, 1.3), **SMOKE))

    def test_text_table_renders(self):
        report = study_interp(InterpStudyConfig(**SMOKE))
        table = report.text_table()
        assert "reference" in table and "extrapolation" in table


class TestStudyReduce:
    CFG = dict(levels=(2.0, 5.0, 8.0), test_values=(3.5, 6.5),
               reductions=(("2-settings", (2.0, 8.0)),), **SMOKE)

    def test_report_structure(self):
        report = study_reduce(ReduceStudyConfig(**self.CFG))
        assert set(report.configurations) == {"baseline", "2-settings"}
        for rows in report.per_point.values():
            assert [r["value"] for r in rows] == [3.5, 6.5]  # each test point once
        for metrics in report.summary.values():
            assert set(metrics) == {"rmse", "psnr", "ssim", "cosine", "phash_distance"}

    def test_random_reduction(self):
        cfg = ReduceStudyConfig(levels=(2.0, 4.0, 6.0, 8.0), test_values=(5.0,),
                                reductions=(("random-half", 0.5),), **SMOKE)
        report = study_reduce(cfg)
        assert len(report.configurations["random-half"]) == 2

    def test_test_values_must_lie_inside_range(self):
        cfg = ReduceStudyConfig(levels=(2.0, 8.0), test_values=(9.5,),
                                reductions=(), **SMOKE)
        with pytest.raises(ArgumentError):
            study_reduce(cfg)

    def test_deterministic(self):
        a = study_reduce(ReduceStudyConfig(**self.CFG))
        b = study_reduce(ReduceStudyConfig(**self.CFG))
        assert a.as_dict() == b.as_dict()
