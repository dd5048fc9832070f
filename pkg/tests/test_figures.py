import numpy as np

from blindpick.figures import bar_figure, loss_curve_figure, occupancy_figure, sweep_figure
from blindpick.localize import OccupancyGrid


def grid():
    cells = np.zeros((12, 12), dtype=bool)
    cells[3:6, 4:7] = True
    return OccupancyGrid(delta=5.0, bin_side=60.0, cells=cells)


class TestFigures:
    def test_all_figures_render_svg(self, tmp_path):
        occupancy_figure(grid(), [(25.0, 20.0)], [(26.0, 21.0)], tmp_path / "o.svg")
        loss_curve_figure([2.0, 1.5, 1.2], tmp_path / "l.svg")
        bar_figure(["a", "b"], [0.8, 0.6], [0.05, 0.04], "rate", tmp_path / "b.svg")
        sweep_figure([0.1, 0.5], {"m": ([0.4, 0.8], [0.1, 0.05])}, "mu", "rate", tmp_path / "s.svg")
        for name in ("o", "l", "b", "s"):
            data = (tmp_path / ("%s.svg" % name)).read_bytes()
            assert data.startswith(b"<?xml")
            assert b"</svg>" in data

    def test_svg_bytes_deterministic(self, tmp_path):
        for name in ("x1.svg", "x2.svg"):
            bar_figure(["a", "b"], [0.8, 0.6], [0.05, 0.04], "rate", tmp_path / name)
        assert (tmp_path / "x1.svg").read_bytes() == (tmp_path / "x2.svg").read_bytes()

    def test_occupancy_deterministic(self, tmp_path):
        for name in ("g1.svg", "g2.svg"):
            occupancy_figure(grid(), [(25.0, 20.0)], [(26.0, 21.0)], tmp_path / name)
        assert (tmp_path / "g1.svg").read_bytes() == (tmp_path / "g2.svg").read_bytes()
