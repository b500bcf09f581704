import numpy as np
import pytest

from homecore import plotting
from homecore.grasp import decide_grasp, pca_bbox
from homecore.planner import demo_world
from homecore.reservoir import EsnConfig, evaluate, synthetic_dataset, train
from homecore.semantic_map import assign_colors
from oracles import box_grid


def figures():
    world = demo_world()
    yield "map", lambda: plotting.plot_semantic_map(world.map, assign_colors(world.map), world, title="demo")
    esn = train(EsnConfig(n_reservoir=30), synthetic_dataset(20, seed=0, n_frames=40))
    report = evaluate(esn, synthetic_dataset(10, seed=1, n_frames=40))
    report["truth"] = ["waving" if i % 2 == 0 else "not_waving" for i in range(10)]
    yield "esn", lambda: plotting.plot_esn_evaluation(report)
    cloud = box_grid((0.2, 0.05, 0.1)) + [0, 0.2, 1]
    box = pca_bbox(cloud)
    yield "grasp", lambda: plotting.plot_grasp(cloud, box, decide_grasp(box))


FIGURES = dict(figures())


@pytest.mark.parametrize("name", sorted(FIGURES))
def test_png_written_and_deterministic(name, tmp_path):
    a = plotting.save_figure(FIGURES[name](), tmp_path / "a" / f"{name}.png")
    b = plotting.save_figure(FIGURES[name](), tmp_path / "b" / f"{name}.png")
    data = a.read_bytes()
    assert data[:8] == b"\x89PNG\r\n\x1a\n"
    assert data == b.read_bytes()


@pytest.mark.parametrize("suffix", ["svg", "pdf"])
def test_vector_formats_deterministic(suffix, tmp_path):
    a = plotting.save_figure(FIGURES["map"](), tmp_path / f"a.{suffix}")
    b = plotting.save_figure(FIGURES["map"](), tmp_path / f"b.{suffix}")
    assert a.read_bytes() == b.read_bytes()


def test_figures_are_closed(tmp_path):
    import matplotlib.pyplot as plt

    before = len(plt.get_fignums())
    plotting.save_figure(FIGURES["esn"](), tmp_path / "e.png")
    assert len(plt.get_fignums()) == before


def test_unscored_report_still_plots(tmp_path):
    report = {"confusion": [[3, 1], [0, 4]], "labels": ["waving", "not_waving"], "accuracy": 0.875}
    path = plotting.save_figure(plotting.plot_esn_evaluation(report), tmp_path / "e.png")
    assert path.stat().st_size > 0
    assert np.isfinite(report["accuracy"])
