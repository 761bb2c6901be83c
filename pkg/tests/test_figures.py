from pufrel import figures


def test_render_attack_accuracies(tmp_path):
    path = tmp_path / "acc.png"
    figures.render_attack_accuracies([0.5, 0.92, 0.88], path, title="demo")
    assert path.stat().st_size > 1000


def test_render_reliability_curve(tmp_path):
    path = tmp_path / "rel.png"
    figures.render_reliability_curve([20, 100, 1000], [0.91, 0.93, 0.94], path, title="demo")
    assert path.stat().st_size > 1000


def test_render_ber_curve(tmp_path):
    path = tmp_path / "ber.png"
    figures.render_ber_curve([5, 20, 50], [0.09, 0.05, 0.03], path, title="demo")
    assert path.stat().st_size > 1000


def test_render_sweep(tmp_path):
    path = tmp_path / "sweep.png"
    figures.render_sweep("num_mv", [1, 5], [0.7, 0.9], [0.0, 1.0], path)
    assert path.stat().st_size > 1000
