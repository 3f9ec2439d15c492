import numpy as np
import pytest

from contrailseg.metrics import EvalReport, binarize, evaluate_dataset, iou, overlap_counts


def test_binarize():
    assert np.all(binarize(np.full((3, 3), 0.9), 0.5) == 1)
    assert binarize(np.array([0.5]), 0.5)[0] == 1
    p = np.random.default_rng(0).uniform(size=(7, 7))
    got = binarize(p, 0.5)
    for (i, j), v in np.ndenumerate(p):
        assert got[i, j] == (1 if v >= 0.5 else 0)
    with pytest.raises(ValueError):
        binarize(p, 1.0)


def test_iou_examples():
    a = np.array([[1, 1, 0]])
    assert iou(a, a) == 1.0
    assert iou(a, np.array([[0, 0, 1]])) == 0.0
    assert iou(a, np.array([[0, 1, 1]])) == pytest.approx(1 / 3)
    assert iou(np.zeros((2, 2)), np.zeros((2, 2))) == 1.0
    assert overlap_counts(a, np.array([[0, 1, 1]])) == (1, 3)
    with pytest.raises(ValueError):
        iou(a, np.zeros((2, 2)))


def test_evaluate_perfect():
    g = np.array([[1, 0], [0, 1]])
    r = evaluate_dataset([("a", g.astype(float), g)])
    assert r.mean_iou == r.global_iou == 1.0


def test_evaluate_half():
    g = np.array([[1, 1], [0, 0]])
    r = evaluate_dataset([("a", g * 0.9, g), ("b", (1 - g) * 0.9, g)])
    assert [v for _, v in r.per_image_iou] == [1.0, 0.0]
    assert r.mean_iou == 0.5


def test_micro_vs_macro():
    big = np.ones((4, 4), dtype=np.uint8)
    tiny = np.zeros((4, 4), dtype=np.uint8)
    tiny[0, 0] = 1
    r = evaluate_dataset([("big", np.zeros((4, 4)), big), ("tiny", tiny.astype(float), tiny)])
    assert r.mean_iou == 0.5
    assert r.global_iou == pytest.approx(1 / 17)
    assert r.global_iou < r.mean_iou


def test_empty_dataset():
    with pytest.raises(ValueError):
        evaluate_dataset([])


def test_csv_round_trip():
    r = EvalReport([("a", 0.1), ("b,c", 1 / 3)], 0.2166, 0.3, 0.5)
    text = r.to_csv()
    assert text.splitlines()[0] == "scene_id,iou"
    assert text.splitlines()[-2:] == ["__mean__,0.2166", "__global__,0.3"]
    back = EvalReport.from_csv(text)
    assert back == r
