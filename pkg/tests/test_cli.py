import numpy as np
import pytest

from flowkit.cli import main, parse_args, read_config
from flowkit.io import read_flo, write_flo


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nloss = ssim\nsmooth_order = 2\nlambda = 10\nselfsup = true\nviz = off\n")
    assert read_config(cfg) == ["--loss", "ssim", "--smooth-order", "2", "--lambda", "10", "--selfsup"]
    base = ["estimate", "--img1", "a", "--img2", "b", "--out", "c"]
    args = parse_args(["--config", str(cfg)] + base)
    assert args.loss == "ssim" and args.smooth_order == 2 and args.edge_weight == 10 and args.selfsup
    args = parse_args(base + ["--config", str(cfg), "--loss", "l1"])
    assert args.loss == "l1" and args.smooth_order == 2


def test_bad_config_line_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("loss ssim\n")
    assert main(["--config", str(cfg), "selfcheck"]) == 2
    assert "key=value" in capsys.readouterr().err


def test_defaults():
    args = parse_args(["estimate", "--img1", "a", "--img2", "b", "--out", "c"])
    assert (args.loss, args.occlusion, args.smooth_order, args.edge_weight) == ("census", "range", 1, 150.0)
    assert (args.levels, args.iters, args.step_size, args.format) == (3, 60, 0.05, "flo")


def test_synth_then_eval_perfect_prediction(tmp_path, capsys):
    out = tmp_path / "pair"
    assert main(["synth", "--motion", "two_layer", "--shape", "48x64", "--seed", "3",
                 "--out-dir", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"img1.png", "img2.png", "flow.flo", "noc.png"}
    assert read_flo(out / "flow.flo").shape == (48, 64, 2)
    capsys.readouterr()
    assert main(["eval", "--pred", str(out / "flow.flo"), "--gt", str(out / "flow.flo"),
                 "--noc-mask", str(out / "noc.png")]) == 0
    text = capsys.readouterr().out
    assert "epe_all=0.0" in text and "er_noc=0.0" in text


def test_eval_reports_known_error(tmp_path, capsys):
    truth = np.zeros((4, 4, 2))
    pred = truth.copy()
    pred[..., 0], pred[..., 1] = 3, 4
    write_flo(tmp_path / "gt.flo", truth)
    write_flo(tmp_path / "pred.flo", pred)
    assert main(["eval", "--pred", str(tmp_path / "pred.flo"), "--gt", str(tmp_path / "gt.flo")]) == 0
    out = capsys.readouterr().out
    assert "epe_all=5.0" in out and "er_all=1.0" in out


def test_estimate_writes_outputs(tmp_path, capsys):
    out = tmp_path / "pair"
    main(["synth", "--shape", "30x36", "--out-dir", str(out)])
    rc = main(["estimate", "--img1", str(out / "img1.png"), "--img2", str(out / "img2.png"),
               "--out", str(tmp_path / "est.png"), "--format", "kitti16", "--levels", "2", "--iters", "4",
               "--viz", str(tmp_path / "viz.png"), "--mask-out", str(tmp_path / "mask.png")])
    assert rc == 0
    from flowkit.io import read_image, read_kitti

    flow, valid = read_kitti(tmp_path / "est.png")
    assert flow.shape == (30, 36, 2) and valid.all()
    assert read_image(tmp_path / "viz.png").shape == (30, 36, 3)
    assert "final_loss=" in capsys.readouterr().out


@pytest.mark.parametrize("payload", [b"XIEH" + bytes(8), b"PIE", b""])
def test_malformed_input_exits_2(tmp_path, capsys, payload):
    (tmp_path / "bad.flo").write_bytes(payload)
    write_flo(tmp_path / "gt.flo", np.zeros((2, 2, 2)))
    assert main(["eval", "--pred", str(tmp_path / "bad.flo"), "--gt", str(tmp_path / "gt.flo")]) == 2
    assert "error" in capsys.readouterr().err


def test_missing_file_and_size_mismatch_exit_2(tmp_path):
    write_flo(tmp_path / "a.flo", np.zeros((2, 2, 2)))
    write_flo(tmp_path / "b.flo", np.zeros((3, 2, 2)))
    assert main(["eval", "--pred", str(tmp_path / "a.flo"), "--gt", str(tmp_path / "b.flo")]) == 2
    assert main(["eval", "--pred", str(tmp_path / "nope.flo"), "--gt", str(tmp_path / "b.flo")]) == 2


def test_gradcheck_and_selfcheck_exit_codes(capsys):
    assert main(["gradcheck", "--module", "smoothness", "--trials", "2"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("PASS smoothness")
    assert main(["gradcheck", "--module", "photometric", "--trials", "1", "--tol", "1e-30"]) == 1
    assert "FAIL" in capsys.readouterr().out
    assert main(["selfcheck"]) == 0
    assert "FAIL" not in capsys.readouterr().out
