"""Command line entry point: estimate, eval, synth, gradcheck, selfcheck."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("flowkit")

GRADCHECK_GROUPS = {
    "photometric": ("photometric",),
    "smoothness": ("smoothness",),
    "occlusion": ("occlusion",),
    "solver": ("selfsup", "solver"),
}


class CliError(Exception):
    pass


def read_config(path) -> list[str]:
    """Turn ``key = value`` lines into argv tokens placed before the real flags.

    Keys are flag names without the leading dashes (``smooth-order`` or
    ``smooth_order``). ``true``/``false`` toggle switch flags. Blank lines and
    ``#`` comments are ignored.
    """
    tokens = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "yes", "on"):
            tokens.append(flag)
        elif value.lower() in ("false", "no", "off"):
            continue
        else:
            tokens += [flag, value]
    return tokens


def _shape(text: str) -> tuple[int, int]:
    try:
        h, w = (int(s) for s in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from None
    return h, w


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowkit", description=__doc__)
    parser.add_argument("--config", help="key=value file; explicit flags take precedence")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate flow between two images")
    est.add_argument("--img1", required=True)
    est.add_argument("--img2", required=True)
    est.add_argument("--out", required=True)
    est.add_argument("--loss", choices=["census", "ssim", "charbonnier", "l1"], default="census")
    est.add_argument("--occlusion", choices=["range", "fb", "none"], default="range")
    est.add_argument("--smooth-order", type=int, choices=[1, 2], default=1)
    est.add_argument("--lambda", dest="edge_weight", type=float, default=150.0)
    est.add_argument("--smooth-level", type=int, default=2)
    est.add_argument("--levels", type=int, default=3)
    est.add_argument("--iters", type=int, default=60, help="iterations per pyramid level")
    est.add_argument("--step-size", type=float, default=0.05)
    est.add_argument("--selfsup", action="store_true")
    est.add_argument("--selfsup-crop", type=int, default=64)
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--viz", help="write a colour-coded PNG of the flow here")
    est.add_argument("--mask-out", help="write the forward occlusion mask PNG here")
    est.add_argument("--format", choices=["flo", "kitti16"], default="flo")

    ev = sub.add_parser("eval", help="EPE / error rate of a prediction")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--gt", required=True)
    ev.add_argument("--valid", help="PNG, nonzero = pixel has ground truth")
    ev.add_argument("--noc-mask", help="PNG, nonzero = pixel is not occluded")

    syn = sub.add_parser("synth", help="write a synthetic pair with ground truth")
    syn.add_argument("--motion", choices=["translation", "affine", "two_layer"], default="translation")
    syn.add_argument("--shape", type=_shape, default=(128, 128))
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--out-dir", required=True)
    syn.add_argument("--shading-noise", type=float, default=0.0)

    gc = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    gc.add_argument("--module", choices=["all", *GRADCHECK_GROUPS], default="all")
    gc.add_argument("--tol", type=float, default=1e-4)
    gc.add_argument("--trials", type=int, default=20)

    sub.add_parser("selfcheck", help="oracle equivalence and invariant checks")
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    argv = _drop_config(argv)
    if known.config:
        # subcommand flags from the file must follow the subcommand name
        commands = {"estimate", "eval", "synth", "gradcheck", "selfcheck"}
        pos = next((i for i, tok in enumerate(argv) if tok in commands), None)
        if pos is None:
            raise CliError("a subcommand is required")
        argv = argv[: pos + 1] + read_config(known.config) + argv[pos + 1 :]
    return build_parser().parse_args(argv)


def _drop_config(argv: list[str]) -> list[str]:
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
        elif tok == "--config":
            skip = True
        elif not tok.startswith("--config="):
            out.append(tok)
    return out


def _to_multiple(n: int, base: int) -> int:
    return max(base, int(round(n / base)) * base)


def cmd_estimate(args) -> int:
    import torch

    from .image import as_grid, resize_bilinear
    from .io import read_image, write_flow, write_image
    from .objective import ObjectiveConfig, upsample_flow
    from .occlusion import OcclusionConfig
    from .photometric import PhotometricConfig
    from .smoothness import SmoothnessConfig
    from .solver import SolverConfig, estimate_flow
    from .viz import flow_to_color

    image1, image2 = read_image(args.img1), read_image(args.img2)
    if image1.shape != image2.shape:
        raise CliError(f"image sizes differ: {image1.shape} vs {image2.shape}")
    h, w = image1.shape[:2]
    base = 2**args.levels
    th, tw = _to_multiple(h, base), _to_multiple(w, base)
    if (th, tw) != (h, w):
        log.info("resizing %dx%d to %dx%d", h, w, th, tw)
        image1 = resize_bilinear(as_grid(image1), th, tw)
        image2 = resize_bilinear(as_grid(image2), th, tw)

    objective = ObjectiveConfig(
        photometric=PhotometricConfig(kind=args.loss),
        occlusion=OcclusionConfig(method=args.occlusion),
        smoothness=SmoothnessConfig(order=args.smooth_order, edge_weight=args.edge_weight,
                                    level=args.smooth_level),
        selfsup=args.selfsup,
        selfsup_crop=args.selfsup_crop,
    )
    solver = SolverConfig(levels=args.levels, iterations_per_level=args.iters,
                          step_size=args.step_size, seed=args.seed)
    result = estimate_flow(image1, image2, objective, solver)
    flow, mask = result.forward, result.mask_forward
    if (th, tw) != (h, w):
        flow = upsample_flow(torch.as_tensor(flow), (h, w)).numpy()
        mask = (resize_bilinear(torch.as_tensor(mask)[..., None], h, w)[..., 0] >= 0.5).double().numpy()

    write_flow(args.out, flow, "kitti16" if args.format == "kitti16" else "middlebury")
    if args.viz:
        write_image(args.viz, flow_to_color(flow))
    if args.mask_out:
        write_image(args.mask_out, mask[..., None] * 2 - 1)
    photo, smooth, self_term = result.per_term_losses
    print(f"final_loss={result.final_loss:.6g} photo={photo:.6g} smooth={smooth:.6g} self={self_term:.6g}")
    return 0


def cmd_eval(args) -> int:
    from .io import read_flow, read_mask
    from .metrics import evaluate

    pred, _ = read_flow(args.pred)
    truth, gt_valid = read_flow(args.gt)
    if pred.shape != truth.shape:
        raise CliError(f"prediction {pred.shape[:2]} and ground truth {truth.shape[:2]} sizes differ")
    valid = np.ones(truth.shape[:2]) if gt_valid is None else gt_valid
    if args.valid:
        valid = valid * read_mask(args.valid)
    noc = read_mask(args.noc_mask) if args.noc_mask else None
    result = evaluate(pred, truth, valid, noc)
    print(f"{'':8}{'EPE':>10}{'ER':>10}")
    print(f"{'all':8}{result.epe_all:10.4f}{100 * result.er_all:9.2f}%")
    print(f"{'noc':8}{result.epe_noc:10.4f}{100 * result.er_noc:9.2f}%")
    for line in result.lines():
        print(line)
    return 0


def cmd_synth(args) -> int:
    from .io import write_flo, write_image
    from .synth import synth_pair

    pair = synth_pair(args.seed, args.motion, args.shape, shading_noise=args.shading_noise)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_image(out / "img1.png", pair.image1)
    write_image(out / "img2.png", pair.image2)
    write_flo(out / "flow.flo", pair.true_flow)
    # stored as a "usable" mask so it plugs straight into eval --noc-mask
    write_image(out / "noc.png", (1 - pair.true_occlusion)[..., None] * 2 - 1)
    print(f"wrote {out}/img1.png img2.png flow.flo noc.png")
    return 0


def cmd_gradcheck(args) -> int:
    from . import gradcheck

    groups = GRADCHECK_GROUPS.values() if args.module == "all" else [GRADCHECK_GROUPS[args.module]]
    modules = [m for group in groups for m in group]
    results = gradcheck.run(modules, trials=args.trials, tol=args.tol)
    worst: dict[str, object] = {}
    for r in results:
        if r.name not in worst or r.error > worst[r.name].error or not r.passed:
            worst[r.name] = r
    failed = 0
    for name, r in worst.items():
        fails = sum(not x.passed for x in results if x.name == name)
        failed += fails
        status = "PASS" if fails == 0 else "FAIL"
        print(f"{status} {name}: max_rel_error={r.error:.3e} failures={fails}/{args.trials}")
    return 1 if failed else 0


def cmd_selfcheck(args) -> int:
    from .selfcheck import run_all

    checks = run_all()
    for c in checks:
        print(c.line())
    return 0 if all(c.passed for c in checks) else 1


COMMANDS = {
    "estimate": cmd_estimate,
    "eval": cmd_eval,
    "synth": cmd_synth,
    "gradcheck": cmd_gradcheck,
    "selfcheck": cmd_selfcheck,
}


def main(argv=None) -> int:
    from .io import FlowFormatError

    try:
        args = parse_args(argv)
    except CliError as exc:
        print(f"flowkit: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (CliError, FlowFormatError, ValueError, OSError) as exc:
        print(f"flowkit: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
