"""Command-line entry point: one subcommand per pipeline.

JSON results go to stdout, logs and the resolved configuration to stderr,
images only to the paths named by --out.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import dataprep, hdrio, imgcore, jodscale, metrics, rawsim, xfer
from .adaptlab import autoencoder, data as labdata, flow, nets, serialize
from .errors import ParseError, PuhdrError

log = logging.getLogger("puhdr")


def _write(path: str, payload: bytes) -> None:
    Path(path).write_bytes(payload)


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=1, allow_nan=False) + "\n")


def _sidecar_path(args, attr: str = "meta", base: str = "out") -> Path:
    p = getattr(args, attr)
    return Path(p) if p else Path(getattr(args, base) + ".json")


# -- image pipelines --------------------------------------------------------

def cmd_encode(args):
    img = hdrio.load_image(args.in_path)
    if not args.keep_scale:
        img = imgcore.rescale_to_peak(img, args.peak)
    enc = xfer.encode_image(img, xfer.TransferTag(args.tf))
    _write(args.out, hdrio.write_pfm(enc))
    _emit({"tf": enc.tag.value, "scale": enc.scale, "clipped": enc.clipped,
           "peak": None if args.keep_scale else args.peak})


def cmd_decode(args):
    codes = hdrio.read_pfm(Path(args.in_path).read_bytes())
    enc = xfer.EncodedImage(codes.data, xfer.TransferTag(args.tf), scale=args.scale)
    hdrio.save_image(args.out, xfer.decode_image(enc))
    _emit({"tf": enc.tag.value, "out": args.out})


def cmd_rescale(args):
    img = imgcore.rescale_to_peak(hdrio.load_image(args.in_path), args.peak)
    hdrio.save_image(args.out, img)
    _emit({"peak": args.peak, "out": args.out})


def cmd_dr(args):
    rep = metrics.effective_dr(hdrio.load_image(args.in_path), args.sigma, args.p_low, args.p_high)
    _emit(rep.to_json())


def cmd_render_ev(args):
    img = hdrio.load_image(args.in_path)
    anchor = args.anchor if args.anchor is not None else dataprep.default_anchor(img)
    enc = dataprep.render_ev(img, args.ev, anchor)
    _write(args.out, hdrio.write_ppm8(enc))
    _emit({"ev": args.ev, "anchor": anchor, "clipped": enc.clipped, "out": args.out})


def cmd_mosaic(args):
    frame = rawsim.mosaic(hdrio.load_image(args.in_path))
    _write(args.out, hdrio.write_pfm_gray(frame.data))
    _sidecar_path(args).write_text(frame.sidecar_json() + "\n")
    _emit(frame.sidecar())


def _load_bayer(args) -> rawsim.BayerFrame:
    data = hdrio.read_pfm_gray(Path(args.in_path).read_bytes())
    meta_path = _sidecar_path(args, base="in_path")
    pattern = "RGGB"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
        pattern = meta.get("pattern", pattern)
        if (meta.get("width"), meta.get("height")) != (data.shape[1], data.shape[0]):
            raise ParseError(f"{meta_path}: sidecar dimensions disagree with the PFM")
    return rawsim.BayerFrame(data, pattern)


def cmd_demosaic(args):
    img = rawsim.demosaic_bilinear(_load_bayer(args))
    hdrio.save_image(args.out, img)
    _emit({"width": img.width, "height": img.height, "out": args.out})


def cmd_expose(args):
    img = rawsim.virtual_exposure(hdrio.load_image(args.in_path), args.clip)
    hdrio.save_image(args.out, img)
    _emit({"clip": args.clip, "out": args.out})


def cmd_noise(args):
    frame = _load_bayer(args)
    noisy = rawsim.add_noise(frame, rawsim.NoiseParams(args.photon_gain, args.read_sigma, args.seed))
    _write(args.out, hdrio.write_pfm_gray(noisy.data))
    Path(args.out + ".json").write_text(noisy.sidecar_json() + "\n")
    _emit({"photon_gain": args.photon_gain, "read_sigma": args.read_sigma,
           "seed": args.seed, "out": args.out})


def cmd_synth_gradient(args):
    img = rawsim.synth_radial_gradient(args.size, args.peak, args.floor, args.chroma)
    hdrio.save_image(args.out, img)
    _emit({"size": args.size, "peak": args.peak, "floor": args.floor,
           "chroma": args.chroma, "out": args.out})


def cmd_prep_crops(args):
    images = {}
    for p in args.in_paths:
        images[Path(p).name] = imgcore.rescale_to_peak(hdrio.load_image(p), args.peak)
    man = dataprep.build_manifest(images, args.sizes, args.threshold, args.rate,
                                  args.seed, args.peak)
    Path(args.out).write_text(man.to_json() + "\n")
    _emit({"entries": len(man.entries), "out": args.out})


def cmd_normalize_median(args):
    target = args.target if args.target is not None else dataprep.MEDIAN_PRESETS[args.preset]
    img = dataprep.normalize_median(hdrio.load_image(args.in_path), target)
    hdrio.save_image(args.out, img)
    _emit({"target_median": target, "out": args.out})


def cmd_jod(args):
    m = jodscale.ComparisonMatrix.from_csv(Path(args.counts).read_text())
    if args.boot > 0:
        res = jodscale.bootstrap_ci(m, args.anchor, args.boot, args.seed, smooth=not args.no_smooth)
    else:
        res = jodscale.fit_jod(m, args.anchor, smooth=not args.no_smooth)
    doc = res.to_json()
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=1) + "\n")
    _emit(doc)


# -- adaptation lab ---------------------------------------------------------

def _lab_data(args):
    """(points, conditions or None) for the chosen toy dataset."""
    if args.data == "mixture2d":
        x, onehot = labdata.mixture_2d(args.n, args.seed)
        return x, (onehot if args.cond else None)
    if args.data == "patches":
        return labdata.pu21_patches(args.n, seed=args.seed), None
    if args.data == "point":
        return np.array([[0.5, -0.25]]), None
    raise PuhdrError(f"unknown dataset {args.data!r}")


def cmd_lab_train(args):
    x, cond = _lab_data(args)
    cfg = flow.TrainConfig(steps=args.steps, lr=args.lr, batch=args.batch,
                           cond_dropout_p=args.cond_dropout, seed=args.seed,
                           schedule=args.schedule, clip_norm=args.clip_norm)
    if args.base:
        net = serialize.run_from_json(Path(args.base).read_text()).net
    else:
        net = nets.DenseNet.for_flow(x.shape[1], 0 if cond is None else cond.shape[1],
                                     args.hidden, args.depth, args.seed)
    if net.data_dim != x.shape[1] or net.cond_dim != (0 if cond is None else cond.shape[1]):
        raise PuhdrError("base network does not match the dataset dimensions")
    rank = nets.LORA_RANK_PRESETS.get(args.lora_rank, None) if args.lora_rank else None
    if rank is None and args.lora_rank:
        rank = int(args.lora_rank)
    adapter = nets.LoraAdapter.attach(net, rank, seed=args.seed) if rank else None
    res = flow.train(net, adapter, x, cfg, cond)
    Path(args.out).write_text(serialize.run_to_json(res, {"data": args.data}) + "\n")
    _emit({"steps": args.steps, "first_loss": res.losses[0], "last_loss": res.losses[-1],
           "lora_rank": rank, "out": args.out})


def cmd_lab_sample(args):
    run = serialize.run_from_json(Path(args.params).read_text())
    c = None
    if args.cond:
        c = np.array([float(v) for v in args.cond.split(",")])
    z = flow.sample(run.net, args.n, args.steps, c, run.adapter, args.seed)
    doc = {"n": args.n, "steps": args.steps, "samples": z.tolist()}
    if args.out:
        Path(args.out).write_text(json.dumps(doc) + "\n")
        _emit({"n": args.n, "mean": z.mean(axis=0).tolist(), "out": args.out})
    else:
        _emit(doc)


def cmd_lab_ae(args):
    cfg = autoencoder.AeConfig(patch_size=args.patch_size, hidden_dim=args.hidden_dim,
                               n_train=args.n_train, n_eval=args.n_eval, seed=args.seed,
                               steps=args.steps)
    _emit(autoencoder.autoencoder_ordering_experiment(cfg).to_json())


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads for row-parallel ops (default: all cores)")
    common.add_argument("--verbose", "-v", action="count", default=0)

    p = argparse.ArgumentParser(prog="puhdr", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, fn, help):
        sp = sub.add_parser(name, parents=[common], help=help)
        sp.set_defaults(func=fn)
        return sp

    def io(sp, out=True):
        sp.add_argument("--in", dest="in_path", required=True)
        if out:
            sp.add_argument("--out", required=True)

    tfs = [t.value for t in xfer.TransferTag]

    sp = add("encode", cmd_encode, "linear HDR -> encoded PFM")
    io(sp)
    sp.add_argument("--tf", choices=tfs, default="pu21")
    sp.add_argument("--peak", type=float, default=imgcore.DEFAULT_PEAK)
    sp.add_argument("--keep-scale", action="store_true", help="skip the peak rescale")

    sp = add("decode", cmd_decode, "encoded PFM -> linear HDR")
    io(sp)
    sp.add_argument("--tf", choices=tfs, default="pu21")
    sp.add_argument("--scale", type=float, default=1.0, help="divisor used by --tf linear")

    sp = add("rescale", cmd_rescale, "rescale to a peak luminance")
    io(sp)
    sp.add_argument("--peak", type=float, default=imgcore.DEFAULT_PEAK)

    sp = add("dr", cmd_dr, "effective dynamic range report")
    io(sp, out=False)
    sp.add_argument("--sigma", type=float, default=metrics.DR_SIGMA)
    sp.add_argument("--p-low", type=float, default=metrics.DR_P_LOW)
    sp.add_argument("--p-high", type=float, default=metrics.DR_P_HIGH)

    sp = add("render-ev", cmd_render_ev, "exposure-shifted sRGB PPM")
    io(sp)
    sp.add_argument("--ev", type=float, default=0.0)
    sp.add_argument("--anchor", type=float, default=None)

    sp = add("mosaic", cmd_mosaic, "RGB -> RGGB Bayer PFM + JSON sidecar")
    io(sp)
    sp.add_argument("--meta", default=None, help="sidecar path (default OUT.json)")

    sp = add("demosaic", cmd_demosaic, "Bayer PFM -> RGB (bilinear)")
    io(sp)
    sp.add_argument("--meta", default=None, help="sidecar path (default IN.json)")

    sp = add("expose", cmd_expose, "virtual exposure clip")
    io(sp)
    sp.add_argument("--clip", type=float, default=rawsim.DEFAULT_CLIP)

    sp = add("noise", cmd_noise, "Poisson-Gaussian sensor noise on a Bayer PFM")
    io(sp)
    sp.add_argument("--meta", default=None)
    sp.add_argument("--photon-gain", type=float, default=rawsim.DEFAULT_PHOTON_GAIN)
    sp.add_argument("--read-sigma", type=float, default=rawsim.DEFAULT_READ_SIGMA)

    sp = add("synth-gradient", cmd_synth_gradient, "radial log-luminance test target")
    sp.add_argument("--out", required=True)
    sp.add_argument("--size", type=int, default=512)
    sp.add_argument("--peak", type=float, default=4000.0)
    sp.add_argument("--floor", type=float, default=0.005)
    sp.add_argument("--chroma", choices=sorted(rawsim.CHROMA_CHANNELS), default="white")

    sp = add("prep-crops", cmd_prep_crops, "DR-filtered crop manifest")
    sp.add_argument("--in", dest="in_paths", nargs="+", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--sizes", type=int, nargs="+", default=list(dataprep.CROP_SIZES))
    sp.add_argument("--threshold", type=float, default=dataprep.DR_THRESHOLD)
    sp.add_argument("--rate", type=float, default=dataprep.DEFAULT_RATE)
    sp.add_argument("--peak", type=float, default=imgcore.DEFAULT_PEAK)

    sp = add("normalize-median", cmd_normalize_median, "scale to a target median luminance")
    io(sp)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--target", type=float)
    g.add_argument("--preset", choices=sorted(dataprep.MEDIAN_PRESETS))

    sp = add("jod", cmd_jod, "Thurstone Case V scaling of a count matrix CSV")
    sp.add_argument("--counts", required=True)
    sp.add_argument("--anchor", default="mean", help="'mean' or 'ref:LABEL'")
    sp.add_argument("--boot", type=int, default=500)
    sp.add_argument("--no-smooth", action="store_true", help="disable add-half smoothing")
    sp.add_argument("--out", default=None)

    sp = add("lab-train", cmd_lab_train, "train a toy flow net (optionally LoRA)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--data", choices=["mixture2d", "patches", "point"], default="mixture2d")
    sp.add_argument("--n", type=int, default=2048)
    sp.add_argument("--cond", action="store_true", help="condition on mixture mode")
    sp.add_argument("--steps", type=int, default=2000)
    sp.add_argument("--lr", type=float, default=1e-2)
    sp.add_argument("--batch", type=int, default=64)
    sp.add_argument("--schedule", choices=["constant", "cosine"], default="constant")
    sp.add_argument("--clip-norm", type=float, default=None)
    sp.add_argument("--cond-dropout", type=float, default=flow.COND_DROPOUT)
    sp.add_argument("--hidden", type=int, default=64)
    sp.add_argument("--depth", type=int, default=3)
    sp.add_argument("--base", default=None, help="run JSON whose net is frozen under LoRA")
    sp.add_argument("--lora-rank", default=None,
                    help="integer rank or preset 'text' (32) / 'raw' (128); alpha = rank")

    sp = add("lab-sample", cmd_lab_sample, "Euler-sample a trained flow net")
    sp.add_argument("--params", required=True)
    sp.add_argument("--n", type=int, default=256)
    sp.add_argument("--steps", type=int, default=50)
    sp.add_argument("--cond", default=None, help="comma-separated condition vector")
    sp.add_argument("--out", default=None)

    sp = add("lab-ae-experiment", cmd_lab_ae, "frozen-autoencoder encoding comparison")
    d = autoencoder.AeConfig()
    sp.add_argument("--patch-size", type=int, default=d.patch_size)
    sp.add_argument("--hidden-dim", type=int, default=d.hidden_dim)
    sp.add_argument("--n-train", type=int, default=d.n_train)
    sp.add_argument("--n-eval", type=int, default=d.n_eval)
    sp.add_argument("--steps", type=int, default=d.steps)
    return p


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(stream=sys.stderr,
                        level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    imgcore.set_threads(args.threads)
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    resolved["threads"] = imgcore.get_threads()
    sys.stderr.write(json.dumps({"config": resolved}, sort_keys=True) + "\n")
    try:
        args.func(args)
    except (ParseError, OSError) as e:
        log.error("%s", e)
        return 2
    except (PuhdrError, ValueError) as e:
        log.error("%s", e)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
