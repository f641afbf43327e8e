"""``hazebayes`` command line interface.

Every subcommand prints a JSON document to stdout (or ``--out``-adjacent
files) and exits 0 on success; failures print ``{"error": ..., "message":
...}`` to stderr with exit status 1 (usage errors: 2).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from . import datagen, dcp, hazemodel, nets, trainer
from .imagecore import as_image, read_any, save_pfm, write_any
from .metrics import MetricConfig
from .variational import HyperParams, negative_elbo

DNET_STEM = "dnet"
TNET_STEM = "tnet"


def _emit(obj, args, stream=None):
    stream = stream or sys.stdout
    if getattr(args, "pretty", False):
        _print_table(obj, stream)
    else:
        stream.write(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def _print_table(obj, stream, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            if isinstance(v, (dict, list)):
                stream.write(f"{prefix}{k}:\n")
                _print_table(v, stream, prefix + "  ")
            else:
                stream.write(f"{prefix}{k:<24} {v}\n")
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            stream.write(f"{prefix}[{i}]\n")
            _print_table(v, stream, prefix + "  ")
    else:
        stream.write(f"{prefix}{obj}\n")


def _load_config(path):
    if not path:
        return {}
    return json.loads(Path(path).read_text())


def _dc_from(cls, section, **overrides):
    names = {f.name for f in fields(cls)}
    unknown = set(section) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    merged = dict(section)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return cls(**merged)


def resolve_config(args) -> dict:
    """Merge the ``--config`` file with command-line flags (flags win)."""
    raw = _load_config(getattr(args, "config", None))
    hyper = _dc_from(
        HyperParams,
        raw.get("hyper", {}),
        sigma2=getattr(args, "sigma2", None),
        eps1_2=getattr(args, "eps1_2", None),
        eps2_2=getattr(args, "eps2_2", None),
        A=getattr(args, "A", None),
    )
    dcp_cfg = _dc_from(
        dcp.DcpConfig,
        raw.get("dcp", {}),
        window=getattr(args, "window", None),
        top_fraction=getattr(args, "top_fraction", None),
    )
    train_section = dict(raw.get("train", {}))
    train_section.pop("hyper", None)
    train_cfg = _dc_from(
        trainer.TrainConfig,
        train_section,
        lr=getattr(args, "lr", None),
        optimizer=getattr(args, "optimizer", None),
        steps=getattr(args, "steps", None),
        batch_size=getattr(args, "batch_size", None),
        patch_size=getattr(args, "patch_size", None),
        seed=getattr(args, "seed", None),
        a_mode=getattr(args, "a_mode", None),
    )
    train_cfg = replace(train_cfg, hyper=hyper)
    metric = _dc_from(MetricConfig, raw.get("metric", {}))
    return {"hyper": hyper, "dcp": dcp_cfg, "train": train_cfg, "metric": metric}


def _config_json(cfg) -> dict:
    train_d = cfg["train"].as_dict()
    train_d.pop("hyper")
    return {
        "hyper": asdict(cfg["hyper"]),
        "dcp": asdict(cfg["dcp"]),
        "train": train_d,
        "metric": asdict(cfg["metric"]),
    }


def _echo_config(cfg, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.json").write_text(json.dumps(_config_json(cfg), indent=2) + "\n")


def cmd_datagen(args, cfg):
    seed = args.seed if args.seed is not None else 0
    if args.clean_dir:
        paths = sorted(p for p in Path(args.clean_dir).iterdir() if p.suffix.lower() in (".png", ".ppm", ".pfm"))
        clean = [read_any(p) for p in paths]
    else:
        rng = np.random.default_rng(seed)
        clean = [
            datagen.gen_clean(args.size, args.size, int(s))
            for s in rng.integers(0, 2**31, args.n_clean)
        ]
    manifest = datagen.gen_triplets(
        clean,
        args.out,
        n_per_image=args.per_image,
        A_range=tuple(args.a_range),
        beta_range=tuple(args.beta_range),
        seed=seed,
        d_max=args.d_max,
    )
    _echo_config(cfg, args.out)
    return {"manifest": str(Path(args.out) / "manifest.json"), "records": len(manifest["records"])}


def cmd_synth(args, cfg):
    clean = read_any(args.clean)
    if args.trans:
        t = read_any(args.trans)
    elif args.depth:
        if args.beta is None:
            raise ValueError("--beta is required with --depth")
        t = hazemodel.transmission_from_depth(read_any(args.depth), args.beta)
    else:
        raise ValueError("one of --trans or --depth is required")
    A = cfg["hyper"].A
    y = hazemodel.synthesize_hazy(clean, t, A)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_pfm(y, out / "hazy.pfm")
    write_any(np.clip(y, 0, 1), out / "hazy.png")
    save_pfm(t, out / "trans.pfm")
    _echo_config(cfg, out)
    return {"hazy": str(out / "hazy.pfm"), "trans": str(out / "trans.pfm"), "A": A}


def cmd_estimate_a(args, cfg):
    y = read_any(args.image)
    return {"A": dcp.estimate_atmospheric_light(y, cfg["dcp"])}


def cmd_dcp_dehaze(args, cfg):
    y = read_any(args.image)
    x, t, A = dcp.dcp_dehaze(y, cfg["dcp"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_any(x, out / "dehazed.png")
    save_pfm(x, out / "dehazed.pfm")
    save_pfm(t, out / "trans.pfm")
    _echo_config(cfg, out)
    return {"A": A, "dehazed": str(out / "dehazed.png"), "trans": str(out / "trans.pfm")}


def cmd_loss(args, cfg):
    y = read_any(args.hazy)
    x = read_any(args.clean)
    t = hazemodel.reduce_transmission(read_any(args.trans), args.t_reduce)
    phi = read_any(args.phi)
    nu = read_any(args.nu)
    if nu.shape[2] != t.shape[2]:
        nu = hazemodel.reduce_transmission(nu, args.t_reduce)
    hp = cfg["hyper"]
    if args.A is None and args.estimate_a:
        hp = hp.replace(A=dcp.estimate_atmospheric_light(y, cfg["dcp"]))
    br = negative_elbo(y, x, t, phi, nu, hp)
    n_sites = int(np.asarray(y).size)
    return {**br.as_dict(), "n_sites": n_sites, "per_site_likelihood": br.likelihood / n_sites, "A": hp.A}


def cmd_gradcheck(args, cfg):
    seed0 = args.seed if args.seed is not None else 0
    seeds = tuple(range(seed0, seed0 + args.seeds))
    return trainer.end_to_end_gradcheck(seeds, size=args.size, width=args.width, hp=cfg["hyper"])


def cmd_train(args, cfg):
    data = datagen.load_manifest(args.data)
    tcfg = cfg["train"]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out)
    with open(out / "log.jsonl", "w") as log_fh:
        theta, psi, log = trainer.train(
            data, tcfg, on_step=lambda rec: log_fh.write(rec.to_json() + "\n")
        )
    nets.save_checkpoint(theta, out / DNET_STEM, seed=tcfg.seed, step=tcfg.steps)
    nets.save_checkpoint(psi, out / TNET_STEM, seed=tcfg.seed, step=tcfg.steps)
    last = log[-1]
    return {
        "checkpoint": str(out),
        "steps": tcfg.steps,
        "final": {k: getattr(last, k) for k in ("likelihood", "kl_z", "kl_tau", "negative_elbo")},
    }


def cmd_eval(args, cfg):
    data = datagen.load_manifest(args.data)
    ckpt = Path(args.ckpt)
    theta, _ = nets.load_checkpoint(ckpt / DNET_STEM)
    psi = None
    if (ckpt / f"{TNET_STEM}.json").exists():
        psi, _ = nets.load_checkpoint(ckpt / TNET_STEM)
    report = trainer.evaluate(theta, psi, data, cfg["metric"])
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2) + "\n")
    return report


def cmd_infer(args, cfg):
    theta, _ = nets.load_checkpoint(Path(args.ckpt) / DNET_STEM)
    y = as_image(read_any(args.image), channels=3)
    x = np.clip(nets.dnet_forward(theta, y), 0.0, 1.0)
    write_any(x, args.out)
    return {"output": str(args.out), "shape": list(x.shape)}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config with hyper/dcp/train/metric sections")
    common.add_argument("--seed", type=int)
    common.add_argument("--pretty", action="store_true", help="human-readable table instead of JSON")
    common.add_argument("--sigma2", type=float)
    common.add_argument("--eps1-2", dest="eps1_2", type=float)
    common.add_argument("--eps2-2", dest="eps2_2", type=float)
    common.add_argument("--A", type=float, help="atmospheric light")

    p = argparse.ArgumentParser(prog="hazebayes", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("datagen", parents=[common], help="generate synthetic triplets")
    s.add_argument("--out", required=True)
    s.add_argument("--clean-dir", help="use images from this directory instead of procedural ones")
    s.add_argument("--n-clean", type=int, default=8)
    s.add_argument("--per-image", type=int, default=1)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--a-range", type=float, nargs=2, default=(0.7, 1.0))
    s.add_argument("--beta-range", type=float, nargs=2, default=(0.5, 2.0))
    s.add_argument("--d-max", type=float, default=datagen.D_MAX)
    s.set_defaults(func=cmd_datagen)

    s = sub.add_parser("synth", parents=[common], help="apply the scattering model to one image")
    s.add_argument("--clean", required=True)
    s.add_argument("--trans")
    s.add_argument("--depth")
    s.add_argument("--beta", type=float)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    for name, func, helptext in (
        ("estimate-a", cmd_estimate_a, "dark-channel atmospheric light"),
        ("dcp-dehaze", cmd_dcp_dehaze, "baseline dark channel prior dehazing"),
    ):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--image", required=True)
        s.add_argument("--window", type=int)
        s.add_argument("--top-fraction", type=float)
        if name == "dcp-dehaze":
            s.add_argument("--out", required=True)
        s.set_defaults(func=func)

    s = sub.add_parser("loss", parents=[common], help="objective breakdown for given posteriors")
    for name in ("hazy", "clean", "trans", "phi", "nu"):
        s.add_argument(f"--{name}", required=True)
    s.add_argument("--t-reduce", default="mean", choices=("mean", "geometric", "min"))
    s.add_argument("--estimate-a", action="store_true", help="use the DCP estimate when --A is absent")
    s.add_argument("--window", type=int)
    s.add_argument("--top-fraction", type=float)
    s.set_defaults(func=cmd_loss)

    s = sub.add_parser("gradcheck", parents=[common], help="autodiff vs finite differences")
    s.add_argument("--seeds", type=int, default=5)
    s.add_argument("--size", type=int, default=8)
    s.add_argument("--width", type=int, default=2)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("train", parents=[common], help="joint training from a manifest")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--steps", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--patch-size", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--optimizer", choices=("adam", "sgd"))
    s.add_argument("--a-mode", choices=("ground-truth", "dcp"))
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="PSNR/SSIM/MSE report")
    s.add_argument("--data", required=True)
    s.add_argument("--ckpt", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("infer", parents=[common], help="dehaze with the D-Net checkpoint only")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--image", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_infer)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    threads = os.environ.get("HAZEBAYES_THREADS")
    try:
        cfg = resolve_config(args)
        if threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=int(threads)):
                result = args.func(args, cfg)
        else:
            result = args.func(args, cfg)
    except Exception as exc:  # reported as structured JSON
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    _emit(result, args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
