"""Command-line interface.

``deepgun <command> [flags]`` with commands synth, extract, train, unmix,
eval, render and replay.  Any command accepts ``--config FILE``, a flat
``key = value`` file whose entries act as defaults under explicit flags.
Every command writes ``manifest.txt`` into its output directory; ``deepgun
replay manifest.txt`` reruns it with the recorded parameters.

Exit codes: 0 success, 1 runtime or numerical failure, 2 usage or format error.
"""

import argparse
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from ._accel import USE_NUMBA
from .core import HyperCube, match_materials, nrmse, reconstruct_image, sam_metric
from .io import (FormatError, em_tensor_from_cube, em_tensor_to_cube, load_cube,
                 load_matrix_csv, read_keyvalue, save_cube, save_matrix_csv,
                 write_keyvalue)
from .neural import load_model, save_model
from .synth import (VARIABILITY_KINDS, NoiseSpec, VariabilityModel, gen_cube,
                    make_ground_truth, mix, noise_seed)
from .unmix import (StageError, UnmixConfig, data_scale, fit_endmember_models,
                    reference_and_bundles, run_deepgun, stage_seeds)

log = logging.getLogger("deepgun")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
MANIFEST = "manifest.txt"

# blue at 0, purple at 0.5, red at 1
RAMP = np.array([[0, 0, 255], [128, 0, 128], [255, 0, 0]], dtype=np.float64)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

def _float(text):
    return float(text)          # accepts "inf"


def _optional(kind):
    def parse(text):
        return None if str(text).lower() == "none" else kind(text)
    parse.__name__ = kind.__name__
    return parse


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def _common(p, out=True):
    p.add_argument("--config", help="key = value file merged under explicit flags")
    if out:
        p.add_argument("--out-dir", help="output directory (created if missing)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker cap for per-pixel solves")
    p.add_argument("--quiet", action="store_true", help="only log warnings and errors")


def _pipeline_flags(p, learn=True, solve=False):
    p.add_argument("--cube", help="input .hcube")
    p.add_argument("--materials", type=int, help="number of endmembers P")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m0-csv", type=_optional(str), default=None,
                   help="reference endmembers (L x P CSV) instead of VCA")
    p.add_argument("--pure-count", type=_optional(int), default=None,
                   help="pixels per bundle (default 100, or max(10, ceil(N/10)) when N < 200)")
    if learn:
        p.add_argument("--latent-dim", type=int, default=2)
        p.add_argument("--epochs", type=int, default=50)
        p.add_argument("--learning-rate", type=float, default=1e-3)
        p.add_argument("--library-csv", nargs="+", default=None,
                       help="training spectra per material (L x S CSV each), replacing bundles")
    if solve:
        p.add_argument("--lambda-a", type=float, default=0.01)
        p.add_argument("--lambda-z", type=float, default=0.1)
        p.add_argument("--max-iter", type=int, default=10, help="outer iterations")
        p.add_argument("--models", nargs="+", default=None, help=".vaem files, one per material")
        p.add_argument("--save-models", action="store_true",
                       help="write the trained models next to the results")


def build_parser():
    parser = argparse.ArgumentParser(prog="deepgun", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("synth", help="generate a synthetic cube with ground truth")
    p.add_argument("--height", type=int, default=20)
    p.add_argument("--width", type=int, default=20)
    p.add_argument("--bands", type=int, default=50)
    p.add_argument("--materials", type=int, default=3)
    p.add_argument("--variability", choices=VARIABILITY_KINDS, default="dc1")
    p.add_argument("--amplitude", type=_optional(float), default=None,
                   help="variability amplitude (default per kind)")
    p.add_argument("--snr-db", type=_float, default=30.0, help="'inf' for a noiseless cube")
    p.add_argument("--seed", type=int, default=0)
    _common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="reference endmembers and pure-pixel bundles")
    _pipeline_flags(p, learn=False)
    _common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train one generative model per material")
    _pipeline_flags(p)
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("unmix", help="run the full unmixing pipeline")
    _pipeline_flags(p, solve=True)
    _common(p)
    p.set_defaults(func=cmd_unmix)

    p = sub.add_parser("eval", help="compare estimates with ground truth")
    p.add_argument("--abundances", help="estimated abundances CSV")
    p.add_argument("--em-tensor", help="estimated endmember tensor .hcube")
    p.add_argument("--truth-abundances", help="true abundances CSV")
    p.add_argument("--truth-em-tensor", help="true endmember tensor .hcube")
    p.add_argument("--cube", help="observed cube, for the reconstruction error")
    _common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="write abundance maps as PGM (or PPM) images")
    p.add_argument("--abundances", help="abundances CSV (P x N)")
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--colormap", action="store_true", help="blue-to-red PPM instead of grey PGM")
    _common(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("replay", help="rerun a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out-dir", help="write elsewhere than the recorded directory")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_replay, config=None)
    return parser


REQUIRED = {
    "synth": ["out_dir"],
    "extract": ["cube", "materials", "out_dir"],
    "train": ["cube", "materials", "out_dir"],
    "unmix": ["cube", "materials", "out_dir"],
    "eval": ["abundances", "em_tensor", "truth_abundances", "truth_em_tensor", "cube",
             "out_dir"],
    "render": ["abundances", "height", "width", "out_dir"],
    "replay": [],
}

# recorded in manifests but not replayed
_NOT_PARAMS = {"config", "func", "command", "quiet"}


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _convert(action, text):
    if action.nargs in ("+", "*"):
        items = [t.strip() for t in str(text).split(",") if t.strip()]
        if not items or items == ["none"]:
            return None
        return [action.type(t) if action.type else t for t in items]
    if isinstance(action, argparse._StoreTrueAction):
        return _bool(text)
    value = action.type(text) if action.type else str(text)
    if action.choices is not None and value not in action.choices:
        raise UsageError(f"--{action.dest.replace('_', '-')}: {value!r} is not one of "
                         f"{list(action.choices)}")
    return value


def _defaults_from(sub, values, source):
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help",)}
    out = {}
    for key, text in values.items():
        dest = key.replace("-", "_")
        if dest not in actions or dest in _NOT_PARAMS:
            raise UsageError(f"{source}: unknown setting {key!r}")
        try:
            out[dest] = _convert(actions[dest], text)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"{source}: bad value for {key!r}: {exc}") from None
    return out


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = _subparser(parser, args.command)
        try:
            values = read_keyvalue(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        sub.set_defaults(**_defaults_from(sub, values, args.config))
        args = parser.parse_args(argv)
    missing = [d for d in REQUIRED[args.command] if getattr(args, d, None) is None]
    if missing:
        raise UsageError("missing required setting(s): "
                         + ", ".join("--" + m.replace("_", "-") for m in missing))
    return args


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_format(v) for v in value)
    return str(value)


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

class Manifest:
    """Collects a run's parameters, seeds, files and timings."""

    def __init__(self, args):
        self.args = args
        self.items = {"command": args.command,
                      "kernels": "numba" if USE_NUMBA else "numpy"}
        for key, value in sorted(vars(args).items()):
            if key not in _NOT_PARAMS:
                self.items[f"arg.{key}"] = _format(value)
        self.t0 = time.perf_counter()

    def add(self, prefix, mapping):
        for k, v in mapping.items():
            self.items[f"{prefix}.{k}"] = _format(v)

    def write(self, out_dir):
        self.items["timing.total"] = _format(time.perf_counter() - self.t0)
        write_keyvalue(Path(out_dir) / MANIFEST, self.items)


def _out_dir(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _abs(path):
    return None if path is None else str(Path(path).resolve())


def _absolutize(args, keys):
    for k in keys:
        v = getattr(args, k, None)
        if isinstance(v, list):
            setattr(args, k, [_abs(x) for x in v])
        elif v is not None:
            setattr(args, k, _abs(v))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args):
    if min(args.height, args.width, args.bands) < 1:
        raise UsageError("--height, --width and --bands must be positive")
    if not 1 <= args.materials <= args.bands:
        raise UsageError(f"--materials must lie in [1, {args.bands}]")
    if math.isnan(args.snr_db):
        raise UsageError("--snr-db must be a number or inf")
    try:
        model = VariabilityModel.default(args.variability)
        if args.amplitude is not None:
            model = VariabilityModel(kind=args.variability, amplitude=args.amplitude)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _absolutize(args, ["out_dir"])
    out = _out_dir(args)
    man = Manifest(args)
    nseed = noise_seed(args.seed)
    gt = make_ground_truth(args.height, args.width, args.bands, args.materials, model,
                           args.seed)
    cube, _ = gen_cube(gt, NoiseSpec(args.snr_db, nseed))
    save_cube(out / "cube.hcube", cube)
    save_matrix_csv(out / "abundances.csv", gt.abundances)
    save_matrix_csv(out / "endmembers.csv", gt.base_endmembers)
    save_cube(out / "em_tensor.hcube", em_tensor_to_cube(gt.endmembers, gt.height, gt.width))
    # SNR of the cube as stored (single precision), against the exact mixture
    stored = load_cube(out / "cube.hcube").matrix()
    signal = mix(gt)
    noise = stored - signal
    snr = math.inf if not np.any(noise) else 10 * math.log10(np.sum(signal**2)
                                                             / np.sum(noise**2))
    man.add("seed", {"ground_truth": args.seed, "noise": nseed})
    man.add("output", {k: out / f for k, f in [("cube", "cube.hcube"),
                                                ("abundances", "abundances.csv"),
                                                ("endmembers", "endmembers.csv"),
                                                ("em_tensor", "em_tensor.hcube")]})
    man.add("info", {"measured_snr_db": snr, "amplitude": model.amplitude})
    man.write(out)
    log.info("synth: %dx%d cube, %d bands, %d materials, SNR %.4f dB -> %s",
             args.height, args.width, args.bands, args.materials, snr, out)
    return EXIT_OK


def _load_cube_arg(args):
    return load_cube(args.cube)


def _pipeline_config(args, cube, **extra):
    if args.materials < 1:
        raise UsageError("--materials must be at least 1")
    if args.materials > cube.bands:
        raise UsageError(f"--materials {args.materials} exceeds the cube's {cube.bands} bands")
    N = cube.n_pixels
    if args.pure_count is not None and not 3 <= args.pure_count <= N:
        raise UsageError(f"--pure-count must lie in [3, {N}] for this cube")
    kw = dict(materials=args.materials, pure_count=args.pure_count, seed=args.seed,
              threads=max(1, args.threads))
    if hasattr(args, "latent_dim"):
        kw.update(latent_dim=args.latent_dim, epochs=args.epochs,
                  learning_rate=args.learning_rate)
    kw.update(extra)
    try:
        config = UnmixConfig(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if config.resolved_pure_count(N) > N:
        raise UsageError(f"default bundle size {config.resolved_pure_count(N)} exceeds "
                         f"the {N} pixels; pass --pure-count")
    return config


def _load_m0(args, cube):
    if args.m0_csv is None:
        return None
    m0 = load_matrix_csv(args.m0_csv)
    if m0.shape != (cube.bands, args.materials):
        raise FormatError(f"{args.m0_csv}: shape {m0.shape}, expected "
                          f"{(cube.bands, args.materials)}")
    return m0


def _load_library(args, cube):
    if args.library_csv is None:
        return None
    if len(args.library_csv) != args.materials:
        raise UsageError(f"--library-csv needs {args.materials} files, got "
                         f"{len(args.library_csv)}")
    lib = []
    for path in args.library_csv:
        X = load_matrix_csv(path)
        if X.shape[0] != cube.bands:
            raise FormatError(f"{path}: {X.shape[0]} rows, expected {cube.bands} bands")
        lib.append(X.T)
    return lib


def _seed_record(config):
    vca_seed, train = stage_seeds(config.seed, config.materials)
    rec = {"base": config.seed, "vca": vca_seed}
    rec.update({f"train_{p}": s for p, s in enumerate(train)})
    return rec


def cmd_extract(args):
    _absolutize(args, ["cube", "m0_csv", "out_dir"])
    cube = _load_cube_arg(args)
    config = _pipeline_config(args, cube)
    m0 = _load_m0(args, cube)
    out = _out_dir(args)
    man = Manifest(args)
    m0, sets, timings = reference_and_bundles(cube, config, m0)
    Y = cube.matrix()
    save_matrix_csv(out / "m0.csv", m0)
    files = {"m0": out / "m0.csv"}
    for s in sets:
        save_matrix_csv(out / f"bundle_{s.material}.csv", Y[:, s.pixel_indices])
        (out / f"bundle_{s.material}_indices.txt").write_text(
            "".join(f"{i}\n" for i in s.pixel_indices))
        files[f"bundle_{s.material}"] = out / f"bundle_{s.material}.csv"
    man.add("seed", _seed_record(config))
    man.add("info", {"pure_count": config.resolved_pure_count(cube.n_pixels)})
    man.add("output", files)
    man.add("timing", timings)
    man.write(out)
    log.info("extract: %d bundles of %d pixels -> %s", len(sets),
             config.resolved_pure_count(cube.n_pixels), out)
    return EXIT_OK


def _write_models(out, models, z0):
    files = {}
    for p, m in enumerate(models):
        save_model(out / f"model_{p}.vaem", m)
        files[f"model_{p}"] = out / f"model_{p}.vaem"
    save_matrix_csv(out / "z0.csv", z0)
    files["z0"] = out / "z0.csv"
    return files


def cmd_train(args):
    from .extraction import latent_reference

    _absolutize(args, ["cube", "m0_csv", "library_csv", "out_dir"])
    cube = _load_cube_arg(args)
    config = _pipeline_config(args, cube)
    m0 = _load_m0(args, cube)
    library = _load_library(args, cube)
    out = _out_dir(args)
    man = Manifest(args)
    models, m0, _, timings = fit_endmember_models(cube, config, m0, library)
    z0 = latent_reference(models, m0 / data_scale(cube.matrix()))
    files = _write_models(out, models, z0)
    save_matrix_csv(out / "m0.csv", m0)
    files["m0"] = out / "m0.csv"
    man.add("seed", _seed_record(config))
    man.add("info", {f"final_loss_{p}": m.loss_history[-1] for p, m in enumerate(models)})
    man.add("output", files)
    man.add("timing", timings)
    man.write(out)
    log.info("train: %d models -> %s", len(models), out)
    return EXIT_OK


def cmd_unmix(args):
    _absolutize(args, ["cube", "m0_csv", "library_csv", "models", "out_dir"])
    cube = _load_cube_arg(args)
    config = _pipeline_config(args, cube, lambda_a=args.lambda_a, lambda_z=args.lambda_z,
                              max_outer_iterations=args.max_iter)
    m0 = _load_m0(args, cube)
    library = _load_library(args, cube)
    models = None
    if args.models is not None:
        if len(args.models) != args.materials:
            raise UsageError(f"--models needs {args.materials} files, got {len(args.models)}")
        models = [load_model(p) for p in args.models]
        for path, m in zip(args.models, models):
            if m.bands != cube.bands or m.latent_dim != config.latent_dim:
                raise FormatError(f"{path}: model has L={m.bands}, K={m.latent_dim}; "
                                  f"expected L={cube.bands}, K={config.latent_dim}")
    out = _out_dir(args)
    man = Manifest(args)
    res = run_deepgun(cube, config, m0=m0, models=models, library=library)
    N, P, K = res.latents.shape
    save_matrix_csv(out / "abundances.csv", res.abundances)
    save_matrix_csv(out / "fcls_abundances.csv", res.a_init)
    save_matrix_csv(out / "latents.csv", res.latents.reshape(N, P * K).T)
    save_cube(out / "em_tensor.hcube", em_tensor_to_cube(res.endmembers, cube.height,
                                                         cube.width))
    save_matrix_csv(out / "m0.csv", res.m0)
    save_matrix_csv(out / "z0.csv", res.z0)
    with open(out / "objective.csv", "w") as fh:
        for i, j in enumerate(res.objective_history):
            fh.write(f"{i},{j:.17g}\n")
    files = {k: out / f for k, f in [("abundances", "abundances.csv"),
                                      ("fcls_abundances", "fcls_abundances.csv"),
                                      ("latents", "latents.csv"),
                                      ("em_tensor", "em_tensor.hcube"),
                                      ("m0", "m0.csv"), ("z0", "z0.csv"),
                                      ("objective", "objective.csv")]}
    if args.save_models:
        files.update(_write_models(out, res.models, res.z0))
    man.add("seed", _seed_record(config))
    man.add("info", {"iterations_run": res.iterations_run, "scale": res.scale,
                     "pure_count": config.resolved_pure_count(cube.n_pixels),
                     "final_objective": res.objective_history[-1]})
    man.add("output", files)
    man.add("timing", res.timings)
    man.write(out)
    log.info("unmix: %d outer iterations, J=%.10g -> %s", res.iterations_run,
             res.objective_history[-1], out)
    return EXIT_OK


def evaluate(A, em, A_true, em_true, Y, height, width):
    """NRMSE_A, NRMSE_M, SAM_M and NRMSE_Y after greedy spectral-angle matching
    of the pixel-averaged endmembers."""
    perm = match_materials(em_true.mean(axis=2), em.mean(axis=2))
    A_m, em_m = A[perm], em[:, perm]
    recon = reconstruct_image(em, A, height, width).matrix()
    return {"NRMSE_A": nrmse(A_true, A_m), "NRMSE_M": nrmse(em_true, em_m),
            "SAM_M": sam_metric(em_true, em_m), "NRMSE_Y": nrmse(Y, recon)}


def cmd_eval(args):
    _absolutize(args, ["abundances", "em_tensor", "truth_abundances", "truth_em_tensor",
                       "cube", "out_dir"])
    A = load_matrix_csv(args.abundances)
    A_true = load_matrix_csv(args.truth_abundances)
    cube = load_cube(args.cube)
    P = A.shape[0]
    em_cube = load_cube(args.em_tensor)
    em_true_cube = load_cube(args.truth_em_tensor)
    em = em_tensor_from_cube(em_cube, P)
    em_true = em_tensor_from_cube(em_true_cube, A_true.shape[0])
    checks = [(A.shape == A_true.shape, args.abundances, args.truth_abundances),
              (em.shape == em_true.shape, args.em_tensor, args.truth_em_tensor),
              (A.shape[1] == cube.n_pixels, args.abundances, args.cube),
              (em.shape[0] == cube.bands and em.shape[2] == cube.n_pixels,
               args.em_tensor, args.cube)]
    for ok, a, b in checks:
        if not ok:
            raise FormatError(f"shape mismatch between {a} and {b}")
    out = _out_dir(args)
    man = Manifest(args)
    metrics = evaluate(A, em, A_true, em_true, cube.matrix(), cube.height, cube.width)
    with open(out / "metrics.csv", "w") as fh:
        fh.write("metric,value\n")
        for k, v in metrics.items():
            fh.write(f"{k},{v:.17g}\n")
    for k, v in metrics.items():
        print(f"{k} {v:.6g}")
    man.add("metric", metrics)
    man.add("output", {"metrics": out / "metrics.csv"})
    man.write(out)
    return EXIT_OK


def colormap(values):
    """Blue (0) through purple (0.5) to red (1), as uint8 RGB."""
    t = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)[..., None]
    lo = RAMP[0] + (RAMP[1] - RAMP[0]) * (2 * t)
    hi = RAMP[1] + (RAMP[2] - RAMP[1]) * (2 * t - 1)
    return np.rint(np.where(t <= 0.5, lo, hi)).astype(np.uint8)


def write_pgm(path, img):
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + img.astype(np.uint8).tobytes())


def write_ppm(path, rgb):
    h, w, _ = rgb.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + rgb.astype(np.uint8).tobytes())


def cmd_render(args):
    _absolutize(args, ["abundances", "out_dir"])
    if args.height < 1 or args.width < 1:
        raise UsageError("--height and --width must be positive")
    A = load_matrix_csv(args.abundances)
    if A.shape[1] != args.height * args.width:
        raise FormatError(f"{args.abundances}: {A.shape[1]} pixels, expected "
                          f"{args.height}x{args.width}={args.height * args.width}")
    out = _out_dir(args)
    man = Manifest(args)
    files = {}
    for p, row in enumerate(A):
        img = row.reshape(args.height, args.width)
        if args.colormap:
            path = out / f"abundance_{p}.ppm"
            write_ppm(path, colormap(img))
        else:
            path = out / f"abundance_{p}.pgm"
            write_pgm(path, np.rint(255 * np.clip(img, 0.0, 1.0)))
        files[f"map_{p}"] = path
    man.add("output", files)
    man.write(out)
    log.info("render: %d maps -> %s", A.shape[0], out)
    return EXIT_OK


def cmd_replay(args):
    try:
        items = read_keyvalue(args.manifest)
    except OSError as exc:
        raise UsageError(f"cannot read manifest: {exc}") from None
    command = items.get("command")
    if command not in REQUIRED or command == "replay":
        raise FormatError(f"{args.manifest}: no replayable command recorded")
    parser = build_parser()
    sub = _subparser(parser, command)
    params = {k[4:]: v for k, v in items.items() if k.startswith("arg.")}
    sub.set_defaults(**_defaults_from(sub, params, args.manifest))
    argv = [command] + (["--out-dir", args.out_dir] if args.out_dir else [])
    if args.quiet:
        argv.append("--quiet")
    replay = parser.parse_args(argv)
    log.info("replay: %s from %s", command, args.manifest)
    return replay.func(replay)


def main(argv=None):
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s",
                        force=True)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        log.error("deepgun: error: %s", exc)
        return EXIT_USAGE
    except SystemExit as exc:           # argparse usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.quiet:
        logging.getLogger().setLevel(logging.WARNING)
    try:
        return args.func(args)
    except UsageError as exc:
        log.error("deepgun %s: error: %s", args.command, exc)
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError, FormatError) as exc:
        log.error("deepgun %s: input error: %s", args.command, exc)
        return EXIT_USAGE
    except StageError as exc:
        log.error("deepgun %s: stage %s failed: %s", args.command, exc.stage, exc)
        return EXIT_RUNTIME
    except (RuntimeError, FloatingPointError, ValueError, OSError) as exc:
        log.error("deepgun %s: %s", args.command, exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
