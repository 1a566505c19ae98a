"""Batch command-line surface: simulate, fit, summarize, verify-prior.

Every command is deterministic given its flags, seed, and input files.
Flags mirror config-file keys one to one (``--kappa-d`` <-> ``kappa_d``); a
config file is a flat ``key = value`` text document and flags override it.

Exit codes: 0 success, 2 validation error, 3 numeric failure,
4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict

import numpy as np

from . import scenarios, summaries
from .draws import DrawStore, load_chains, merge_chains
from .gibbs_sampler import GibbsConfig, GibbsSampler, TruncationLevels
from .model import (ConcentrationSetting, Hyperparameters, NumericFailure,
                    ValidationError, VerificationFailure, validate_dataset)
from .prior import (mc_verify_prior, truncation_bound_mixture,
                    truncation_bound_single)
from .rng import RngStream
from .slice_sampler import SliceConfig, SliceSampler


def _add_simulate(sub):
    p = sub.add_parser("simulate", help="generate a scenario dataset + truth")
    p.add_argument("--scenario", required=True, choices=["1", "2", "3"])
    p.add_argument("--case", default="A", choices=["A", "B"])
    p.add_argument("--size", type=int, default=75)
    p.add_argument("--r", type=int, default=2)
    p.add_argument("--n3", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)


def _add_fit(sub):
    p = sub.add_parser("fit", help="run MCMC chains on a dataset file")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None, help="flat key = value file")
    p.add_argument("--model", choices=["cam", "dcam"], default=None)
    p.add_argument("--sampler", choices=["slice", "gibbs"], default=None)
    p.add_argument("--chains", type=int, default=None)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--burnin", type=int, default=None)
    p.add_argument("--thin", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--kappa-d", type=float, default=None)
    p.add_argument("--kappa-o", type=float, default=None)
    p.add_argument("--max-k", type=int, default=None)
    p.add_argument("--max-l", type=int, default=None)
    p.add_argument("--K", type=int, default=None, help="gibbs outer level")
    p.add_argument("--L", type=int, default=None, help="gibbs inner level")
    p.add_argument("--force", action="store_true",
                   help="accept gibbs levels whose prior bound exceeds 0.1")
    p.add_argument("--m0", type=float, default=None)
    p.add_argument("--k0", type=float, default=None)
    p.add_argument("--a0", type=float, default=None)
    p.add_argument("--b0", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None,
                   help="fix the outer concentration")
    p.add_argument("--alpha-gamma", default=None, metavar="A,B")
    p.add_argument("--beta", type=float, default=None,
                   help="fix the inner concentration")
    p.add_argument("--beta-gamma", default=None, metavar="A,B")
    p.add_argument("--scale", action="store_true",
                   help="library-size scaling (count data)")
    p.add_argument("--reg-prior", default=None, metavar="M,K",
                   help="enable the unit covariate with a N(M, 1/K) prior")
    p.add_argument("--label-switch", dest="label_switch",
                   action="store_true", default=None)
    p.add_argument("--no-label-switch", dest="label_switch",
                   action="store_false")
    p.add_argument("--dependent-envelopes", action="store_true", default=None)
    p.add_argument("--out", required=True)


def _add_summarize(sub):
    p = sub.add_parser("summarize", help="posterior summaries of a draw store")
    p.add_argument("--draws", required=True)
    p.add_argument("--truth", default=None)
    p.add_argument("--data", default=None,
                   help="dataset file (enables CRF/PCM outputs for counts)")
    p.add_argument("--classes", type=int, default=3,
                   help="abundance classes for the PCM outputs")
    p.add_argument("--out", required=True)


def _add_verify(sub):
    p = sub.add_parser("verify-prior",
                       help="Monte-Carlo check of the prior analytics")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--reps", type=int, default=100_000)
    p.add_argument("--tv-reps", type=int, default=10_000)
    p.add_argument("--depth", type=int, default=150)
    p.add_argument("--K", type=int, default=None)
    p.add_argument("--L", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cam", description="Nested shared-atom clustering engine")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_simulate(sub)
    _add_fit(sub)
    _add_summarize(sub)
    _add_verify(sub)
    return parser


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args):
    os.makedirs(args.out, exist_ok=True)
    data, dc, oc = scenarios.generate(
        args.scenario, args.seed, case=args.case, size=args.size,
        r=args.r, n3=args.n3)
    header = {"seed": args.seed, "scenario": args.scenario}
    if args.scenario == "1":
        header.update(case=args.case, size=args.size)
    elif args.scenario == "2":
        header.update(r=args.r)
    else:
        header.update(n3=args.n3)
    scenarios.write_dataset(os.path.join(args.out, "dataset.csv"), data,
                            header=header)
    scenarios.write_truth(os.path.join(args.out, "truth.csv"), dc, oc,
                          header=header)
    print(f"scenario {args.scenario}: J={data.n_units} units, "
          f"N={data.total_n} observations, kind={data.kind} -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# fit


_CONFIG_KEYS = ("model", "sampler", "chains", "iters", "burnin", "thin",
                "seed", "kappa_d", "kappa_o", "max_k", "max_l", "K", "L",
                "m0", "k0", "a0", "b0", "alpha", "alpha_gamma", "beta",
                "beta_gamma", "scale", "reg_prior", "label_switch",
                "dependent_envelopes", "force")

_DEFAULTS = dict(model=None, sampler="slice", chains=1, iters=5000,
                 burnin=5000, thin=1, seed=0, kappa_d=0.5, kappa_o=0.5,
                 max_k=200, max_l=200, K=35, L=50, m0=None, k0=None,
                 a0=3.0, b0=1.0, alpha=None, alpha_gamma="3,3", beta=None,
                 beta_gamma="3,3", scale=False, reg_prior=None,
                 label_switch=True, dependent_envelopes=False, force=False)

_BOOL_KEYS = ("scale", "label_switch", "dependent_envelopes", "force")
_INT_KEYS = ("chains", "iters", "burnin", "thin", "seed", "max_k", "max_l",
             "K", "L")
_FLOAT_KEYS = ("kappa_d", "kappa_o", "m0", "k0", "a0", "b0", "alpha", "beta")


def load_config_file(path):
    """Parse a flat ``key = value`` (or ``key: value``) text document."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            for sep in ("=", ":"):
                if sep in line:
                    key, val = line.split(sep, 1)
                    break
            else:
                raise ValidationError(
                    f"{path}:{lineno}: expected 'key = value'")
            key = key.strip()
            if key not in _CONFIG_KEYS:
                raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = val.strip()
    return values


def _coerce(key, value):
    if value is None or not isinstance(value, str):
        return value
    if key in _BOOL_KEYS:
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValidationError(f"config key {key}: not a boolean: {value!r}")
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    return value


def resolve_run_settings(args):
    """Defaults < config file < explicit flags."""
    settings = dict(_DEFAULTS)
    if args.config:
        for key, val in load_config_file(args.config).items():
            settings[key] = _coerce(key, val)
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            settings[key] = flag
    return settings


def _pair(text, name):
    try:
        a, b = (float(x) for x in str(text).split(","))
    except Exception as exc:
        raise ValidationError(f"{name} expects 'A,B', got {text!r}") from exc
    return a, b


def _concentration(fixed, gamma_text):
    if fixed is not None:
        return ConcentrationSetting(value=fixed, prior=None)
    return ConcentrationSetting(prior=_pair(gamma_text, "gamma hyperprior"))


def build_run(settings, data):
    """Resolve (model, hyper, sampler config) against the dataset."""
    model = settings["model"]
    if model is None:
        model = "dcam" if data.kind == "count" else "cam"
    if model == "dcam" and data.kind != "count":
        raise ValidationError("dcam requires count data")
    if model == "cam" and data.kind != "continuous":
        raise ValidationError("cam requires continuous data")
    if settings["scale"]:
        data = data.with_library_scale()

    overrides = dict(
        a0=settings["a0"], b0=settings["b0"],
        alpha=_concentration(settings["alpha"], settings["alpha_gamma"]),
        beta=_concentration(settings["beta"], settings["beta_gamma"]),
        kappa_d=settings["kappa_d"], kappa_o=settings["kappa_o"])
    if settings["m0"] is not None:
        overrides["m0"] = settings["m0"]
    if settings["k0"] is not None:
        overrides["k0"] = settings["k0"]
    if settings["reg_prior"] is not None:
        overrides["reg_prior"] = _pair(settings["reg_prior"], "reg_prior")
    hyper = Hyperparameters.from_data(data, **overrides)
    return model, data, hyper


def _fit_one_chain(payload):
    (settings, data, hyper, model, chain_index, out_dir) = payload
    streams = RngStream(settings["seed"]).split(settings["chains"])
    rng = streams[chain_index]
    if settings["sampler"] == "slice":
        config = SliceConfig(
            iters=settings["iters"], burnin=settings["burnin"],
            thin=settings["thin"], max_k=settings["max_k"],
            max_l=settings["max_l"], label_switch=settings["label_switch"],
            dependent_envelopes=settings["dependent_envelopes"],
            seed=settings["seed"])
        sampler = SliceSampler(data, hyper, config, model=model)
    else:
        config = GibbsConfig(iters=settings["iters"],
                             burnin=settings["burnin"],
                             thin=settings["thin"], seed=settings["seed"])
        levels = TruncationLevels(K=settings["K"], L=settings["L"])
        sampler = GibbsSampler(data, hyper, levels, config, model=model)
    store = sampler.run(rng=rng)
    store.meta["chain_index"] = chain_index
    store.meta["n_chains"] = settings["chains"]
    store.meta["hyper"] = json.loads(json.dumps(asdict(hyper)))
    store.meta["settings"] = {k: settings[k] for k in _CONFIG_KEYS}
    store.save(out_dir)
    return out_dir


def cmd_fit(args):
    settings = resolve_run_settings(args)
    data = scenarios.read_dataset(args.data)
    model, data, hyper = build_run(settings, data)
    validate_dataset(data)
    if settings["chains"] < 1:
        raise ValidationError("chains must be >= 1")

    if settings["sampler"] == "gibbs":
        bound = truncation_bound_mixture(
            hyper.alpha.initial(), hyper.beta.initial(),
            settings["K"], settings["L"], data.total_n)
        print(f"gibbs truncation bound (prior means): {bound:.6g}")
        if bound > 0.1 and not settings["force"]:
            raise ValidationError(
                f"truncation bound {bound:.3g} exceeds 0.1; raise K/L or "
                f"pass --force")

    os.makedirs(args.out, exist_ok=True)
    jobs = [(settings, data, hyper, model, c,
             os.path.join(args.out, f"chain{c:03d}"))
            for c in range(settings["chains"])]
    workers = min(settings["chains"],
                  int(os.environ.get("CAM_THREADS", os.cpu_count() or 1)))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for done in pool.map(_fit_one_chain, jobs):
                print(f"wrote {done}")
    else:
        for job in jobs:
            print(f"wrote {_fit_one_chain(job)}")
    return 0


# ---------------------------------------------------------------------------
# summarize


def _write_matrix(path, matrix):
    with open(path, "w") as fh:
        for row in np.asarray(matrix):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _write_partition(path, labels):
    with open(path, "w") as fh:
        fh.write("index,label\n")
        for i, lab in enumerate(labels):
            fh.write(f"{i},{int(lab)}\n")


def _metrics_block(truth, estimate, ccm):
    detected = len(np.unique(estimate))
    true_k = len(np.unique(truth))
    return {
        "detected": detected,
        "true": true_k,
        "ari": summaries.ari(estimate, truth),
        "nfd": summaries.nfd(ccm, summaries.true_coclustering(truth)),
    }


def cmd_summarize(args):
    stores = load_chains(args.draws)
    store = merge_chains(stores)
    if store.n_draws < 1:
        raise ValidationError("draw store is empty")
    os.makedirs(args.out, exist_ok=True)

    smat = store.s_matrix()
    ccm_d = summaries.coclustering(smat)
    est_d = summaries.minimize_expected_vi(ccm_d, sampled=smat)

    mmat = store.m_matrix()
    n_obs = mmat.shape[1]
    ccm_o = summaries.coclustering(mmat)
    big = n_obs >= 1000
    est_o = summaries.minimize_expected_vi(
        ccm_o, sampled=mmat, max_sampled=300 if big else 1000,
        max_cuts=100 if big else None)

    _write_matrix(os.path.join(args.out, "ccm_distributional.csv"), ccm_d)
    _write_matrix(os.path.join(args.out, "ccm_observational.csv"), ccm_o)
    _write_partition(os.path.join(args.out, "partition_distributional.csv"),
                     est_d.labels)
    _write_partition(os.path.join(args.out, "partition_observational.csv"),
                     est_o.labels)

    report = {
        "n_draws": store.n_draws,
        "n_chains": len(stores),
        "dc.clusters": est_d.n_clusters,
        "dc.expected_vi": est_d.expected_loss,
        "dc.provenance": est_d.provenance,
        "oc.clusters": est_o.n_clusters,
        "oc.expected_vi": est_o.expected_loss,
        "oc.provenance": est_o.provenance,
    }

    table = None
    if args.truth:
        dc_truth, oc_truth = scenarios.read_truth(args.truth)
        oc_truth_flat = np.concatenate(oc_truth)
        if len(dc_truth) != smat.shape[1] or len(oc_truth_flat) != n_obs:
            raise ValidationError("truth file does not match the draw store")
        dc_m = _metrics_block(dc_truth, est_d.labels, ccm_d)
        oc_m = _metrics_block(oc_truth_flat, est_o.labels, ccm_o)
        for tag, block in (("dc", dc_m), ("oc", oc_m)):
            report[f"{tag}.detected_over_true"] = \
                f"{block['detected']}/{block['true']}"
            report[f"{tag}.ari"] = block["ari"]
            report[f"{tag}.nfd"] = block["nfd"]
        table = (
            f"{'':>8}{'DC':>10}{'OC':>10}\n"
            f"{'D/T':>8}{dc_m['detected']:>8}/{dc_m['true']}"
            f"{oc_m['detected']:>8}/{oc_m['true']}\n"
            f"{'ARI':>8}{dc_m['ari']:>10.3f}{oc_m['ari']:>10.3f}\n"
            f"{'NFD':>8}{dc_m['nfd']:>10.3f}{oc_m['nfd']:>10.3f}\n")

    if args.data:
        data = scenarios.read_dataset(args.data)
        if not np.array_equal(data.lengths, store.unit_lengths):
            raise ValidationError("dataset does not match the draw store")
        if data.kind == "count":
            with open(os.path.join(args.out, "crf.csv"), "w") as fh:
                fh.write("unit,rank,cumulative_share\n")
                for j, unit in enumerate(data.units):
                    for rank, share in enumerate(summaries.crf(unit)):
                        fh.write(f"{j},{rank + 1},{share!r}\n")
            if len(set(int(n) for n in data.lengths)) == 1:
                _write_pcm_outputs(args, store, est_d, est_o, data)

    with open(os.path.join(args.out, "report.txt"), "w") as fh:
        for key in sorted(report):
            fh.write(f"{key}={report[key]}\n")
    if table:
        with open(os.path.join(args.out, "table.txt"), "w") as fh:
            fh.write(table)
        print(table, end="")
    for key in sorted(report):
        print(f"{key}={report[key]}")
    return 0


def _write_pcm_outputs(args, store, est_d, est_o, data):
    intensity = summaries.oc_mean_intensity(store, est_o.labels)
    class_map = summaries.class_map_by_intensity(intensity, args.classes)
    classes = summaries.abundance_classes(est_o.labels, class_map)
    n_items = int(data.lengths[0])
    class_matrix = classes.reshape(data.n_units, n_items).T
    names = (list(data.item_names)
             if data.item_names else [str(i) for i in range(n_items)])
    for k in np.unique(est_d.labels):
        matrix = summaries.pcm(class_matrix, est_d.labels, k)
        _write_matrix(os.path.join(args.out, f"pcm_dc{k}.csv"), matrix)
        with open(os.path.join(args.out, f"edges_dc{k}.csv"), "w") as fh:
            fh.write("item_a,item_b,weight\n")
            for a, b, w in summaries.pcm_edges(matrix, names=names):
                fh.write(f"{a},{b},{w!r}\n")


# ---------------------------------------------------------------------------
# verify-prior


def cmd_verify_prior(args):
    levels = ((5, 5), (10, 10))
    if args.K is not None and args.L is not None:
        levels = ((args.K, args.L),)
    report = mc_verify_prior(args.alpha, args.beta, reps=args.reps,
                             depth=args.depth, rng=RngStream(args.seed),
                             levels=levels, tv_reps=args.tv_reps)
    text = report.to_text()
    for k, l in levels:
        text += (f"bound_single_K{k}_L{l}="
                 f"{truncation_bound_single(args.alpha, args.beta, k, l)!r}\n")
        text += (f"bound_mixture_K{k}_L{l}_N1="
                 f"{truncation_bound_mixture(args.alpha, args.beta, k, l, 1)!r}\n")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text, end="")
    if not report.ok:
        raise VerificationFailure("a prior check exceeded its tolerance")
    return 0


# ---------------------------------------------------------------------------


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"simulate": cmd_simulate, "fit": cmd_fit,
                "summarize": cmd_summarize, "verify-prior": cmd_verify_prior}
    try:
        return handlers[args.command](args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except VerificationFailure as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return 4
    except FileNotFoundError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
