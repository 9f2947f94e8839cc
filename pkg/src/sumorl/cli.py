"""``sumorl`` command line: data generation, model training, pipeline runs and reports.

Every artifact carries the resolved config and seed. Reports and run logs
are JSON lines with sorted keys and contain no timestamps, so identical
(config, seed) pairs reproduce them byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import data as sumods
from .agent import load_actor
from .archive import save_npz
from .config import RunConfig, load_config
from .dynamics import GaussianEnsemble, train_ensemble
from .envs import PointMass2D, behavior_policy, generate_dataset, restrict_region
from .errors import ConfigError, SumoError
from .estimators import EnsembleEstimator, SumoConfig, SumoEstimator
from .eval import ProbeResult, estimator_comparison, ood_probe, train_probe_policy
from .knn import Metric, SearchVectorMode
from .pipelines import Variant, run_pipeline

log = logging.getLogger("sumorl")

ESTIMATOR_NAMES = ("sumo", *EnsembleEstimator.kinds)
SWEEPS = {"k": int, "mode": SearchVectorMode, "metric": Metric}


def _dumps(record):
    return json.dumps(record, sort_keys=True, default=_json_default)


def _json_default(obj):
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    if hasattr(obj, "value"):
        return obj.value
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _write_jsonl(path, records):
    text = "".join(_dumps(r) + "\n" for r in records)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _resolve_config(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    data_over = {k: v for k, v in (("policy", getattr(args, "policy", None)),
                                   ("episodes", getattr(args, "episodes", None)),
                                   ("region", getattr(args, "region", None))) if v is not None}
    if data_over:
        cfg = dataclasses.replace(cfg, data=dataclasses.replace(cfg.data, **data_over))
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "env", None) is not None:
        cfg = dataclasses.replace(cfg, env=args.env)
    return cfg


def _seeds(seed):
    """Independent integer seeds for data, model, policy and probe stages."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(4)]


def _dataset(cfg, args):
    if getattr(args, "dataset", None):
        ds = sumods.load(args.dataset)
        source = {"path": str(args.dataset)}
    else:
        ds, _ = generate_dataset(cfg.data.policy, cfg.data.episodes, _seeds(cfg.seed)[0])
        source = {"generated": dataclasses.asdict(cfg.data)}
    ds = restrict_region(ds, cfg.data.region)
    if len(ds) == 0:
        raise ConfigError("dataset is empty after region restriction")
    return ds, source


def _ensemble(cfg, args, dataset):
    if getattr(args, "model", None):
        return GaussianEnsemble.load(args.model)
    return train_ensemble(dataset, cfg.ensemble, seed=_seeds(cfg.seed)[1],
                          r_max=PointMass2D.r_max)


def _header(command, cfg, **extra):
    return {"type": "header", "command": command, "config": cfg.to_dict(), "seed": cfg.seed,
            **extra}


def cmd_gen_data(args):
    cfg = _resolve_config(args)
    ds, returns = generate_dataset(cfg.data.policy, cfg.data.episodes, _seeds(cfg.seed)[0])
    ds = restrict_region(ds, cfg.data.region)
    out = Path(args.out)
    sumods.save(ds, out)
    meta = {"config": cfg.to_dict(), "seed": cfg.seed, "dataset_id": sumods.fingerprint(ds),
            "n": len(ds), "behavior_return_mean": float(np.mean(returns)),
            "behavior_return_std": float(np.std(returns))}
    Path(str(out) + ".meta.json").write_text(_dumps(meta) + "\n")
    log.info("wrote %d transitions to %s", len(ds), out)
    return 0


def cmd_train_dynamics(args):
    cfg = _resolve_config(args)
    ds, source = _dataset(cfg, args)
    ens = train_ensemble(ds, cfg.ensemble, seed=_seeds(cfg.seed)[1], r_max=PointMass2D.r_max)
    ens.train_log = {**ens.train_log, "provenance": {"config": cfg.to_dict(), "seed": cfg.seed,
                                                     "dataset_id": sumods.fingerprint(ds),
                                                     "source": source}}
    ens.save(args.out)
    return 0


def _run(args, variant):
    cfg = _resolve_config(args)
    pcfg = cfg.pipeline_config(variant)
    ds, source = _dataset(cfg, args)
    ensemble = GaussianEnsemble.load(args.model) if args.model else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "run.jsonl", "w") as fh:
        fh.write(_dumps(_header(f"run-{variant}", cfg, dataset_id=sumods.fingerprint(ds),
                                source=source)) + "\n")
        res = run_pipeline(pcfg, ds, ensemble=ensemble, log_fh=fh)
        fh.write(_dumps({"type": "audit", **res.audit}) + "\n")
    res.agent.save(out / "policy.npz")
    return 0


def _probe(cfg, args, dataset, ensemble):
    _, _, policy_seed, probe_seed = _seeds(cfg.seed)
    pc = cfg.probe
    if pc.policy == "sac":
        policy = train_probe_policy(ensemble, dataset, pc.policy_steps, seed=policy_seed,
                                    agent_config=cfg.agent)
    elif getattr(args, "policy_file", None):
        policy = load_actor(args.policy_file)
    else:
        policy = behavior_policy(pc.policy)
    return ood_probe(ensemble, policy, PointMass2D(), dataset, pc,
                     np.random.default_rng(probe_seed))


def _save_probe(path, probe, header):
    arrays = {f.name: getattr(probe, f.name) for f in dataclasses.fields(ProbeResult)}
    save_npz(path, meta=np.array(_dumps(header)), **arrays)


def _load_probe(path):
    with np.load(path) as z:
        return ProbeResult(**{f.name: z[f.name] for f in dataclasses.fields(ProbeResult)})


def cmd_probe(args):
    cfg = _resolve_config(args)
    ds, source = _dataset(cfg, args)
    ens = _ensemble(cfg, args, ds)
    probe = _probe(cfg, args, ds, ens)
    _save_probe(args.out, probe, _header("probe", cfg, dataset_id=sumods.fingerprint(ds),
                                         source=source))
    return 0


def _estimators(names, cfg, dataset, ensemble):
    built = []
    for name in names:
        if name == "sumo":
            built.append((name, SumoEstimator(dataset, cfg.sumo)))
        else:
            built.append((name, EnsembleEstimator(ensemble, name)))
    return built


def _parse_estimators(text):
    names = [n.strip() for n in text.split(",") if n.strip()]
    bad = [n for n in names if n not in ESTIMATOR_NAMES]
    if bad or not names:
        raise ConfigError(f"unknown estimators {bad}; choose from {list(ESTIMATOR_NAMES)}")
    return names


def _probe_inputs(cfg, args):
    ds, source = _dataset(cfg, args)
    ens = _ensemble(cfg, args, ds)
    probe = _load_probe(args.probe) if args.probe else _probe(cfg, args, ds, ens)
    return ds, source, ens, probe


def cmd_eval_correlation(args):
    cfg = _resolve_config(args)
    names = _parse_estimators(args.estimators)
    ds, source, ens, probe = _probe_inputs(cfg, args)
    dataset_id = sumods.fingerprint(ds)
    reports = estimator_comparison(probe, _estimators(names, cfg, ds, ens), seed=cfg.seed,
                                   dataset_id=dataset_id, probe_config=cfg.probe)
    records = [_header("eval-correlation", cfg, dataset_id=dataset_id, source=source)]
    records += [{"type": "report", **r.to_record()} for r in reports]
    _write_jsonl(args.out, records)
    return 0


def _sweep_values(sweep, text):
    cast = SWEEPS[sweep]
    try:
        return [cast(v.strip()) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --values for sweep {sweep!r}: {exc}") from None


def cmd_ablate(args):
    cfg = _resolve_config(args)
    values = _sweep_values(args.sweep, args.values)
    if not values:
        raise ConfigError("--values is empty")
    configs = []
    for v in values:
        try:
            configs.append(dataclasses.replace(cfg.sumo, **{args.sweep: v}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
    ds, source = _dataset(cfg, args)
    dataset_id = sumods.fingerprint(ds)
    records = [_header("ablate", cfg, dataset_id=dataset_id, source=source, sweep=args.sweep,
                       target=args.target)]
    if args.target == "correlation":
        ens = _ensemble(cfg, args, ds)
        probe = _load_probe(args.probe) if args.probe else _probe(cfg, args, ds, ens)
        for v, sc in zip(values, configs):
            (rep,) = estimator_comparison(probe, [("sumo", SumoEstimator(ds, sc))], seed=cfg.seed,
                                          dataset_id=dataset_id, probe_config=cfg.probe)
            records.append({"type": "report", "sweep": args.sweep, "value": v, **rep.to_record()})
    else:
        ens = GaussianEnsemble.load(args.model) if args.model else None
        for v, sc in zip(values, configs):
            pcfg = dataclasses.replace(cfg.pipeline_config(args.variant), sumo=sc)
            res = run_pipeline(pcfg, ds, ensemble=ens)
            ens = res.ensemble
            final = res.log[-1] if len(res.log) > 1 else {}
            records.append({"type": "report", "sweep": args.sweep, "value": v,
                            "variant": args.variant, "sumo": sc.to_dict(), "seed": cfg.seed,
                            "dataset_id": dataset_id,
                            "final_return_mean": final.get("eval_return_mean"),
                            "gradient_steps": res.agent.updates, "audit": res.audit})
    _write_jsonl(args.out, records)
    return 0


def _common(p, dataset=True, model=False):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    if dataset:
        p.add_argument("--dataset", help="sumods v1 file; generated from the config if omitted")
        p.add_argument("--region", choices=["all", "left"], help="restrict transitions to a region")
    if model:
        p.add_argument("--model", help="trained ensemble (.npz); trained from scratch if omitted")


def build_parser():
    parser = argparse.ArgumentParser(prog="sumorl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write an offline dataset")
    _common(p, dataset=False)
    p.add_argument("--env", choices=["pointmass"])
    p.add_argument("--policy", choices=["random", "medium", "expert"])
    p.add_argument("--episodes", type=int)
    p.add_argument("--region", choices=["all", "left"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-dynamics", help="fit the Gaussian ensemble")
    _common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_dynamics)

    for variant in Variant:
        p = sub.add_parser(f"run-{variant.value}", help=f"train a policy with {variant.value}+SUMO")
        _common(p, model=True)
        p.add_argument("--out", required=True, help="output directory")
        p.set_defaults(func=lambda a, v=variant: _run(a, v))

    p = sub.add_parser("probe", help="roll the probe policy through the model")
    _common(p, model=True)
    p.add_argument("--policy-file", help="actor (.npz) used when the probe policy is not 'sac'")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("eval-correlation", help="correlate estimators with true model error")
    _common(p, model=True)
    p.add_argument("--estimators", default="sumo,loo-kl")
    p.add_argument("--probe", help="probe file from the probe subcommand")
    p.add_argument("--policy-file")
    p.add_argument("--out", help="report file (stdout if omitted)")
    p.set_defaults(func=cmd_eval_correlation)

    p = sub.add_parser("ablate", help="sweep one SUMO setting")
    _common(p, model=True)
    p.add_argument("--sweep", choices=list(SWEEPS), required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--target", choices=["correlation", "pipeline"], default="correlation")
    p.add_argument("--variant", choices=[v.value for v in Variant], default="mopo")
    p.add_argument("--probe")
    p.add_argument("--policy-file")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ablate)
    return parser


def _configure_logging():
    level = os.environ.get("SUMORL_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging()
    try:
        return args.func(args)
    except (SumoError, ValueError, OSError) as exc:
        print(f"sumorl {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
