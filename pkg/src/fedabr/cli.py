"""Command-line harness: split, pretrain, run, report."""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

from .config import build_scheme_config, load_config
from .env import QoESummary
from .metrics import (ConvergenceRule, convergence_epoch, efficiency_gain,
                      qoe_report, speedup_percent)
from .net import load_checkpoint, save_checkpoint
from .pretrain import offline_train
from .schemes import Scheme, run_scheme
from .traces import load_manifest, split_corpus


@click.group()
def main():
    """Trace-driven training lab for real-time streaming bitrate adaptation."""


def _load_split(path: Path) -> dict[str, list[str]]:
    with open(path) as f:
        return json.load(f)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def split(config_path, out_path):
    """Split the corpus into pretrain / finetune / test trace sets."""
    cfg = load_config(config_path)
    corpus = load_manifest(cfg.manifest)
    result = split_corpus(corpus, cfg.split_seed)
    data = {"pretrain": sorted(result.pretrain),
            "finetune": sorted(result.finetune),
            "test": sorted(result.test)}
    with open(out_path, "w") as f:
        json.dump(data, f, indent=2)
        f.write("\n")
    click.echo(f"split: {len(data['pretrain'])} pretrain, "
               f"{len(data['finetune'])} finetune, {len(data['test'])} test")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--split", "split_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def pretrain(config_path, split_path, out_path):
    """Pretrain the shared model offline on the pretrain trace set."""
    cfg = load_config(config_path)
    corpus = {t.id: t for t in load_manifest(cfg.manifest)}
    ids = _load_split(Path(split_path))["pretrain"]
    traces = [corpus[i] for i in sorted(ids)]
    params, rewards = offline_train(traces, cfg.pretrain, cfg.env)
    save_checkpoint(params, out_path)
    rewards_csv = Path(out_path).with_suffix(".rewards.csv")
    with open(rewards_csv, "w") as f:
        f.write("epoch,mean_reward\n")
        for i, r in enumerate(rewards, start=1):
            f.write(f"{i},{r!r}\n")
    click.echo(f"pretrained {cfg.pretrain.epochs} epochs -> {out_path}")


@main.command()
@click.option("--scheme", "scheme_name", required=True,
              type=click.Choice([s.value for s in Scheme]))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--split", "split_path", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", "ckpt_path", type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def run(scheme_name, config_path, split_path, ckpt_path, out_dir):
    """Run one training scheme end-to-end and write its CSV outputs."""
    cfg = load_config(config_path)
    corpus = {t.id: t for t in load_manifest(cfg.manifest)}
    split_data = _load_split(Path(split_path))
    scheme = Scheme(scheme_name)
    pretrained = load_checkpoint(ckpt_path) if ckpt_path else None
    if pretrained is None and scheme is not Scheme.ONLINE_SCRATCH:
        raise click.ClickException(f"scheme {scheme.value} requires --checkpoint")
    sc = build_scheme_config(cfg, scheme, split_data["finetune"], split_data["test"])
    metrics = run_scheme(sc, corpus, pretrained, out_dir)
    click.echo(f"{scheme.value}: {len(metrics.rewards)} epochs, "
               f"mean test reward {metrics.mean_test_reward:.4f} "
               f"({metrics.wall_time_s:.1f}s wall)", err=True)


def _read_run_dir(run_dir: Path):
    with open(run_dir / "run_meta.json") as f:
        meta = json.load(f)
    rewards = []
    with open(run_dir / "rewards.csv") as f:
        for row in csv.DictReader(f):
            rewards.append(float(row["mean_reward"]))
    qoe_rows = []
    with open(run_dir / "qoe.csv") as f:
        for row in csv.DictReader(f):
            qoe_rows.append(row)
    n = len(qoe_rows)
    qoe = QoESummary(
        mean_bitrate_kbps=sum(float(r["mean_bitrate_kbps"]) for r in qoe_rows) / n,
        stall_rate=sum(float(r["stall_rate"]) for r in qoe_rows) / n,
        mean_delay_ms=sum(float(r["mean_delay_ms"]) for r in qoe_rows) / n,
    )
    return meta, rewards, qoe


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--anchor", default=Scheme.OFFLINE_ONLY.value,
              help="Scheme whose QoE metrics normalize the others.")
@click.option("--window", default=20, type=int)
@click.option("--epsilon", default=0.05, type=float)
@click.option("--sustain", default=10, type=int)
@click.argument("run_dirs", nargs=-1, required=True,
                type=click.Path(exists=True, file_okay=False))
def report(out_dir, anchor, window, epsilon, sustain, run_dirs):
    """Summarize finished runs: convergence, efficiency, normalized QoE."""
    rule = ConvergenceRule(window, epsilon, sustain)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    runs = {}
    for d in run_dirs:
        d = Path(d)
        meta, rewards, qoe = _read_run_dir(d)
        label = meta["scheme"]
        if label in runs:
            label = f"{label}:{d.name}"
        runs[label] = (meta, rewards, qoe)

    conv: dict[str, int | None] = {}
    with open(out_dir / "convergence.csv", "w") as f:
        f.write("scheme,convergence_epoch,sim_time_s\n")
        for label in sorted(runs):
            meta, rewards, _ = runs[label]
            try:
                epoch = convergence_epoch(rewards, rule)
            except ValueError:
                epoch = None
            conv[label] = epoch
            sim_per_epoch = meta["sim_time_s"] / meta["epochs"]
            sim = "" if epoch is None else repr(epoch * sim_per_epoch)
            f.write(f"{label},{'' if epoch is None else epoch},{sim}\n")

    with open(out_dir / "efficiency.csv", "w") as f:
        f.write("base,new,gain,speedup_percent\n")
        for base in sorted(runs):
            for new in sorted(runs):
                if base == new or conv[base] is None or conv[new] is None:
                    continue
                gain = efficiency_gain(conv[base], conv[new])
                pct = speedup_percent(conv[base], conv[new])
                f.write(f"{base},{new},{gain!r},{pct!r}\n")

    anchor_label = next((lbl for lbl in sorted(runs) if lbl.split(":")[0] == anchor), None)
    if anchor_label is None:
        raise click.ClickException(f"anchor scheme {anchor!r} not among runs")
    summaries = {label: qoe for label, (_, _, qoe) in runs.items()}
    rows = qoe_report(summaries, anchor_label)
    with open(out_dir / "qoe.csv", "w") as f:
        f.write("scheme,mean_bitrate_kbps,stall_rate,mean_delay_ms,flags\n")
        for row in rows:
            flags = ";".join(f"{m}={row[f'{m}_flag']}" for m in
                             ("mean_bitrate_kbps", "stall_rate", "mean_delay_ms")
                             if row[f"{m}_flag"])
            f.write(f"{row['scheme']},{row['mean_bitrate_kbps']!r},"
                    f"{row['stall_rate']!r},{row['mean_delay_ms']!r},{flags}\n")
    click.echo(f"report written to {out_dir}")


if __name__ == "__main__":
    sys.exit(main())
