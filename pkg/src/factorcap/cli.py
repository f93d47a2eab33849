"""Command-line pipeline: gen-data, train, decode, eval, compare, repro.

Every subcommand reads an optional JSON config file; explicit flags override
config-file values, and the fully resolved configuration is echoed into the
output artifacts for provenance.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__
from .corpus import (
    CorpusSpec,
    SchemaError,
    generate_dataset,
    load_templates,
    read_jsonl,
    write_jsonl,
)
from .decoding import DecodeConfig, Strategy, decode_corpus, read_decode_jsonl, write_decode_jsonl
from .factors import FactorLexicon, default_lexicon
from .metrics import (
    FactorSource,
    bleu4,
    bootstrap_compare,
    bootstrap_compare_corpus,
    caption_part,
    distinct_n,
    evaluate,
    load_report,
)
from .model import (
    ModelConfig,
    TargetMode,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .repro import ReproConfig, run_repro
from .text import tokenize

EXIT_IO = 3
EXIT_SCHEMA = 4


class IoFailure(click.ClickException):
    exit_code = EXIT_IO


class SchemaFailure(click.ClickException):
    exit_code = EXIT_SCHEMA


def _guard(fn, *args, **kwargs):
    """Map I/O and schema errors to their dedicated exit codes."""
    try:
        return fn(*args, **kwargs)
    except SchemaError as exc:
        raise SchemaFailure(str(exc)) from exc
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        config = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise SchemaFailure(f"config file {path}: {exc}") from exc
    if not isinstance(config, dict):
        raise SchemaFailure(f"config file {path}: top level must be an object")
    return config


def _resolve(flag_value, config: dict, section: str, key: str, default):
    """Flag > config-file value > built-in default."""
    if flag_value is not None:
        return flag_value
    return config.get(section, {}).get(key, default)


@click.group()
@click.version_option(version=__version__)
def main():
    """Factor-conditioned captioning lab: data, training, decoding, evaluation."""


@main.command("gen-data")
@click.option("--config", "config_path", type=click.Path(), default=None, help="JSON config file.")
@click.option("--out", "out_dir", type=click.Path(), required=True, help="Output directory.")
@click.option("--train", "n_train", type=int, default=None)
@click.option("--dev", "n_dev", type=int, default=None)
@click.option("--test", "n_test", type=int, default=None)
@click.option("--noise", type=float, default=None, help="Std of the condition-vector noise.")
@click.option("--dim", type=int, default=None, help="Condition vector dimension.")
@click.option("--seed", type=int, default=None)
@click.option("--templates", "templates_path", type=click.Path(), default=None,
              help="Caption template file (default: shipped templates).")
def cmd_gen_data(config_path, out_dir, n_train, n_dev, n_test, noise, dim, seed, templates_path):
    """Generate train/dev/test JSONL splits of the synthetic corpus."""
    config = _load_config_file(config_path)
    resolved = {
        "n_train": _resolve(n_train, config, "corpus", "n_train", 2000),
        "n_dev": _resolve(n_dev, config, "corpus", "n_dev", 200),
        "n_test": _resolve(n_test, config, "corpus", "n_test", 200),
        "noise_sigma": _resolve(noise, config, "corpus", "noise_sigma", 0.5),
        "dim": _resolve(dim, config, "corpus", "dim", 16),
        "seed": _resolve(seed, config, "corpus", "seed", 0),
    }
    for name in ("n_train", "n_dev", "n_test"):
        if resolved[name] < 1:
            raise click.UsageError(f"--{name.replace('n_', '')} must be >= 1")
    templates_path = _resolve(templates_path, config, "corpus", "templates", None)
    kwargs = dict(resolved)
    if templates_path is not None:
        kwargs["templates"] = _guard(load_templates, templates_path)
    dataset = _guard(generate_dataset, CorpusSpec(**kwargs))

    out = Path(out_dir)
    _guard(out.mkdir, parents=True, exist_ok=True)
    for split in ("train", "dev", "test"):
        _guard(write_jsonl, out / f"{split}.jsonl", dataset.split(split))
    provenance = {"command": "gen-data", "corpus": {**resolved, "templates": templates_path}}
    _guard((out / "dataset_config.json").write_text, json.dumps(provenance, indent=2), encoding="utf-8")
    click.echo(f"wrote {out / 'train.jsonl'}, dev.jsonl, test.jsonl")


def _read_split(data_dir: str, split: str):
    path = Path(data_dir) / f"{split}.jsonl"
    return _guard(read_jsonl, path)


@main.command("train")
@click.option("--config", "config_path", type=click.Path(), default=None, help="JSON config file.")
@click.option("--data", "data_dir", type=click.Path(), required=True,
              help="Directory with train.jsonl and dev.jsonl.")
@click.option("--target", type=click.Choice([m.value for m in TargetMode]), default=None,
              help="Training target: plain captions or factor-phrase targets.")
@click.option("--out", "out_path", type=click.Path(), required=True, help="Checkpoint file.")
@click.option("--lr", type=float, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--max-epochs", type=int, default=None)
@click.option("--patience", type=int, default=None)
@click.option("--weight-decay", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--context-len", type=int, default=None)
@click.option("--embed-dim", type=int, default=None)
@click.option("--hidden-dim", type=int, default=None)
@click.option("--lexicon", "lexicon_path", type=click.Path(), default=None,
              help="Factor lexicon for predicted-factor targets.")
def cmd_train(config_path, data_dir, target, out_path, lr, batch_size, max_epochs, patience,
              weight_decay, seed, context_len, embed_dim, hidden_dim, lexicon_path):
    """Train the conditional LM and write the best-dev checkpoint."""
    config = _load_config_file(config_path)
    target = _resolve(target, config, "train", "target", TargetMode.CAPTION.value)
    train_config = TrainConfig(
        learning_rate=_resolve(lr, config, "train", "learning_rate", 1e-4),
        batch_size=_resolve(batch_size, config, "train", "batch_size", 16),
        max_epochs=_resolve(max_epochs, config, "train", "max_epochs", 50),
        patience=_resolve(patience, config, "train", "patience", 5),
        weight_decay=_resolve(weight_decay, config, "train", "weight_decay", 0.01),
        seed=_resolve(seed, config, "train", "seed", 0),
    )
    train_split = _read_split(data_dir, "train")
    dev_split = _read_split(data_dir, "dev")
    if not train_split:
        raise SchemaFailure(f"{data_dir}/train.jsonl is empty")
    dim = len(train_split[0].style_vector)
    model_config = ModelConfig(
        context_len=_resolve(context_len, config, "model", "context_len", 4),
        embed_dim=_resolve(embed_dim, config, "model", "embed_dim", 16),
        hidden_dim=_resolve(hidden_dim, config, "model", "hidden_dim", 64),
        cond_dim=dim,
    )
    lexicon_path = _resolve(lexicon_path, config, "train", "lexicon", None)
    lexicon = _guard(FactorLexicon.from_file, lexicon_path) if lexicon_path else None

    from .corpus import Dataset

    dataset = Dataset(
        train=train_split,
        dev=dev_split,
        test=[],
        spec=CorpusSpec(n_train=len(train_split), n_dev=len(dev_split), n_test=0, dim=dim),
    )
    result = train(dataset, TargetMode(target), train_config, model_config, lexicon)
    provenance = {
        "command": "train",
        "data": str(data_dir),
        "target": target,
        "train": train_config.as_dict(),
        "model": model_config.as_dict(),
        "best_epoch": result.best_epoch,
        "best_dev_loss": result.best_dev_loss,
        "gender_fallbacks": result.gender_fallbacks,
    }
    _guard(save_checkpoint, result.model, out_path, extra=provenance)
    log_path = Path(str(out_path) + ".log.jsonl")
    _guard(
        log_path.write_text,
        "".join(json.dumps(entry) + "\n" for entry in result.log),
        encoding="utf-8",
    )
    click.echo(
        f"trained {target} model: best epoch {result.best_epoch} "
        f"(dev loss {result.best_dev_loss:.4f}); checkpoint {out_path}, log {log_path}"
    )


@main.command("decode")
@click.option("--config", "config_path", type=click.Path(), default=None, help="JSON config file.")
@click.option("--checkpoint", type=click.Path(), required=True)
@click.option("--data", "data_path", type=click.Path(), required=True, help="JSONL split to decode.")
@click.option("--out", "out_path", type=click.Path(), required=True, help="Hypothesis JSONL file.")
@click.option("--strategy", type=click.Choice([s.value for s in Strategy]), default=None)
@click.option("--top-p", type=float, default=None)
@click.option("--top-k", type=int, default=None)
@click.option("--max-len", type=int, default=None)
@click.option("--seed", type=int, default=None)
def cmd_decode(config_path, checkpoint, data_path, out_path, strategy, top_p, top_k, max_len, seed):
    """Decode a split with one strategy and write hypothesis JSONL."""
    config = _load_config_file(config_path)
    decode_config = DecodeConfig(
        strategy=Strategy(_resolve(strategy, config, "decode", "strategy", "greedy")),
        top_p=_resolve(top_p, config, "decode", "top_p", 0.9),
        top_k=_resolve(top_k, config, "decode", "top_k", 40),
        max_len=_resolve(max_len, config, "decode", "max_len", 64),
        seed=_resolve(seed, config, "decode", "seed", 0),
    )
    model, _ = _guard(load_checkpoint, checkpoint)
    examples = _guard(read_jsonl, data_path)
    rows = decode_corpus(model, examples, decode_config)
    _guard(write_decode_jsonl, out_path, rows)
    meta = {
        "command": "decode",
        "checkpoint": str(checkpoint),
        "data": str(data_path),
        "decode": decode_config.as_dict(),
    }
    _guard(
        Path(str(out_path) + ".meta.json").write_text, json.dumps(meta, indent=2), encoding="utf-8"
    )
    click.echo(f"decoded {len(rows)} examples -> {out_path}")


@main.command("eval")
@click.option("--config", "config_path", type=click.Path(), default=None, help="JSON config file.")
@click.option("--hyp", "hyp_path", type=click.Path(), required=True, help="Hypothesis JSONL.")
@click.option("--ref", "ref_path", type=click.Path(), required=True, help="Reference dataset JSONL.")
@click.option("--out", "out_path", type=click.Path(), required=True, help="Report JSON file.")
@click.option("--factor-source", type=click.Choice([s.value for s in FactorSource]), default=None,
              help="phrase: parse the factor-phrase prefix; caption: lexicon extraction.")
def cmd_eval(config_path, hyp_path, ref_path, out_path, factor_source):
    """Score a hypothesis file against references and write an EvalReport JSON."""
    config = _load_config_file(config_path)
    source = FactorSource(_resolve(factor_source, config, "eval", "factor_source", "caption"))
    hyp_rows = _guard(read_decode_jsonl, hyp_path)
    references = _guard(read_jsonl, ref_path)
    report = evaluate(hyp_rows, references, factor_source=source)
    payload = report.as_dict()
    payload["provenance"] = {
        "command": "eval",
        "hyp": str(hyp_path),
        "ref": str(ref_path),
        "factor_source": source.value,
    }
    _guard(Path(out_path).write_text, json.dumps(payload, indent=2), encoding="utf-8")
    click.echo(
        f"bleu4={report.bleu4:.3f} rouge_l={report.rouge_l:.3f} "
        f"meteor_lite={report.meteor_lite:.3f} distinct1={report.distinct1:.3f} "
        f"distinct2={report.distinct2:.3f} factor_avg={report.factors.avg:.1f}"
    )


_PER_EXAMPLE_METRICS = ("rouge_l", "meteor_lite", "factor_avg", "gender", "pitch", "speed", "volume")
_CORPUS_METRICS = ("bleu4", "distinct_1", "distinct_2")


def _per_example_scores(report: dict, metric: str) -> list[float]:
    rows = report["per_example"]
    if metric == "factor_avg":
        return [(r["gender"] + r["pitch"] + r["speed"] + r["volume"]) / 4.0 for r in rows]
    return [float(r[metric]) for r in rows]


@main.command("compare")
@click.option("--report-a", type=click.Path(), default=None, help="EvalReport JSON for system A.")
@click.option("--report-b", type=click.Path(), default=None, help="EvalReport JSON for system B.")
@click.option("--hyp-a", type=click.Path(), default=None, help="Hypothesis JSONL for system A.")
@click.option("--hyp-b", type=click.Path(), default=None, help="Hypothesis JSONL for system B.")
@click.option("--ref", "ref_path", type=click.Path(), default=None, help="Reference dataset JSONL.")
@click.option("--metric", required=True,
              type=click.Choice(_PER_EXAMPLE_METRICS + _CORPUS_METRICS))
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--n", "n_resamples", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def cmd_compare(report_a, report_b, hyp_a, hyp_b, ref_path, metric, out_path, n_resamples, seed):
    """Paired bootstrap test that system A beats system B on one metric.

    Per-example metrics compare two eval reports (--report-a/--report-b);
    corpus-level metrics recompute from hypothesis files (--hyp-a/--hyp-b,
    bleu4 additionally needs --ref).
    """
    if metric in _PER_EXAMPLE_METRICS:
        if not (report_a and report_b):
            raise click.UsageError(f"metric {metric} needs --report-a and --report-b")
        a = _guard(load_report, report_a)
        b = _guard(load_report, report_b)
        result = bootstrap_compare(
            _per_example_scores(a, metric), _per_example_scores(b, metric), n_resamples, seed
        )
        inputs = {"a": str(report_a), "b": str(report_b)}
    else:
        if not (hyp_a and hyp_b):
            raise click.UsageError(f"metric {metric} needs --hyp-a and --hyp-b")
        rows_a = _guard(read_decode_jsonl, hyp_a)
        rows_b = _guard(read_decode_jsonl, hyp_b)
        tokens_a = [tokenize(caption_part(r["text"])) for r in rows_a]
        tokens_b = [tokenize(caption_part(r["text"])) for r in rows_b]
        if metric == "bleu4":
            if not ref_path:
                raise click.UsageError("metric bleu4 needs --ref")
            refs = [tokenize(e.caption) for e in _guard(read_jsonl, ref_path)]
            result = bootstrap_compare_corpus(
                list(zip(tokens_a, refs)),
                list(zip(tokens_b, refs)),
                lambda pairs: bleu4([h for h, _ in pairs], [r for _, r in pairs]),
                n_resamples,
                seed,
            )
        else:
            n = int(metric.rsplit("_", 1)[1])
            result = bootstrap_compare_corpus(
                tokens_a, tokens_b, lambda items: distinct_n(items, n), n_resamples, seed
            )
        inputs = {"a": str(hyp_a), "b": str(hyp_b), "ref": str(ref_path)}
    payload = {
        "metric": metric,
        "mean_a": result.mean_a,
        "mean_b": result.mean_b,
        "p_value": result.p_value,
        "significant_at_0.05": result.p_value < 0.05,
        "provenance": {"command": "compare", "n_resamples": n_resamples, "seed": seed, **inputs},
    }
    _guard(Path(out_path).write_text, json.dumps(payload, indent=2), encoding="utf-8")
    click.echo(
        f"{metric}: mean_a={result.mean_a:.4f} mean_b={result.mean_b:.4f} p={result.p_value:.3f}"
    )


@main.command("repro")
@click.option("--config", "config_path", type=click.Path(), default=None, help="JSON config file.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seeds", default=None, help="Comma-separated pipeline seeds (default 0,1,2).")
@click.option("--train-size", type=int, default=None)
@click.option("--dev-size", type=int, default=None)
@click.option("--test-size", type=int, default=None)
@click.option("--noise", type=float, default=None)
@click.option("--max-epochs", type=int, default=None)
@click.option("--patience", type=int, default=None)
@click.option("--n", "n_resamples", type=int, default=None, help="Bootstrap resamples.")
def cmd_repro(config_path, out_dir, seeds, train_size, dev_size, test_size, noise, max_epochs,
              patience, n_resamples):
    """Run the full experimental matrix and write repro_report.md + repro_summary.json."""
    config = _load_config_file(config_path)
    seeds = _resolve(seeds, config, "repro", "seeds", "0,1,2")
    if isinstance(seeds, str):
        seed_tuple = tuple(int(s) for s in seeds.split(",") if s.strip())
    else:
        seed_tuple = tuple(int(s) for s in seeds)
    if not seed_tuple:
        raise click.UsageError("--seeds must name at least one seed")
    max_epochs = _resolve(max_epochs, config, "repro", "max_epochs", 50)
    train_config = TrainConfig(
        max_epochs=max_epochs,
        patience=min(_resolve(patience, config, "repro", "patience", 5), max_epochs),
    )
    repro_config = ReproConfig(
        seeds=seed_tuple,
        n_train=_resolve(train_size, config, "repro", "n_train", 2000),
        n_dev=_resolve(dev_size, config, "repro", "n_dev", 200),
        n_test=_resolve(test_size, config, "repro", "n_test", 200),
        noise_sigma=_resolve(noise, config, "repro", "noise_sigma", 0.5),
        n_resamples=_resolve(n_resamples, config, "repro", "n_resamples", 1000),
        train=train_config,
    )
    summary = run_repro(repro_config, out_dir)
    for name, overall in summary["checks_overall"].items():
        click.echo(
            f"check {name}: {overall['passed_seeds']}/{overall['total_seeds']} seeds "
            f"-> {'PASS' if overall['pass'] else 'FAIL'}"
        )
    click.echo(f"overall: {'PASS' if summary['pass'] else 'FAIL'} "
               f"({summary['wall_seconds']} s); report in {out_dir}")
    if not summary["pass"]:
        sys.exit(1)


if __name__ == "__main__":
    main()
