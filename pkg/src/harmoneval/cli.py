"""Command-line entry point wiring the pipeline together."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import arrange as arrange_mod
from . import leadsheet_io, midi, network, stats, study
from .errors import HarmonevalError
from .simulate import PreferenceModel, simulate_study, synthetic_study_config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="harmoneval",
        description="Harmonize melodies, render study stimuli, run the "
        "listening study, and analyze rankings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the chord predictor on a lead-sheet corpus")
    p.add_argument("--corpus", required=True, help="directory of lead-sheet .json files")
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--chords-per-bar", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--hidden", type=int, nargs="+", default=[64])
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--loss-log", help="write per-epoch 'epoch<TAB>loss' lines here")

    p = sub.add_parser("harmonize", help="predict chords for a melody")
    p.add_argument("--model", required=True)
    p.add_argument("--melody", required=True, help="melody .json or .mid file")
    p.add_argument("--out", required=True, help="output lead-sheet .json")
    p.add_argument("--chords-per-bar", type=int, default=1)

    p = sub.add_parser("arrange", help="render a lead sheet as MIDI")
    p.add_argument("--leadsheet", required=True, help="lead-sheet .json (or melody file for piano)")
    p.add_argument("--modality", required=True, choices=[m.value for m in arrange_mod.Modality])
    p.add_argument("--out", required=True, help="output .mid file")
    p.add_argument("--chart", help="voicing chart .json overriding builtin shapes")
    p.add_argument("--tempo", type=float, default=120.0)
    p.add_argument("--ppq", type=int, default=480)

    p = sub.add_parser("build-stimuli", help="arrange 8 melodies in both modalities")
    p.add_argument(
        "melodies",
        nargs=8,
        metavar="TAG=PATH",
        help="eight melody files tagged by algorithm, e.g. A=mel1.json (4 per tag)",
    )
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="output directory for MIDI files")
    p.add_argument("--manifest", required=True, help="output stimulus manifest .json")
    p.add_argument("--chords-per-bar", type=int, default=1)
    p.add_argument("--chart")
    p.add_argument("--tempo", type=float, default=120.0)
    p.add_argument("--ppq", type=int, default=480)

    p = sub.add_parser("serve", help="run the listening-study HTTP service")
    p.add_argument("--manifest", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--admin-token", required=True)
    p.add_argument("--store", help="append-only response log (.jsonl)")
    p.add_argument("--audio-dir", help="directory served under /audio/")
    p.add_argument("--ui-dir", help="static frontend directory served at /")
    p.add_argument("--min-duration", type=int, default=study.DEFAULT_MIN_DURATION_S)

    p = sub.add_parser("simulate", help="generate synthetic responses")
    p.add_argument("--participants", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output response .csv")
    p.add_argument("--algorithm-effect", type=float, default=PreferenceModel.algorithm_effect)
    p.add_argument(
        "--amplification", type=float, default=PreferenceModel.modality_amplification
    )
    p.add_argument("--noise", type=float, default=PreferenceModel.noise_sd)

    p = sub.add_parser("analyze", help="MWU + CLM/ANOVA + figure tables from a response CSV")
    p.add_argument("responses", help="response .csv (as exported or simulated)")
    p.add_argument("--out", required=True, help="output directory for result tables")

    return parser


def _cmd_train(args) -> int:
    sheets = leadsheet_io.load_corpus(args.corpus)
    dataset = network.build_dataset(sheets, chords_per_bar=args.chords_per_bar)
    config = network.TrainConfig(
        hidden_sizes=tuple(args.hidden),
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
    )
    log_fh = open(args.loss_log, "w", encoding="utf-8") if args.loss_log else sys.stdout
    try:
        model, history = network.train(dataset, config, log_stream=log_fh)
    finally:
        if args.loss_log:
            log_fh.close()
    network.save_model(model, args.out)
    print(
        f"trained on {len(dataset)} windows; final loss {history[-1]:.6f}; "
        f"model written to {args.out}",
        file=sys.stderr,
    )
    return 0


def _cmd_harmonize(args) -> int:
    model = network.load_model(args.model)
    melody = leadsheet_io.load_melody(args.melody)
    sheet = network.harmonize(model, melody, chords_per_bar=args.chords_per_bar)
    leadsheet_io.save_leadsheet(sheet, args.out)
    print(f"{len(sheet.chords)} chords written to {args.out}", file=sys.stderr)
    return 0


def _render(sheet, modality, chart, config):
    if modality == arrange_mod.Modality.PIANO_SOLO.value:
        return midi.write_smf(arrange_mod.arrange_piano(sheet.melody, config))
    return midi.write_smf(arrange_mod.arrange_group(sheet, chart, config))


def _cmd_arrange(args) -> int:
    sheet = leadsheet_io.load_leadsheet(args.leadsheet)
    chart = arrange_mod.load_voicing_chart(args.chart) if args.chart else None
    config = arrange_mod.RenderConfig(tempo=args.tempo, ppq=args.ppq)
    data = _render(sheet, args.modality, chart, config)
    Path(args.out).write_bytes(data)
    print(f"wrote {args.out} ({len(data)} bytes)", file=sys.stderr)
    return 0


def _cmd_build_stimuli(args) -> int:
    pairs = []
    for item in args.melodies:
        tag, _, path = item.partition("=")
        if tag not in study.ALGORITHM_TAGS or not path:
            raise ValueError(f"melody argument must look like A=path or B=path, got {item!r}")
        pairs.append((tag, path))
    for tag in study.ALGORITHM_TAGS:
        count = sum(1 for t, _ in pairs if t == tag)
        if count != 4:
            raise ValueError(f"need exactly 4 melodies tagged {tag}, got {count}")

    model = network.load_model(args.model)
    chart = arrange_mod.load_voicing_chart(args.chart) if args.chart else None
    config = arrange_mod.RenderConfig(tempo=args.tempo, ppq=args.ppq)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    counters = {tag: 0 for tag in study.ALGORITHM_TAGS}
    manifest = []
    for tag, path in pairs:
        counters[tag] += 1
        stimulus_id = f"{tag}{counters[tag]}"
        melody = leadsheet_io.load_melody(path)
        sheet = network.harmonize(model, melody, chords_per_bar=args.chords_per_bar)
        midi_paths = {}
        audio_paths = {}
        for modality in arrange_mod.Modality:
            name = f"{stimulus_id}_{modality.value}"
            data = _render(sheet, modality.value, chart, config)
            midi_path = out_dir / f"{name}.mid"
            midi_path.write_bytes(data)
            midi_paths[modality.value] = str(midi_path)
            audio_paths[modality.value] = str(out_dir / f"{name}.mp3")
        manifest.append(
            {
                "id": stimulus_id,
                "algorithm": tag,
                "midi": midi_paths,
                "audio": audio_paths,
            }
        )
    with open(args.manifest, "w", encoding="utf-8") as fh:
        json.dump({"stimuli": manifest}, fh, indent=2)
        fh.write("\n")
    print(
        f"8 stimuli x 2 modalities written under {out_dir}; manifest at {args.manifest}\n"
        "render the .mid files to audio externally before serving",
        file=sys.stderr,
    )
    return 0


def _audio_url(path: str) -> str:
    if "://" in path or path.startswith("/"):
        return path
    return f"/audio/{Path(path).name}"


def study_config_from_manifest(path: str, min_duration_s: int = study.DEFAULT_MIN_DURATION_S):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    stimuli = tuple(
        study.StimulusSpec(
            id=entry["id"],
            algorithm=entry["algorithm"],
            audio={m: _audio_url(p) for m, p in entry["audio"].items()},
        )
        for entry in doc["stimuli"]
    )
    return study.StudyConfig(stimuli=stimuli, min_duration_s=min_duration_s)


def _cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    config = study_config_from_manifest(args.manifest, min_duration_s=args.min_duration)
    engine = study.StudyEngine(config, log_path=args.store)
    audio_dir = args.audio_dir or str(Path(args.manifest).resolve().parent)
    app = create_app(
        engine, admin_token=args.admin_token, audio_dir=audio_dir, ui_dir=args.ui_dir
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def _cmd_simulate(args) -> int:
    preference = PreferenceModel(
        algorithm_effect=args.algorithm_effect,
        modality_amplification=args.amplification,
        noise_sd=args.noise,
    )
    engine = simulate_study(
        participants=args.participants,
        seed=args.seed,
        preference=preference,
        config=synthetic_study_config(),
    )
    csv_text = study.export_csv(engine)
    Path(args.out).write_text(csv_text, encoding="utf-8")
    rows, _ = engine.export_rows()
    print(f"{len(rows)} rows written to {args.out}", file=sys.stderr)
    return 0


def _format_mwu(result: stats.MwuResult) -> str:
    z = f"{result.z:8.3f}" if result.z is not None else "       -"
    return f"U={result.U:10.1f}  z={z}  p={result.p_two_sided:.6g}  ({result.method})"


def _cmd_analyze(args) -> int:
    table = stats.ObservationTable.from_csv(args.responses)
    if len(table) == 0:
        print("no observations", file=sys.stderr)
        return 1
    analysis = stats.analyze_study(table)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    lines = ["Mann-Whitney U (algorithm A vs B), per modality"]
    with open(out_dir / "mwu.csv", "w", encoding="utf-8") as fh:
        fh.write("modality,U,z,p_two_sided,method,n1,n2\n")
        for modality, result in sorted(analysis.mwu.items()):
            z = "" if result.z is None else f"{result.z:.10g}"
            fh.write(
                f"{modality},{result.U:.10g},{z},{result.p_two_sided:.10g},"
                f"{result.method},{result.n1},{result.n2}\n"
            )
            lines.append(f"  {modality:12s} {_format_mwu(result)}")

    lines.append("")
    lines.append("ANOVA (likelihood-ratio, type II) on ranking ~ algorithm*modality*musician")
    lines.append(f"  {'term':35s} {'df':>3s} {'LR':>10s} {'p':>12s}")
    with open(out_dir / "anova.csv", "w", encoding="utf-8") as fh:
        fh.write("term,df,lr_stat,p_value\n")
        for row in analysis.anova:
            fh.write(f"{row.term},{row.df},{row.lr_stat:.10g},{row.p_value:.10g}\n")
            lines.append(
                f"  {row.term:35s} {row.df:3d} {row.lr_stat:10.4f} {row.p_value:12.6g}"
            )

    with open(out_dir / "rank_counts.csv", "w", encoding="utf-8") as fh:
        fh.write("algorithm,modality,ranking,count\n")
        for (alg, mod), counts in sorted(analysis.rank_counts.items()):
            for ranking, count in enumerate(counts, start=1):
                fh.write(f"{alg},{mod},{ranking},{count}\n")

    with open(out_dir / "rank_probabilities.csv", "w", encoding="utf-8") as fh:
        fh.write("algorithm,modality,ranking,probability\n")
        for (alg, mod), probs in sorted(analysis.probabilities.items()):
            for ranking, prob in enumerate(probs, start=1):
                fh.write(f"{alg},{mod},{ranking},{prob:.10g}\n")

    lines.append("")
    lines.append(f"result tables written under {out_dir}")
    print("\n".join(lines))
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "harmonize": _cmd_harmonize,
    "arrange": _cmd_arrange,
    "build-stimuli": _cmd_build_stimuli,
    "serve": _cmd_serve,
    "simulate": _cmd_simulate,
    "analyze": _cmd_analyze,
}


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (HarmonevalError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
