from __future__ import annotations
import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from . import __version__
from .config import PipelineConfig, build_config, write_config_echo
from .errors import AnchorError, DataError, RuntimeFailure, UsageError
from .io_corpus import load_corpus
from .logging import log_step

class _Parser(argparse.ArgumentParser):
   """argparse that raises UsageError instead of exiting with status 2."""
   def error(self, message: str):
       raise UsageError(f"{self.prog}: {message}")

def _common(p: argparse.ArgumentParser):
   p.add_argument("--config", dest="config_file", default=None,
                  help="YAML config file (a previous run's config.yaml works too).")
   p.add_argument("--seed", type=int, default=None,
                  help="Global seed (overrides ANCHORPIPE_SEED and --config).")
   p.add_argument("--trace-config", action="store_true",
                  help="Print the config layers that were merged.")
   p.add_argument("--quiet", action="store_true",
                  help="Only errors and the final summary.")

def build_parser() -> argparse.ArgumentParser:
   p = _Parser(prog="anchorpipe", description="Text -> AU+PS -> face frames: data, training, synthesis, evaluation.")
   p.add_argument("--version", action="version", version=f"anchorpipe {__version__}")
   sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

   g = sub.add_parser("gen-data", help="Render a synthetic oracle corpus from a sentence file.")
   g.add_argument("--sentences", required=True, help="Text file, one sentence per line ('#' comments allowed).")
   g.add_argument("--out", required=True, help="Corpus output directory.")
   g.add_argument("--workers", type=int, default=None, help="Render threads (output is identical for any value).")
   _common(g); g.set_defaults(func=cmd_gen_data)

   s = sub.add_parser("train-seq2au", help="Train the text -> AU+PS model.")
   s.add_argument("--corpus", required=True)
   s.add_argument("--out", required=True)
   s.add_argument("--steps", type=int, default=None)
   s.add_argument("--resume", default=None, help="Continue from a seq2au checkpoint.")
   _common(s); s.set_defaults(func=cmd_train_seq2au)

   t = sub.add_parser("train-gan", help="Train the frame generator and discriminator.")
   t.add_argument("--corpus", required=True)
   t.add_argument("--out", required=True)
   t.add_argument("--steps", type=int, default=None)
   t.add_argument("--gt-aups", action="store_true", help="Condition on ground-truth AU+PS (the default without --seq2au).")
   t.add_argument("--seq2au", default=None, help="Condition on this seq2au model's teacher-forced predictions.")
   t.add_argument("--resume", default=None, help="Continue from a GAN checkpoint.")
   _common(t); t.set_defaults(func=cmd_train_gan)

   y = sub.add_parser("synth", help="Synthesize frames for a sentence.")
   y.add_argument("--text", required=True)
   y.add_argument("--seq2au", required=True)
   y.add_argument("--gan", required=True)
   y.add_argument("--out", required=True)
   y.add_argument("--gif", action="store_true", help="Also write an animated GIF.")
   y.add_argument("--fps", type=int, default=None)
   _common(y); y.set_defaults(func=cmd_synth)

   e = sub.add_parser("eval", help="Score full inference against the oracle corpus.")
   e.add_argument("--corpus", required=True)
   e.add_argument("--seq2au", default=None)
   e.add_argument("--gan", default=None)
   e.add_argument("--out", required=True, help="Report path (key=value); siblings get the CSV and md/html.")
   e.add_argument("--gt-aups", action="store_true", help="Debug: use oracle AU+PS instead of seq2au inference.")
   e.add_argument("--gt-frames", action="store_true", help="Debug: use oracle frames instead of the generator.")
   e.add_argument("--report-format", choices=["md", "html", "both"], default=None)
   _common(e); e.set_defaults(func=cmd_eval)

   r = sub.add_parser("runlist", help="Run a YAML list of jobs.")
   r.add_argument("runlist_path", help="YAML with a 'jobs' list of {command, args}.")
   r.add_argument("--quiet", action="store_true")
   r.set_defaults(func=cmd_runlist)
   return p

def _overrides(args, **extra: Any) -> Dict[str, Any]:
   out: Dict[str, Any] = {}
   if getattr(args, "seed", None) is not None: out["seed"] = args.seed
   for key, value in extra.items():
       if value is None: continue
       section, _, name = key.partition("__")
       if name: out.setdefault(section, {})[name] = value
       else: out[section] = value
   return out

def _config(args, **extra: Any) -> PipelineConfig:
   path = Path(args.config_file) if args.config_file else None
   return build_config(path, _overrides(args, **extra), trace=args.trace_config, quiet=args.quiet)

def _echo_args(args) -> Dict[str, Any]:
   # the echo never depends on --out
   skip = {"func", "out", "quiet", "trace_config", "config_file"}
   return {k: v for k, v in sorted(vars(args).items()) if k not in skip and v not in (None, False)}

def _read_sentences(path: Path) -> List[str]:
   if not path.exists():
       raise DataError(f"sentence file not found: {path}", code="E401")
   lines = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines()]
   return [ln for ln in lines if ln and not ln.startswith("#")]

# ---------- commands ----------

def cmd_gen_data(args) -> int:
   from .oracle_corpus import corpus_echo, generate_corpus, render_spec_from_config, viseme_table_from_config
   from .validate import validate_corpus
   cfg = _config(args, corpus__workers=args.workers)
   out = Path(args.out)
   echo = write_config_echo(cfg, out, args.command, _echo_args(args))
   sentences = _read_sentences(Path(args.sentences))
   log_step("Sentences read", True, f"{len(sentences)}", args.quiet)
   manifest = generate_corpus(sentences, viseme_table_from_config(cfg), render_spec_from_config(cfg), out,
                              config_echo=corpus_echo(cfg), workers=cfg.corpus.workers, quiet=args.quiet)
   validate_corpus(out, cfg.corpus.landmark_count)
   frames = sum(s["num_frames"] for s in manifest["samples"])
   print(f"gen-data: samples={len(manifest['samples'])} frames={frames} out={out} config={echo.name}")
   return 0

def _training_corpus(corpus_dir: str, cfg: PipelineConfig, load_frames: bool, quiet: bool):
   from .validate import validate_corpus
   n = validate_corpus(Path(corpus_dir), cfg.corpus.landmark_count)
   log_step("Corpus valid", True, f"{n} samples", quiet)
   return load_corpus(Path(corpus_dir), cfg.corpus.landmark_count, load_frames=load_frames)

def cmd_train_seq2au(args) -> int:
   from .train_eval import train_seq2au
   cfg = _config(args, seq2au__steps=args.steps)
   out = Path(args.out)
   write_config_echo(cfg, out, args.command, _echo_args(args))
   corpus = _training_corpus(args.corpus, cfg, load_frames=False, quiet=args.quiet)
   res = train_seq2au(corpus, cfg, out, resume=Path(args.resume) if args.resume else None, quiet=args.quiet)
   last = res.history[-1] if res.history else {}
   print(f"train-seq2au: steps={res.checkpoint.step} checkpoint={res.path}"
         + "".join(f" {k}={v:.6f}" for k, v in last.items()))
   return 0

def cmd_train_gan(args) -> int:
   from .train_eval import load_seq2au_model, train_gan
   if args.gt_aups and args.seq2au:
       raise UsageError("train-gan takes either --gt-aups or --seq2au, not both", code="E002")
   cfg = _config(args, gan__steps=args.steps)
   out = Path(args.out)
   write_config_echo(cfg, out, args.command, _echo_args(args))
   corpus = _training_corpus(args.corpus, cfg, load_frames=True, quiet=args.quiet)
   seq2au = load_seq2au_model(Path(args.seq2au)) if args.seq2au else None
   res = train_gan(corpus, cfg, out, seq2au=seq2au, resume=Path(args.resume) if args.resume else None,
                   quiet=args.quiet)
   last = res.history[-1] if res.history else {}
   print(f"train-gan: steps={res.checkpoint.step} checkpoint={res.path}"
         + "".join(f" {k}={v:.6f}" for k, v in last.items()))
   return 0

def cmd_synth(args) -> int:
   from .pipeline import run_synthesis
   from .train_eval import load_gan_model, load_seq2au_model
   cfg = _config(args)
   out = Path(args.out)
   write_config_echo(cfg, out, args.command, _echo_args(args))
   seq2au = load_seq2au_model(Path(args.seq2au))
   gan = load_gan_model(Path(args.gan))
   result = run_synthesis(args.text, seq2au, gan, out, gif=args.gif, fps=args.fps or cfg.fps, quiet=args.quiet)
   print(f"synth: frames={len(result.frames)} out={out}")
   return 0

def cmd_eval(args) -> int:
   from .reports import write_eval_outputs
   from .train_eval import evaluate, load_gan_model, load_seq2au_model
   cfg = _config(args)
   report_path = Path(args.out)
   write_config_echo(cfg, report_path.parent, args.command, _echo_args(args),
                     filename=f"{report_path.stem}.config.yaml")
   corpus = _training_corpus(args.corpus, cfg, load_frames=True, quiet=args.quiet)
   seq2au = load_seq2au_model(Path(args.seq2au)) if args.seq2au and not args.gt_aups else None
   gan = load_gan_model(Path(args.gan)) if args.gan and not args.gt_frames else None
   report = evaluate(corpus, seq2au, gan, gt_aups=args.gt_aups, gt_frames=args.gt_frames, quiet=args.quiet)
   header = {"aups": "gt" if args.gt_aups else "seq2au", "frames": "gt" if args.gt_frames else "gan"}
   paths = write_eval_outputs(report, report_path, header, args.report_format, label=report_path.stem)
   log_step("Report written", True, " / ".join(str(p) for p in paths), args.quiet)
   print("eval: " + " ".join(f"{k}={v}" for k, v in _summary(report).items()))
   return 0

def _summary(report) -> Dict[str, str]:
   from .metrics import format_metric
   return {k: format_metric(v) for k, v in report.as_dict().items()}

def cmd_runlist(args) -> int:
   from .runlist import run_from_runlist
   return run_from_runlist(Path(args.runlist_path), run, quiet=args.quiet)

# ---------- entry points ----------

def run(argv: Optional[Sequence[str]] = None) -> int:
   try:
       args = build_parser().parse_args(list(argv) if argv is not None else None)
       return int(args.func(args) or 0)
   except AnchorError as e:
       print(e.one_line(), file=sys.stderr)
       return e.exit_code
   except SystemExit as e:
       # --help / --version
       return int(e.code or 0)
   except Exception as e:
       err = RuntimeFailure(f"{type(e).__name__}: {e}")
       print(err.one_line(), file=sys.stderr)
       return err.exit_code

def main():
   raise SystemExit(run(sys.argv[1:]))

if __name__ == "__main__":
   main()
