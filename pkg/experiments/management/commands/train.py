"""
manage.py train: entrena las dos torres sobre la partición train y guarda el
checkpoint. La traza de pérdida sale como TSV (step, loss) cada log_every pasos
en stdout o en --log-file. Con --checkpoint continúa un entrenamiento previo.
"""
from dataclasses import replace
from pathlib import Path

from experiments.management.base import GroundingCommand
from experiments.services import load_benchmark, train_model
from training.checkpoints import load_checkpoint, save_checkpoint


class Command(GroundingCommand):
    help = "Entrena el modelo y escribe un checkpoint."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--data", metavar="DIR", help="Benchmark (por defecto paths.data).")
        parser.add_argument("--out", metavar="PATH", help="Checkpoint de salida.")
        parser.add_argument("--checkpoint", metavar="PATH", help="Checkpoint desde el cual continuar.")
        parser.add_argument("--steps", type=int, metavar="N", help="Pasos a ejecutar.")
        parser.add_argument("--log-file", metavar="PATH", help="Destino de la traza TSV.")

    def overrides(self, options):
        return {"train": {"steps": options["steps"]}} if options.get("steps") else {}

    def run(self, run_config, **options):
        benchmark = load_benchmark(options.get("data") or run_config.paths["data"])
        out = Path(options.get("out") or run_config.paths["checkpoints"] / "model.gckpt")

        resume = None
        config, query_schema, entry_schema = run_config.train, run_config.query_schema, run_config.entry_schema
        if options.get("checkpoint"):
            resume = load_checkpoint(options["checkpoint"])
            # la arquitectura y los esquemas vienen del checkpoint
            config = replace(resume.config, steps=config.steps, log_every=config.log_every)
            query_schema, entry_schema = resume.query_schema, resume.entry_schema

        log_file = open(options["log_file"], "w", encoding="utf-8") if options.get("log_file") else None
        sink = log_file or self.stdout
        try:
            sink.write("step\tloss\n")

            def on_step(step: int, loss: float) -> None:
                if step % config.log_every == 0:
                    sink.write(f"{step}\t{loss:.6f}\n")

            checkpoint = train_model(
                run_config, benchmark, train_config=config, query_schema=query_schema,
                entry_schema=entry_schema, resume=resume, on_step=on_step,
            )
        finally:
            if log_file is not None:
                log_file.close()
        save_checkpoint(checkpoint, out)
        self.stderr.write(f"Checkpoint en {out} (paso {checkpoint.step}).")
