# experiments/models.py
"""
Modelos de la app 'experiments'.

Propósito:
    Persistir los reportes de los comandos (eval, grid, ablate_fields,
    sweep_noise) cuando se ejecutan con --record, para consultarlos desde el
    admin y el panel.

Responsabilidades:
    - ExperimentRun: cabecera (tipo, etiqueta, configuración efectiva, resumen).
    - ExperimentRow: filas del reporte (una combinación, un conjunto de campos
      o una tasa de ruido) con su exactitud.

Invariantes (validators + constraints):
    - accuracy ∈ [0, 1] o nula (fila fallida).
    - stddev ≥ 0 o nula.
    - (run, position) único.
"""
from django.core.validators import MaxValueValidator, MinValueValidator
from django.db import models
from django.utils import timezone


class ExperimentRun(models.Model):
    class Kind(models.TextChoices):
        EVAL = "eval", "Evaluación"
        GRID = "grid", "Grilla de módulos"
        ABLATION = "ablation", "Campos válidos"
        NOISE_SWEEP = "noise_sweep", "Barrido de ruido"

    kind = models.CharField(max_length=20, choices=Kind.choices)
    label = models.CharField(max_length=200, blank=True)
    created_at = models.DateTimeField(default=timezone.now)
    config = models.JSONField(default=dict, blank=True)
    summary = models.JSONField(default=dict, blank=True)

    class Meta:
        ordering = ['-created_at', '-id']
        indexes = [
            models.Index(fields=['kind'], name='experiment_run_kind_idx'),
            models.Index(fields=['created_at'], name='experiment_run_created_idx'),
        ]

    def __str__(self):
        return f"{self.get_kind_display()} #{self.pk} {self.label}".strip()


class ExperimentRow(models.Model):
    """
    Fila de un reporte.

    Campos:
        position (int): orden dentro del reporte.
        label    (str): combinación ("attentive/nsd/multi/multi"), campos o tasa.
        variant / sim / sep / mask: ejes de la grilla (vacíos en otros reportes).
        accuracy (float | None): exactitud top-1 media; None si la fila falló.
        stddev   (float | None): desvío estándar entre semillas.
        runs     (int): corridas exitosas agregadas.
        failed   (bool): alguna corrida falló.
        extra    (dict): métricas adicionales (top-k, MRR, ruta de checkpoint...).
    """
    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name='rows')
    position = models.PositiveIntegerField()
    label = models.CharField(max_length=200)
    variant = models.CharField(max_length=20, blank=True)
    sim = models.CharField(max_length=20, blank=True)
    sep = models.CharField(max_length=20, blank=True)
    mask = models.CharField(max_length=20, blank=True)
    accuracy = models.FloatField(null=True, blank=True,
                                 validators=[MinValueValidator(0.0), MaxValueValidator(1.0)])
    stddev = models.FloatField(null=True, blank=True, validators=[MinValueValidator(0.0)])
    runs = models.PositiveIntegerField(default=0)
    failed = models.BooleanField(default=False)
    extra = models.JSONField(default=dict, blank=True)

    class Meta:
        ordering = ['run', 'position']
        constraints = [
            models.UniqueConstraint(fields=['run', 'position'], name='experiment_row_position_uniq'),
            models.CheckConstraint(
                condition=models.Q(accuracy__isnull=True) | models.Q(accuracy__gte=0, accuracy__lte=1),
                name='experiment_row_accuracy_0_1',
            ),
            models.CheckConstraint(
                condition=models.Q(stddev__isnull=True) | models.Q(stddev__gte=0),
                name='experiment_row_stddev_gte_0',
            ),
        ]

    def __str__(self):
        return f"{self.run_id}:{self.position} {self.label}"
