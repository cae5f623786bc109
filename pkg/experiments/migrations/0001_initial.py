# Generated by Django 5.2.5 on 2026-10-19 10:00

import django.core.validators
import django.db.models.deletion
import django.utils.timezone
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('kind', models.CharField(choices=[('eval', 'Evaluación'), ('grid', 'Grilla de módulos'), ('ablation', 'Campos válidos'), ('noise_sweep', 'Barrido de ruido')], max_length=20)),
                ('label', models.CharField(blank=True, max_length=200)),
                ('created_at', models.DateTimeField(default=django.utils.timezone.now)),
                ('config', models.JSONField(blank=True, default=dict)),
                ('summary', models.JSONField(blank=True, default=dict)),
            ],
            options={
                'ordering': ['-created_at', '-id'],
                'indexes': [models.Index(fields=['kind'], name='experiment_run_kind_idx'), models.Index(fields=['created_at'], name='experiment_run_created_idx')],
            },
        ),
        migrations.CreateModel(
            name='ExperimentRow',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('position', models.PositiveIntegerField()),
                ('label', models.CharField(max_length=200)),
                ('variant', models.CharField(blank=True, max_length=20)),
                ('sim', models.CharField(blank=True, max_length=20)),
                ('sep', models.CharField(blank=True, max_length=20)),
                ('mask', models.CharField(blank=True, max_length=20)),
                ('accuracy', models.FloatField(blank=True, null=True, validators=[django.core.validators.MinValueValidator(0.0), django.core.validators.MaxValueValidator(1.0)])),
                ('stddev', models.FloatField(blank=True, null=True, validators=[django.core.validators.MinValueValidator(0.0)])),
                ('runs', models.PositiveIntegerField(default=0)),
                ('failed', models.BooleanField(default=False)),
                ('extra', models.JSONField(blank=True, default=dict)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='rows', to='experiments.experimentrun')),
            ],
            options={
                'ordering': ['run', 'position'],
                'constraints': [models.UniqueConstraint(fields=('run', 'position'), name='experiment_row_position_uniq'), models.CheckConstraint(condition=models.Q(('accuracy__isnull', True), models.Q(('accuracy__gte', 0), ('accuracy__lte', 1)), _connector='OR'), name='experiment_row_accuracy_0_1'), models.CheckConstraint(condition=models.Q(('stddev__isnull', True), ('stddev__gte', 0), _connector='OR'), name='experiment_row_stddev_gte_0')],
            },
        ),
    ]
