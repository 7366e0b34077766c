# Generated by Django 5.2.7 on 2026-10-19 09:12

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='VerificationRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('created_at', models.DateTimeField(auto_now_add=True, db_index=True)),
                ('updated_at', models.DateTimeField(auto_now=True, db_index=True)),
                ('run_id', models.CharField(db_index=True, max_length=64)),
                ('command', models.CharField(choices=[('verify', 'Verify'), ('sweep', 'Sweep'), ('c0', 'C0')], default='verify', max_length=16)),
                ('config_path', models.CharField(blank=True, default='', max_length=500)),
                ('config_digest', models.CharField(max_length=64)),
                ('space', models.JSONField(blank=True, default=dict)),
                ('axis', models.CharField(blank=True, default='', max_length=16)),
                ('axis_value', models.FloatField(blank=True, null=True)),
                ('passed', models.BooleanField(default=False)),
                ('exit_code', models.PositiveSmallIntegerField(default=0)),
                ('wall_time', models.FloatField(default=0.0)),
                ('n_checks', models.PositiveIntegerField(default=0)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='CheckOutcome',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('created_at', models.DateTimeField(auto_now_add=True, db_index=True)),
                ('updated_at', models.DateTimeField(auto_now=True, db_index=True)),
                ('name', models.CharField(db_index=True, max_length=64)),
                ('param', models.FloatField(blank=True, null=True)),
                ('measure', models.CharField(blank=True, default='', max_length=100)),
                ('lhs', models.FloatField(blank=True, null=True)),
                ('rhs', models.FloatField(blank=True, null=True)),
                ('margin', models.FloatField(blank=True, null=True)),
                ('tolerance', models.FloatField(default=0.0)),
                ('passed', models.BooleanField(default=False)),
                ('error_estimate', models.FloatField(blank=True, null=True)),
                ('provenance', models.CharField(blank=True, default='', max_length=32)),
                ('error', models.TextField(blank=True, default='')),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='outcomes', to='heatlab.verificationrun')),
            ],
            options={
                'ordering': ['run', 'name', 'param', 'measure'],
            },
        ),
    ]
