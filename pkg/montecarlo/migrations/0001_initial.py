# Generated by Django 5.2.10 on 2026-10-16 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='SimulationRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('cell', models.CharField(help_text='Design label or table preset', max_length=200)),
                ('reps', models.PositiveIntegerField()),
                ('seed', models.CharField(help_text='64-bit seed, stored as text', max_length=20)),
                ('config', models.JSONField(default=dict)),
                ('report', models.JSONField(default=dict)),
                ('flagged', models.BooleanField(default=False, help_text='Failure rate at or above the tolerated share')),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
    ]
