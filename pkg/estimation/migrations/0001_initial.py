# Generated by Django 5.2.10 on 2026-10-16 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='FitRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('input_path', models.CharField(max_length=500)),
                ('taus', models.CharField(help_text='Comma-separated quantile levels', max_length=200)),
                ('settings', models.JSONField(default=dict)),
                ('report', models.JSONField(default=dict)),
                ('selected_k', models.CharField(blank=True, help_text='Selected K per tau', max_length=200)),
                ('succeeded', models.BooleanField(default=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
    ]
