"""
Run registry: persisted fit requests and their reports.
"""

import json

from django.db import models


class FitRun(models.Model):
    """One `panelq fit --record` invocation."""
    created_at = models.DateTimeField(auto_now_add=True)
    input_path = models.CharField(max_length=500)
    taus = models.CharField(max_length=200, help_text="Comma-separated quantile levels")
    settings = models.JSONField(default=dict)
    report = models.JSONField(default=dict)
    selected_k = models.CharField(max_length=200, blank=True, help_text="Selected K per tau")
    succeeded = models.BooleanField(default=True)

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        return f"fit {self.input_path} tau={self.taus}"

    @classmethod
    def record(cls, report: dict, input_path, taus) -> 'FitRun':
        from .reports import report_to_json
        blocks = report.get('blocks', [])
        return cls.objects.create(
            input_path=str(input_path),
            taus=','.join(f"{t:g}" for t in taus),
            settings=report.get('settings', {}),
            report=json.loads(report_to_json(report)),
            selected_k=','.join(str(b.get('selected_k', '-')) for b in blocks),
            succeeded=all(b['status'] == 'ok' for b in blocks),
        )
