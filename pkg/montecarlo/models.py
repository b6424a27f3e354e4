from django.db import models


class SimulationRun(models.Model):
    """One `panelq simulate --record` invocation."""
    created_at = models.DateTimeField(auto_now_add=True)
    cell = models.CharField(max_length=200, help_text="Design label or table preset")
    reps = models.PositiveIntegerField()
    seed = models.CharField(max_length=20, help_text="64-bit seed, stored as text")
    config = models.JSONField(default=dict)
    report = models.JSONField(default=dict)
    flagged = models.BooleanField(default=False, help_text="Failure rate at or above the tolerated share")

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.cell} ({self.reps} reps, seed {self.seed})"
