"""
noisy_targets Django application initialization.
"""

from django.apps import AppConfig


class NoisyTargetsConfig(AppConfig):
    """
    Configuration for the noisy_targets Django application.
    """

    name = "noisy_targets"

    def ready(self):
        # connects the JSON event receivers
        from noisy_targets import signals  # pylint: disable=import-outside-toplevel,unused-import
