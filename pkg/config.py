import logging
import os
from typing import Optional

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

load_dotenv()


class Config:
    """Configuration class for the PAC objectives toolkit."""

    def __init__(self):
        self.log_level = os.getenv('LOG_LEVEL', 'INFO').upper()
        self.log_file: Optional[str] = os.getenv('LOG_FILE') or None

        # Budgets
        self.enumeration_budget = self._int_env('ENUMERATION_BUDGET', 2 ** 22)  # |X|^H, (|E|+1)^H, (2^|e|)^H
        self.tree_budget = self._int_env('TREE_BUDGET', 2 ** 20)  # lifted-tree nodes
        self.sample_budget = self._int_env('SAMPLE_BUDGET', 10 ** 8)  # environment steps

        # Run settings
        self.default_seed = self._int_env('DEFAULT_SEED', 0)
        self.check_trials = self._int_env('CHECK_TRIALS', 50)
        self.decimal_digits = self._int_env('DECIMAL_DIGITS', 20)

    @staticmethod
    def _int_env(name: str, default: int) -> Optional[int]:
        raw = os.getenv(name)
        if raw is None or raw == '':
            return default
        try:
            return int(raw)
        except ValueError:
            logger.error(f"Environment variable {name}={raw!r} is not an integer")
            return None

    def validate(self) -> bool:
        """Validate that all configuration values are usable."""
        positive_fields = [
            'enumeration_budget',
            'tree_budget',
            'sample_budget',
            'check_trials',
            'decimal_digits',
        ]

        invalid_fields = []
        for field in positive_fields:
            value = getattr(self, field)
            if value is None or value <= 0:
                invalid_fields.append(field)

        if self.default_seed is None or self.default_seed < 0:
            invalid_fields.append('default_seed')

        if self.log_level not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            invalid_fields.append('log_level')

        if invalid_fields:
            logger.error(f"Invalid configuration: {invalid_fields}")
            return False

        return True


# Global config instance
config = Config()
