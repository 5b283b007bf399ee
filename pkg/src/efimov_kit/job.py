"""
Shared base for the command jobs: logging setup, settings banner, summary
banner and the statistics dict every job returns.
"""

import logging
from datetime import datetime
from pathlib import Path
from typing import Dict, Optional

from efimov_kit.config import RunConfig
from efimov_kit.model.core import SystemConfig
from efimov_kit.report import config_comment
from efimov_kit.two_body.branch import BoundStateBranch, tabulate_branch


class BaseJob:
    """
    A configured run of one command.

    Subclasses set ``TITLE`` and implement ``execute()``, which writes the
    command outputs under ``output_dir`` and fills ``self.stats``.
    """

    TITLE = "Job"

    def __init__(
        self,
        config: RunConfig,
        log_file: Optional[str] = None,
        verbose: bool = False,
    ) -> None:
        """
        Args:
            config (RunConfig): Parsed run configuration, CLI overrides applied.
            log_file (str | None): Path to a log file. None disables file logging.
            verbose (bool): Debug logging and progress bars.
        """
        self.config = config
        self.verbose = verbose
        self.output_dir = Path(config.output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.cache_dir = Path(config.cache_dir) if config.cache_dir else None
        self.max_workers = config.threads
        self.config_hash = config.digest()
        self.comment = config_comment(self.config_hash)
        self.stats: Dict[str, object] = {
            "outputs": [],
            "start_time": None,
            "end_time": None,
        }
        self._system: Optional[SystemConfig] = None
        self._setup_logging(log_file)

    def _setup_logging(self, log_file: Optional[str]) -> None:
        """
        Configure the package logger: console at INFO with a bare format,
        optional file handler at DEBUG with timestamps.
        """
        self.logger = logging.getLogger("efimov_kit")
        self.logger.setLevel(logging.DEBUG if self.verbose else logging.INFO)
        self.logger.handlers.clear()

        console_handler = logging.StreamHandler()
        console_handler.setLevel(logging.INFO)
        console_handler.setFormatter(logging.Formatter("%(message)s"))
        self.logger.addHandler(console_handler)

        if log_file:
            log_path = Path(log_file)
            log_path.parent.mkdir(parents=True, exist_ok=True)
            file_handler = logging.FileHandler(log_file, mode="a")
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(
                logging.Formatter(
                    "%(asctime)s - %(levelname)s - %(message)s",
                    datefmt="%Y-%m-%d %H:%M:%S",
                )
            )
            self.logger.addHandler(file_handler)

    @property
    def system(self) -> SystemConfig:
        if self._system is None:
            self._system = self.config.system()
        return self._system

    def _print_settings(self) -> None:
        """Log the active configuration before the run starts."""
        cfg = self.system
        self.logger.info(f"{self.TITLE} Settings:")
        self.logger.info(f"  Masses:           {list(cfg.l)}")
        self.logger.info(f"  Couplings:        {[round(m, 10) for m in cfg.mu]}")
        self.logger.info(f"  Coupling Mode:    {self.config.couplings.mode}")
        self.logger.info(f"  Output Directory: {self.output_dir}")
        self.logger.info(f"  Cache Directory:  {self.cache_dir or 'None (memory only)'}")
        self.logger.info(f"  Max Workers:      {self.max_workers or 'Auto (CPU count)'}")
        self.logger.info(f"  Config Hash:      {self.config_hash}")
        self.logger.info(f"  Verbose:          {self.verbose}")
        self.logger.info("")

    def branches(self) -> Dict[int, BoundStateBranch]:
        """Tabulated two-body branches of all channels, cached on disk when configured."""
        q = self.config.quadrature
        return {
            alpha: tabulate_branch(
                alpha,
                self.system,
                resolution=q.branch_resolution,
                tol=q.root_tol,
                cache_dir=self.cache_dir,
                max_workers=self.max_workers,
                verbose=self.verbose,
            )
            for alpha in (1, 2, 3)
        }

    def execute(self) -> None:
        raise NotImplementedError

    def run(self) -> dict:
        """
        Execute the job.

        Returns:
            dict: Statistics with the written ``outputs`` plus
                ``start_time`` and ``end_time``.
        """
        self.stats["start_time"] = datetime.now()
        self._print_settings()
        self.execute()
        self.stats["end_time"] = datetime.now()
        self._print_summary()
        return self.stats

    def _record(self, path: Path) -> None:
        self.stats["outputs"].append(str(path))

    def _summary_lines(self):
        return []

    def _print_summary(self) -> None:
        if self.stats["end_time"] is None:
            raise RuntimeError("Job has not run. Call run() first.")
        duration = self.stats["end_time"] - self.stats["start_time"]
        self.logger.info("\n" + "=" * 60)
        self.logger.info(self.TITLE.upper() + " SUMMARY")
        self.logger.info("=" * 60)
        for line in self._summary_lines():
            self.logger.info(line)
        for path in self.stats["outputs"]:
            self.logger.info(f"Wrote:           {path}")
        self.logger.info(f"Duration:        {duration}")
        self.logger.info("=" * 60)
