"""Feature extraction from transformer checkpoints into the branchgap format."""

from .extract import ExtractionJob, extract_records, load_checkpoint, run_job

__version__ = "0.1.0"
