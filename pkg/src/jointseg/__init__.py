"""Joint brain tissue and lesion segmentation from task-specific datasets."""

__version__ = "0.1.0"
