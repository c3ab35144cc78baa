"""Offline encoder runner producing kgalign feature files."""

from .encoders import (
    DEFAULT_IMAGE_ENCODER,
    DEFAULT_TEXT_ENCODER,
    EncoderUnavailableError,
    image_encoder,
    text_encoder,
)
from .export import ExportJob, ExportReport, export, read_entities_tsv, read_images_tsv

__version__ = "0.1.0"
