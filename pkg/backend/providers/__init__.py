from .base import CarrierSource, get_source, select_source_name
