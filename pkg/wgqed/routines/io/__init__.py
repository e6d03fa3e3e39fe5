from .common import ensure_parent, open_file, output_stem
from .tables import metadata_path, read_metadata, read_table, write_emissions, write_metadata, write_table
