from .format import read_table_header, write_table

__all__ = ["read_table_header", "write_table"]
