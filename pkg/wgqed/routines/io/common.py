from contextlib import contextmanager
from pathlib import Path


@contextmanager
def open_file(file_handle, **kwargs):
    """
    Opens ``file_handle`` if it is a path (str or ``pathlib.Path``) and closes it on exit; an already-open handle is
    yielded as is and left open.

    Args:
        file_handle (Union[str, Path, File]): Path or open handle.
        **kwargs: Passed to ``open()`` for paths, e.g. ``mode='w'``.
    """
    if isinstance(file_handle, (str, Path)):
        handle = open(str(file_handle), **kwargs)
        try:
            yield handle
        finally:
            handle.close()
    else:
        yield file_handle


def output_stem(path) -> Path:
    """Strips a trailing ``.csv`` so sibling files (metadata, emissions) can share the stem"""
    path = Path(path)
    return path.with_suffix('') if path.suffix.lower() == '.csv' else path


def ensure_parent(path) -> Path:
    """Creates the parent folder of ``path`` if needed; returns ``path`` as a Path"""
    path = Path(path)
    if not path.parent.exists():
        path.parent.mkdir(parents=True)
    return path
