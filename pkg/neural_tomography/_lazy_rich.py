# for internal use only
from __future__ import annotations

TYPE_CHECKING = False
if TYPE_CHECKING:
    from typing import Any

    from rich.console import Console as Console
    from rich.logging import RichHandler as RichHandler
    from rich.markup import escape as escape
    from rich.table import Table as Table

__all__ = [
    "Console",
    "RichHandler",
    "escape",
    "Table",
]


def __getattr__(name: str) -> Any:
    if name not in __all__:
        raise AttributeError(name)
    import rich.console
    import rich.logging
    import rich.markup
    import rich.table

    globals().update(
        {
            "Console": rich.console.Console,
            "RichHandler": rich.logging.RichHandler,
            "escape": rich.markup.escape,
            "Table": rich.table.Table,
        }
    )
    return globals()[name]
