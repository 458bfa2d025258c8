import os
from typing import Optional, Sequence

import yaml

RULE = "=" * 80


def render_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """Fixed-width table: first column left-aligned, the rest right-aligned."""
    widths = [len(h) for h in headers]
    for row in rows:
        if len(row) != len(headers):
            raise ValueError(f'row has {len(row)} cells, header has {len(headers)}')
        widths = [max(w, len(cell)) for w, cell in zip(widths, row)]

    def line(cells):
        first, *rest = cells
        parts = [first.ljust(widths[0])] + [c.rjust(w) for c, w in zip(rest, widths[1:])]
        return '  '.join(parts).rstrip()

    out = [line(headers), '  '.join('-' * w for w in widths)]
    out.extend(line(row) for row in rows)
    return '\n'.join(out)


def dump_record(record: dict) -> str:
    return yaml.safe_dump(record, sort_keys=False, default_flow_style=False)


def emit(text: str, output: Optional[str] = None):
    """Write a report to stdout, or to `output` when given."""
    if not text.endswith('\n'):
        text += '\n'
    if output is None:
        print(text, end='')
        return
    directory = os.path.dirname(output)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(output, 'w', encoding='utf-8') as file:
        file.write(text)
