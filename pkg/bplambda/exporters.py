# bplambda/exporters.py v1.0
"""
Metric exports: per-seed CSV with config header, JSON run summary,
JSON-lines verification report.
"""

import csv
import hashlib
import json
import math
import os
from typing import Any, Dict, Iterable, List, Optional

from .dataclasses import MetricRow

BASE_COLUMNS = ['epoch', 'batch', 'loss', 'task_error', 'accuracy', 'solved_length']


def _say(message: str) -> None:
    from .config import VERBOSE
    if VERBOSE:
        print(message)


def _cell(value: Any) -> str:
    """CSV cell text; None and NaN become an empty (null) cell"""
    if value is None:
        return ''
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        if math.isnan(value):
            return ''
        return repr(value)
    return str(value)


def canonical_json(data: Dict[str, Any]) -> str:
    return json.dumps(data, sort_keys=True, separators=(',', ':'), default=str)


def config_hash(config: Dict[str, Any]) -> str:
    """Short sha256 of the canonical config"""
    return hashlib.sha256(canonical_json(config).encode('utf-8')).hexdigest()[:16]


def write_metrics_csv(filepath: str, rows: Iterable[MetricRow], config: Dict[str, Any],
                      seed: int, alignment_steps: int = 0) -> str:
    """RFC-4180 CSV preceded by '#' comment lines carrying the config and its hash"""
    os.makedirs(os.path.dirname(filepath) or '.', exist_ok=True)
    header = BASE_COLUMNS + [f'align_t{t + 1}' for t in range(alignment_steps)]
    with open(filepath, 'w', encoding='utf-8', newline='') as f:
        f.write(f"# config_hash: {config_hash(config)}\n")
        f.write(f"# seed: {seed}\n")
        f.write(f"# config: {canonical_json(config)}\n")
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            align = list(row.alignment) + [None] * (alignment_steps - len(row.alignment))
            writer.writerow([_cell(v) for v in (row.epoch, row.batch, row.loss, row.task_error,
                                                row.accuracy, row.solved_length)]
                            + [_cell(a) for a in align[:alignment_steps]])
    _say(f"💾 Metrics: {filepath}")
    return filepath


def read_metrics_csv(filepath: str) -> Dict[str, Any]:
    """Header comments and rows (as dicts of strings) of a metrics CSV"""
    comments: Dict[str, str] = {}
    with open(filepath, 'r', encoding='utf-8', newline='') as f:
        lines = f.readlines()
    body = []
    for line in lines:
        if line.startswith('# '):
            key, _, value = line[2:].partition(': ')
            comments[key] = value.rstrip('\n')
        else:
            body.append(line)
    rows = list(csv.DictReader(body))
    return {'comments': comments, 'rows': rows}


def write_summary_json(filepath: str, summary: Dict[str, Any]) -> str:
    os.makedirs(os.path.dirname(filepath) or '.', exist_ok=True)
    with open(filepath, 'w', encoding='utf-8') as f:
        json.dump(summary, f, indent=2, ensure_ascii=False, sort_keys=True)
    _say(f"💾 Summary: {filepath}")
    return filepath


def write_jsonl(filepath: str, records: List[Dict[str, Any]]) -> str:
    """One JSON object per line"""
    os.makedirs(os.path.dirname(filepath) or '.', exist_ok=True)
    with open(filepath, 'w', encoding='utf-8') as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True, default=_json_default) + '\n')
    _say(f"💾 Report: {filepath} ({len(records)} records)")
    return filepath


def _json_default(value: Any) -> Optional[Any]:
    if hasattr(value, 'tolist'):
        return value.tolist()
    if hasattr(value, 'item'):
        return value.item()
    return str(value)
