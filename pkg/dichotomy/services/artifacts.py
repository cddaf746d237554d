"""
实验产物写出
数据表（CSV 或 JSON）、摘要 summary.json 与错误记录 error.json
"""
import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from dichotomy.conf import lab_setting
from dichotomy.utils.lab_response import _plain

logger = logging.getLogger('dichotomy')


def format_float(value: float) -> str:
    """固定有效位数，保证往返无损且可 diff"""
    digits = int(lab_setting('OUTPUT', 'FLOAT_DIGITS'))
    value = float(value)
    if math.isnan(value):
        return 'nan'
    if math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    return format(value, f'.{digits}g')


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _json_value(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        value = value.tolist()
    value = _plain(value)
    if isinstance(value, dict):
        return {str(key): _json_value(item) for key, item in value.items()}
    if isinstance(value, list):
        return [_json_value(item) for item in value]
    if isinstance(value, float) and not math.isfinite(value):
        return format_float(value)
    if hasattr(value, 'value') and isinstance(getattr(value, 'value'), str):
        return value.value
    return value


class ArtifactWriter:
    """
    每个实验只写自己的输出目录

    Args:
        out_dir: 输出目录（必须已存在或可创建）
        fmt: 数据表格式 csv 或 json
    """

    def __init__(self, out_dir: str, fmt: str = 'csv'):
        self.out_dir = Path(out_dir)
        self.fmt = fmt
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def write_table(self, name: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
        """
        写出数据表
        :param name: 文件名（不含扩展名）
        :param header: 列名
        :param rows: 行数据
        :return: 文件路径
        """
        path = self.out_dir / f'{name}.{self.fmt}'
        if self.fmt == 'csv':
            with path.open('w', encoding='utf-8', newline='') as handle:
                writer = csv.writer(handle, lineterminator='\n')
                writer.writerow(header)
                for row in rows:
                    writer.writerow([_cell(value) for value in row])
        else:
            records = [{column: _json_value(value) for column, value in zip(header, row)} for row in rows]
            self._dump(path, {'columns': list(header), 'rows': records})
        logger.info(f"数据表已写出: {path}")
        return path

    def write_summary(self, name: str, summary: dict) -> Path:
        path = self.out_dir / f'{name}.summary.json'
        self._dump(path, summary)
        logger.info(f"摘要已写出: {path}")
        return path

    def write_error(self, record: dict) -> Path:
        path = self.out_dir / 'error.json'
        self._dump(path, record)
        return path

    @staticmethod
    def _dump(path: Path, payload: dict) -> None:
        text = json.dumps(_json_value(payload), ensure_ascii=False, sort_keys=True, indent=2)
        path.write_text(text + '\n', encoding='utf-8')
