"""
Run log formatting
Turns result.json records and sweep rows into display lines and statistics
"""

import math
from datetime import datetime
from typing import Dict, Iterable, List, Optional

import numpy as np


class RunLogEnhancer:
    """Formatting and aggregation for run records"""

    @staticmethod
    def format_run_type(run_type: str, algorithm: Optional[str] = None) -> str:
        """Short label for a run"""
        type_mapping = {
            'deblur': 'DEBLUR',
            'train-vae': 'TRAIN',
            'sweep': 'SWEEP',
            'project-range': 'PROJECT',
            'gen-blur-dataset': 'BLUR-DATA',
            'gen-image-dataset': 'IMAGE-DATA',
        }
        label = type_mapping.get(run_type, run_type.upper())
        return f"{label}/{algorithm.upper()}" if algorithm else label

    @staticmethod
    def format_timestamp(timestamp_str: str) -> str:
        try:
            return datetime.fromisoformat(timestamp_str).strftime('%Y-%m-%d %H:%M:%S')
        except (TypeError, ValueError):
            return str(timestamp_str)

    @staticmethod
    def get_status_badge(status: str) -> str:
        badge_config = {
            'completed': '✅ COMPLETED',
            'failed': '❌ FAILED',
            'running': '⏳ RUNNING',
        }
        return badge_config.get(status, status.upper())

    @staticmethod
    def format_log_entry(record: Dict) -> Dict:
        """Copy of a result record with display fields added"""
        formatted = record.copy()
        formatted['formatted_type'] = RunLogEnhancer.format_run_type(
            record.get('run_type', 'run'), record.get('algorithm'))
        if 'started_at' in record:
            formatted['formatted_date'] = RunLogEnhancer.format_timestamp(record['started_at'])
        formatted['status_badge'] = RunLogEnhancer.get_status_badge(record.get('status', 'unknown'))
        formatted['summary'] = RunLogEnhancer.create_run_summary(record)
        return formatted

    @staticmethod
    def format_error_message(error_message: str) -> str:
        if not error_message:
            return ""
        if len(error_message) > 200:
            return error_message[:197] + "..."
        return error_message

    @staticmethod
    def create_run_summary(record: Dict) -> str:
        """One status line for a finished run"""
        parts = [RunLogEnhancer.format_run_type(record.get('run_type', 'run'), record.get('algorithm'))]
        if 'measurement_loss' in record:
            parts.append(f"measurement loss {record['measurement_loss']:.4e}")
        if 'restart_index' in record and record.get('restart_losses'):
            parts.append(f"restart {record['restart_index']} of {len(record['restart_losses'])}")
        if record.get('failed_restarts'):
            parts.append(f"{len(record['failed_restarts'])} failed restarts")
        if 'psnr_db' in record:
            parts.append(f"PSNR {record['psnr_db']:.2f} dB")
        if 'ssim' in record:
            parts.append(f"SSIM {record['ssim']:.4f}")
        if 'elapsed_seconds' in record:
            parts.append(f"{record['elapsed_seconds']:.1f}s")
        if record.get('error_message'):
            parts.append(RunLogEnhancer.format_error_message(record['error_message']))
        return " | ".join(parts)

    @staticmethod
    def get_statistics(values: Iterable[float]) -> Dict:
        """count / mean / std; missing or NaN entries count as failures"""
        values = list(values)
        present = [float(v) for v in values if v is not None and not math.isnan(v)]
        return {
            'count': len(values),
            'failures': len(values) - len(present),
            'mean': float(np.mean(present)) if present else float('nan'),
            'std': float(np.std(present)) if present else float('nan'),
        }

    @staticmethod
    def get_sweep_statistics(rows: List[Dict], metrics: Iterable[str]) -> List[Dict]:
        """Aggregate long-form sweep rows per (grid_value, algorithm), in first-seen order"""
        groups: Dict = {}
        for row in rows:
            groups.setdefault((row['grid_value'], row['algorithm']), []).append(row)
        summary = []
        for (grid_value, algorithm), members in groups.items():
            entry = {'grid_value': grid_value, 'algorithm': algorithm, 'images': len(members)}
            for metric in metrics:
                entry[metric] = RunLogEnhancer.get_statistics(m[metric] for m in members)
            summary.append(entry)
        return summary
