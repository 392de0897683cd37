import json
import logging
import os

import numpy as np
import pandas as pd
import pyarrow as pa
import pyarrow.parquet as pq

from validation.metrics import CHECK_COLUMNS

SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.17g"


def _plain(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    return value


class ReportWriter:
    """Persists a RunReport as CSV, parquet and a JSON summary under output.dir"""

    def __init__(self, config):
        self.config = config
        self.output_dir = config["output"]["dir"]
        self.logger = logging.getLogger(__name__)

    def save_table(self, frame, name):
        os.makedirs(self.output_dir, exist_ok=True)
        csv_path = os.path.join(self.output_dir, f"{name}.csv")
        frame.to_csv(csv_path, index=False, float_format=FLOAT_FORMAT)

        table = pa.Table.from_pandas(frame, preserve_index=False)
        pq.write_table(table, os.path.join(self.output_dir, f"{name}.parquet"), use_dictionary=True,
                       compression="snappy")
        self.logger.info(f"Saved {name} ({len(frame)} rows) to {csv_path}")

    def checks_frame(self, report):
        frame = pd.DataFrame([row.to_dict() for row in report.rows], columns=CHECK_COLUMNS)
        return frame.astype({"measured": float, "bound": float, "passed": bool, "applicable": bool})

    def summary(self, report):
        return {
            "schema_version": SCHEMA_VERSION,
            "experiment": report.kind,
            "config_digest": report.digest,
            "seed": report.seed,
            "fits": _plain(report.fits),
            "checks": len(report.rows),
            "failed": [row.check for row in report.rows if row.applicable and not row.passed],
            "passed": bool(report.passed),
            "wall_time": float(report.wall_time),
            "version": report.version,
        }

    def save(self, report):
        self.save_table(self.checks_frame(report), "checks")
        for name, frame in sorted(report.tables.items()):
            self.save_table(frame.reset_index(drop=True), name)

        path = os.path.join(self.output_dir, "summary.json")
        with open(path, "w") as f:
            json.dump(self.summary(report), f, indent=2, sort_keys=True)
        self.logger.info(f"Summary written to {path}")
        return path
