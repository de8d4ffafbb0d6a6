"""Transductive few-shot inference (TIM, POODLE) with a benchmark harness."""

import json

from ._fsi import *  # noqa: F401,F403
from ._fsi import default_summary_json, run_benchmark_json


def run_benchmark(novel, base=None, jobs=1, **overrides):
    """Run an episode suite. Keyword overrides patch the config document.

    Nested keys use double underscores, e.g. ``task__shots=5``.
    """
    method = overrides.pop("method", "tim-gd")
    doc = json.loads(default_summary_json(method))
    for key, value in overrides.items():
        node = doc["config"]
        *path, leaf = key.split("__")
        for part in path:
            node = node[part]
        if leaf not in node:
            raise KeyError(key)
        node[leaf] = value
    return json.loads(run_benchmark_json(json.dumps(doc), novel, base, jobs))
