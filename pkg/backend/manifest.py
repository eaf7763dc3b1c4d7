"""Run manifests: enough recorded context to re-derive a run from
(commit, lockfile digest, seed), plus verification by replay."""
from datetime import datetime, timezone
from importlib import metadata
from typing import Any, Dict, List, Optional, Sequence
import hashlib
import json
import logging
import os
import platform
import subprocess
import sys

import numpy as np

from actions import layout_spec as action_layout
from cards import export_catalog
from harness import MatchSpec, run_match
from observe import layout_spec as observation_layout

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA_VERSION = 1
MANIFEST_NAME = 'manifest.json'
REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
LOCKFILE = os.path.join(REPO_ROOT, 'requirements.txt')
TRACKED_ENV = ('PYTHONHASHSEED', 'OMP_NUM_THREADS', 'MKL_NUM_THREADS', 'OPENBLAS_NUM_THREADS', 'CUDA_VISIBLE_DEVICES')
KEY_LIBRARIES = ('numpy', 'pandas', 'scipy', 'statsmodels', 'scikit-learn', 'networkx', 'gymnasium',
                 'joblib', 'pydantic', 'fastapi', 'plotly')


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def json_digest(obj: Any) -> str:
    return sha256_text(json.dumps(obj, sort_keys=True, separators=(',', ':'), default=str))


def lockfile_digest(path: str = LOCKFILE) -> str:
    try:
        with open(path, 'rb') as f:
            return hashlib.sha256(f.read()).hexdigest()
    except OSError as exc:
        raise ValueError(f'cannot read lockfile {path}: {exc}') from exc


def seed_fingerprint(seed: int) -> str:
    """Digest of the generator state a seed produces plus its first draws."""
    rng = np.random.default_rng(seed)
    state = rng.bit_generator.state
    draws = rng.integers(0, 2 ** 32, size=4).tolist()
    return json_digest({'state': state, 'draws': draws})


def _git(*args: str) -> Optional[str]:
    try:
        out = subprocess.run(['git', *args], cwd=REPO_ROOT, capture_output=True, text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return None
    return out.stdout.strip() if out.returncode == 0 else None


def vcs_info() -> Dict[str, Any]:
    status = _git('status', '--porcelain')
    return {
        'commit': _git('rev-parse', 'HEAD'),
        'branch': _git('rev-parse', '--abbrev-ref', 'HEAD'),
        'dirty': bool(status) if status is not None else None,
    }


def runtime_info() -> Dict[str, Any]:
    versions = {}
    for name in KEY_LIBRARIES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return {'python': sys.version.split()[0], 'implementation': platform.python_implementation(),
            'platform': platform.platform(), 'libraries': versions}


def layout_checksums() -> Dict[str, str]:
    return {'actions': json_digest(action_layout()), 'observation': json_digest(observation_layout()),
            'catalog': json_digest(export_catalog())}


def build_manifest(run_name: str, config: Dict[str, Any], seeds: Sequence[int],
                   argv: Optional[List[str]] = None, evaluation: Optional[Dict[str, Any]] = None,
                   lockfile: str = LOCKFILE) -> Dict[str, Any]:
    return {
        'run': {'schema_version': MANIFEST_SCHEMA_VERSION, 'name': run_name,
                'timestamp': datetime.now(timezone.utc).isoformat()},
        'vcs': vcs_info(),
        'runtime': runtime_info(),
        'lockfile': {'path': os.path.relpath(lockfile, REPO_ROOT), 'sha256': lockfile_digest(lockfile)},
        'invocation': {'argv': list(argv if argv is not None else sys.argv),
                       'host': sha256_text(platform.node())[:16]},
        'environment': {k: os.environ.get(k) for k in TRACKED_ENV},
        'config': config,
        'seeds': {'list': list(seeds), 'fingerprints': {str(s): seed_fingerprint(s) for s in seeds}},
        'layouts': layout_checksums(),
        'evaluation': evaluation,
    }


def write_manifest(run_dir: str, run_name: str, config: Dict[str, Any], seeds: Sequence[int],
                   argv: Optional[List[str]] = None, evaluation: Optional[Dict[str, Any]] = None,
                   lockfile: str = LOCKFILE) -> str:
    os.makedirs(run_dir, exist_ok=True)
    manifest = build_manifest(run_name, config, seeds, argv, evaluation, lockfile)
    path = os.path.join(run_dir, MANIFEST_NAME)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=str)
    logger.info('manifest written path=%s commit=%s dirty=%s', path, manifest['vcs']['commit'],
                manifest['vcs']['dirty'])
    return path


def load_manifest(path: str) -> Dict[str, Any]:
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def evaluation_record(spec, rows: List[Dict[str, Any]]) -> Dict[str, Any]:
    """Match spec plus the per-episode trace hashes it produced."""
    return {'spec': spec.to_dict(),
            'trace_hashes': [r['trace_hash'] for r in rows]}


def verify_manifest(path: str) -> Dict[str, Any]:
    """Replay the recorded evaluation and compare trace hashes and checksums."""
    manifest = load_manifest(path)
    problems: List[str] = []
    if manifest['seeds']['fingerprints'] != {str(s): seed_fingerprint(s) for s in manifest['seeds']['list']}:
        problems.append('seed fingerprints differ')
    if manifest.get('layouts') != layout_checksums():
        problems.append('layout or catalog checksums differ')
    try:
        if manifest['lockfile']['sha256'] != lockfile_digest(os.path.join(REPO_ROOT, manifest['lockfile']['path'])):
            problems.append('lockfile digest differs')
    except ValueError as exc:
        problems.append(str(exc))

    mismatched: List[int] = []
    evaluation = manifest.get('evaluation')
    if evaluation:
        rows = run_match(MatchSpec.from_dict(evaluation['spec']))
        replayed = [r['trace_hash'] for r in rows]
        expected = evaluation['trace_hashes']
        if len(replayed) != len(expected):
            problems.append(f'episode count differs: {len(replayed)} vs {len(expected)}')
        mismatched = [i for i, (a, b) in enumerate(zip(replayed, expected)) if a != b]
        if mismatched:
            problems.append(f'{len(mismatched)} episode trace hashes differ')
    result = {'ok': not problems, 'problems': problems, 'mismatched_episodes': mismatched,
              'commit': manifest['vcs'].get('commit')}
    logger.info('manifest verify ok=%s problems=%d', result['ok'], len(problems))
    return result
