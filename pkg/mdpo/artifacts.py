"""
Atomic artifact writes and run manifests.
"""
import hashlib
import json
import logging
import os
import tempfile

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'


def atomic_write_text(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix='.tmp-', dir=directory)
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    logger.info('wrote %s', path)


def write_frame(frame, path, header=None):
    """
    Writes a pandas frame as CSV, optionally preceded by one metadata line.
    """
    body = frame.to_csv(index=False, lineterminator='\n', float_format=None)
    atomic_write_text(path, (header + '\n' if header else '') + body)


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir, command, argv, config, seeds, artifacts, name=MANIFEST_NAME):
    """
    Records what a run did: its argv, resolved config, derived seeds and the
    SHA-256 of every artifact relative to ``out_dir``.
    """
    manifest = {'command': command,
                'argv': list(argv),
                'config': config,
                'seeds': seeds,
                'artifacts': {os.path.relpath(p, out_dir): file_sha256(p) for p in sorted(artifacts)}}
    path = os.path.join(out_dir, name)
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + '\n')
    return path
