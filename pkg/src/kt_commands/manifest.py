"""
Run manifests: resolved configuration, seeds and content hashes of inputs and outputs
"""
import hashlib
import json
import logging
import os
from typing import Any, Dict, Mapping, Optional

from kt_commands.run_config import RunConfig

logger = logging.getLogger(__name__)

MANIFEST_FORMAT = "slam-fm-manifest"
SIDECAR_SUFFIX = ".manifest.json"


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _describe(files: Mapping[str, str]) -> Dict[str, Dict[str, str]]:
    # base names only, so runs in different directories stay comparable
    return {
        role: {"name": os.path.basename(path), "sha256": file_sha256(path)}
        for role, path in sorted(files.items())
    }


def build_manifest(run_config: RunConfig, outputs: Mapping[str, str] = None) -> Dict[str, Any]:
    return {
        "format": MANIFEST_FORMAT,
        "run": run_config.to_dict(),
        "inputs": _describe(run_config.inputs),
        "outputs": _describe(outputs or {}),
    }


def write_manifest(path: str, run_config: RunConfig, outputs: Mapping[str, str] = None) -> Dict[str, Any]:
    """Write the manifest as sorted JSON; no timestamps, so identical runs give identical bytes"""
    manifest = build_manifest(run_config, outputs)
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    logger.info(f"Manifest written to {path}")
    return manifest


def sidecar_path(run_config: RunConfig) -> Optional[str]:
    """Manifest location of a single-file command: --manifest, else `<out>.manifest.json`"""
    if run_config.manifest:
        return run_config.manifest
    if run_config.out:
        return run_config.out + SIDECAR_SUFFIX
    return None


def record_manifest(path: Optional[str], run_config: RunConfig,
                    outputs: Mapping[str, str] = None) -> Dict[str, Any]:
    """Write the manifest to `path`; with no path (output went to stdout) log it instead"""
    if path is not None:
        return write_manifest(path, run_config, outputs)
    manifest = build_manifest(run_config, outputs)
    logger.info(f"Manifest: {json.dumps(manifest, sort_keys=True)}")
    return manifest
