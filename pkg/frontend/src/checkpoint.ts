/**
 * Minimal reader for tfjs layer-model checkpoints: a model.json whose
 * weightsManifest lists named tensors across binary shard files.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

export interface CheckpointTensor {
  name: string;
  shape: number[];
  data: Float32Array;
}

export class CheckpointError extends Error {}

interface ManifestWeight {
  name: string;
  shape: number[];
  dtype: string;
}

interface ManifestGroup {
  paths: string[];
  weights: ManifestWeight[];
}

const DTYPE_BYTES: Record<string, number> = {
  float32: 4,
  int32: 4,
  uint8: 1,
  bool: 1,
};

/**
 * Returns every float32 tensor of the checkpoint in manifest order.
 * Non-float tensors are skipped but still advance the byte offset.
 */
export function loadCheckpoint(modelJsonPath: string): CheckpointTensor[] {
  let parsed: { weightsManifest?: ManifestGroup[] };
  try {
    parsed = JSON.parse(fs.readFileSync(modelJsonPath, 'utf-8'));
  } catch (err) {
    throw new CheckpointError(`cannot parse ${modelJsonPath}: ${err}`);
  }
  const groups = parsed.weightsManifest;
  if (!Array.isArray(groups) || groups.length === 0) {
    throw new CheckpointError(`${modelJsonPath}: no weightsManifest`);
  }
  const dir = path.dirname(modelJsonPath);
  const tensors: CheckpointTensor[] = [];
  for (const group of groups) {
    const shards = group.paths.map((p) => fs.readFileSync(path.join(dir, p)));
    const blob = Buffer.concat(shards);
    let offset = 0;
    for (const weight of group.weights) {
      const elemBytes = DTYPE_BYTES[weight.dtype];
      if (elemBytes === undefined) {
        throw new CheckpointError(
          `${modelJsonPath}: tensor '${weight.name}' has unsupported dtype '${weight.dtype}'`);
      }
      const size = weight.shape.reduce((a, b) => a * b, 1);
      const byteLength = size * elemBytes;
      if (offset + byteLength > blob.length) {
        throw new CheckpointError(
          `${modelJsonPath}: shard data ends inside tensor '${weight.name}'`);
      }
      if (weight.dtype === 'float32') {
        const data = new Float32Array(size);
        for (let i = 0; i < size; i++) {
          data[i] = blob.readFloatLE(offset + 4 * i);
        }
        tensors.push({ name: weight.name, shape: weight.shape, data });
      }
      offset += byteLength;
    }
    if (offset !== blob.length) {
      throw new CheckpointError(
        `${modelJsonPath}: ${blob.length - offset} shard bytes not covered by the manifest`);
    }
  }
  return tensors;
}
