/**
 * Selects the final FC weight matrix and the first conv weight tensor from
 * a checkpoint and writes DWB1 bundles plus a manifest the core pipeline
 * can train on directly.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

import { CheckpointTensor, loadCheckpoint } from './checkpoint.js';
import { TensorRecord, encodeTensors } from './dwb.js';

export interface ExportJob {
  path: string;
  label: 'clean' | 'trojaned';
  model_id: string;
  arch_tag?: string;
  /** Explicit tensor-name overrides; defaults to auto-detection. */
  fc_name?: string;
  conv_name?: string;
}

export class ExportError extends Error {}

/** Transpose a [rows, cols] tensor stored row-major. */
function transpose2d(data: Float32Array, rows: number, cols: number): Float32Array {
  const out = new Float32Array(data.length);
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      out[c * rows + r] = data[r * cols + c];
    }
  }
  return out;
}

/** tfjs conv kernels are [H, W, inC, outC]; bundles want [outC, inC, H, W]. */
function normalizeConv(t: CheckpointTensor): TensorRecord {
  const [h, w, cin, cout] = t.shape;
  const out = new Float32Array(t.data.length);
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      for (let i = 0; i < cin; i++) {
        for (let o = 0; o < cout; o++) {
          out[((o * cin + i) * h + y) * w + x] = t.data[((y * w + x) * cin + i) * cout + o];
        }
      }
    }
  }
  return { name: 'conv1.weight', dims: [cout, cin, h, w], data: out };
}

/** tfjs dense kernels are [inputs, outputs]; bundles want [outputs, inputs]. */
function normalizeFc(t: CheckpointTensor): TensorRecord {
  const [din, dout] = t.shape;
  return { name: 'fc.weight', dims: [dout, din], data: transpose2d(t.data, din, dout) };
}

function pickByName(tensors: CheckpointTensor[], name: string, rank: number,
                    checkpoint: string): CheckpointTensor {
  const hits = tensors.filter((t) => t.name === name);
  if (hits.length === 0) {
    throw new ExportError(`${checkpoint}: no tensor named '${name}'`);
  }
  if (hits.length > 1) {
    throw new ExportError(`${checkpoint}: ambiguous override '${name}' (${hits.length} matches)`);
  }
  if (hits[0].shape.length !== rank) {
    throw new ExportError(
      `${checkpoint}: tensor '${name}' is ${hits[0].shape.length}-D, expected ${rank}-D`);
  }
  return hits[0];
}

export function selectTensors(tensors: CheckpointTensor[], job: ExportJob): TensorRecord[] {
  let fc: CheckpointTensor | undefined;
  if (job.fc_name !== undefined) {
    fc = pickByName(tensors, job.fc_name, 2, job.path);
  } else {
    const twoD = tensors.filter((t) => t.shape.length === 2);
    fc = twoD[twoD.length - 1];
  }
  if (fc === undefined) {
    throw new ExportError(`${job.path}: no 2-D weight tensor to use as fc.weight`);
  }

  let conv: CheckpointTensor | undefined;
  if (job.conv_name !== undefined) {
    conv = pickByName(tensors, job.conv_name, 4, job.path);
  } else {
    conv = tensors.find((t) => t.shape.length === 4);
  }

  const records = [normalizeFc(fc)];
  if (conv !== undefined) {
    records.push(normalizeConv(conv));
  }
  return records;
}

export interface ManifestRow {
  path: string;
  label: string;
  model_id: string;
  arch_tag: string;
}

export function runExport(jobs: ExportJob[], outDir: string): ManifestRow[] {
  const seen = new Set<string>();
  for (const job of jobs) {
    if (job.label !== 'clean' && job.label !== 'trojaned') {
      throw new ExportError(`${job.path}: label must be "clean" or "trojaned"`);
    }
    if (seen.has(job.model_id)) {
      throw new ExportError(`duplicate model_id '${job.model_id}'`);
    }
    seen.add(job.model_id);
  }
  fs.mkdirSync(outDir, { recursive: true });
  const rows: ManifestRow[] = [];
  for (const job of jobs) {
    const records = selectTensors(loadCheckpoint(job.path), job);
    const filename = `${job.model_id}.dwb`;
    fs.writeFileSync(path.join(outDir, filename), encodeTensors(records));
    rows.push({
      path: filename,
      label: job.label,
      model_id: job.model_id,
      arch_tag: job.arch_tag ?? '',
    });
  }
  fs.writeFileSync(path.join(outDir, 'manifest.json'),
                   JSON.stringify(rows, null, 2) + '\n');
  return rows;
}
