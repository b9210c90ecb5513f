#!/usr/bin/env node
/**
 * debugcn-export --checkpoints list.json --out dir/
 *
 * list.json is a JSON array of {path, label, model_id, arch_tag?, fc_name?,
 * conv_name?}. Exit codes: 0 success, 1 export/data error, 2 usage error.
 */

import * as fs from 'node:fs';
import { parseArgs } from 'node:util';

import { CheckpointError } from './checkpoint.js';
import { BundleFormatError } from './dwb.js';
import { ExportError, ExportJob, runExport } from './export.js';

function main(argv: string[]): number {
  let values: { checkpoints?: string; out?: string };
  try {
    ({ values } = parseArgs({
      args: argv,
      options: {
        checkpoints: { type: 'string' },
        out: { type: 'string' },
      },
    }));
  } catch (err) {
    console.error(`usage error: ${(err as Error).message}`);
    return 2;
  }
  if (!values.checkpoints || !values.out) {
    console.error('usage: debugcn-export --checkpoints list.json --out dir/');
    return 2;
  }
  try {
    const jobs = JSON.parse(fs.readFileSync(values.checkpoints, 'utf-8')) as ExportJob[];
    if (!Array.isArray(jobs)) {
      throw new ExportError(`${values.checkpoints}: expected a JSON array of jobs`);
    }
    const rows = runExport(jobs, values.out);
    console.log(`wrote ${rows.length} bundles to ${values.out}`);
    return 0;
  } catch (err) {
    if (err instanceof ExportError || err instanceof CheckpointError
        || err instanceof BundleFormatError || (err as NodeJS.ErrnoException).code) {
      console.error(`error: ${(err as Error).message}`);
      return 1;
    }
    throw err;
  }
}

process.exit(main(process.argv.slice(2)));
