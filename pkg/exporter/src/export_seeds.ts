import * as fs from 'fs';
import {
  ContinuousSeedInput,
  SeedRecord,
  TokenSeedInput,
} from './canonical.js';
import { ExportError } from './export_model.js';

/**
 * Dataset rows come in as JSON-lines: {"values": [[...], ...]} for
 * continuous data or {"ids": [...]} for token data, either with an
 * optional "label". Sequences are fitted to n_steps from the left:
 * shorter ones get prefix padding (pad_id, or rows of the clamp floor),
 * longer ones keep their last n_steps. Prefix padding keeps the live
 * steps adjacent to the prediction, where they still influence it.
 */

export interface SeedExportOptions {
  nSteps: number;
  count: number;
  padId?: number; // token data, default 0
  clamp?: [number, number]; // continuous data, default [0, 1]
  vocabSize?: number; // token data, default max id + 1
}

interface DatasetRow {
  values?: number[][];
  ids?: number[];
  label?: number;
}

export function readDatasetRows(path: string): DatasetRow[] {
  const rows: DatasetRow[] = [];
  const text = fs.readFileSync(path, 'utf-8');
  text.split('\n').forEach((line, index) => {
    const trimmed = line.trim();
    if (trimmed === '' || trimmed.startsWith('#')) return;
    let doc: unknown;
    try {
      doc = JSON.parse(trimmed);
    } catch (e) {
      throw new ExportError(`${path}:${index + 1}: bad JSON (${(e as Error).message})`);
    }
    const row = doc as DatasetRow;
    if (!Array.isArray(row.values) && !Array.isArray(row.ids)) {
      throw new ExportError(`${path}:${index + 1}: row has neither values nor ids`);
    }
    rows.push(row);
  });
  return rows;
}

function fitContinuous(
  values: number[][], nSteps: number, clamp: [number, number],
): number[][] {
  const [lo, hi] = clamp;
  const clipped = values.map(row => row.map(v => Math.min(hi, Math.max(lo, v))));
  if (clipped.length >= nSteps) {
    return clipped.slice(clipped.length - nSteps);
  }
  const dim = clipped.length > 0 ? clipped[0].length : 0;
  if (dim === 0) {
    throw new ExportError('continuous row is empty; cannot infer its dimension');
  }
  const pad = Array.from({ length: nSteps - clipped.length },
    () => new Array(dim).fill(lo));
  return pad.concat(clipped);
}

function fitTokens(ids: number[], nSteps: number, padId: number): number[] {
  if (ids.length >= nSteps) {
    return ids.slice(ids.length - nSteps);
  }
  return new Array(nSteps - ids.length).fill(padId).concat(ids);
}

export function exportSeeds(
  dataPath: string, outPath: string, options: SeedExportOptions,
): number {
  const rows = readDatasetRows(dataPath);
  if (rows.length === 0) {
    throw new ExportError(`dataset is empty: ${dataPath}`);
  }
  if (options.count > rows.length) {
    throw new ExportError(
      `asked for ${options.count} seeds but the dataset has ${rows.length} rows`);
  }

  const picked = rows.slice(0, options.count);
  const clamp = options.clamp ?? [0, 1] as [number, number];
  const padId = options.padId ?? 0;
  const vocab = options.vocabSize
    ?? Math.max(padId, ...rows.flatMap(r => r.ids ?? [0])) + 1;

  const lines = [`# ${options.count} seeds from ${dataPath}, n_steps ${options.nSteps}`];
  for (const row of picked) {
    let input: ContinuousSeedInput | TokenSeedInput;
    if (row.values !== undefined) {
      input = {
        kind: 'continuous',
        values: fitContinuous(row.values, options.nSteps, clamp),
        clamp,
      };
    } else {
      const ids = fitTokens(row.ids!, options.nSteps, padId);
      const bad = ids.find(id => !Number.isInteger(id) || id < 0 || id >= vocab);
      if (bad !== undefined) {
        throw new ExportError(`token id ${bad} outside vocabulary of ${vocab}`);
      }
      input = { kind: 'token', ids, vocab_size: vocab, pad_id: padId };
    }
    const record: SeedRecord = { input, label: row.label ?? null };
    lines.push(JSON.stringify(record));
  }
  fs.writeFileSync(outPath, lines.join('\n') + '\n');
  return picked.length;
}
