#!/usr/bin/env node
import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';
import { ExportError, exportModel, readManifest, writeModelJson } from './export_model.js';
import { exportSeeds } from './export_seeds.js';

async function main(): Promise<number> {
  const argv = yargs(hideBin(process.argv))
    .scriptName('lstm-export')
    .command(
      'export-model',
      'convert a tfjs LSTM checkpoint to canonical model JSON',
      y => y
        .option('checkpoint', { type: 'string', demandOption: true,
          describe: 'checkpoint directory (model.json + weights.bin)' })
        .option('manifest', { type: 'string', demandOption: true,
          describe: 'export manifest JSON (task, n_steps, lstm_layer)' })
        .option('out', { type: 'string', demandOption: true }),
    )
    .command(
      'export-seeds',
      'convert dataset rows to seeds JSON-lines',
      y => y
        .option('data', { type: 'string', demandOption: true,
          describe: 'dataset JSON-lines ({values} or {ids} rows)' })
        .option('count', { type: 'number', demandOption: true })
        .option('out', { type: 'string', demandOption: true })
        .option('n-steps', { type: 'number', demandOption: true })
        .option('pad-id', { type: 'number', default: 0 })
        .option('clamp', { type: 'number', array: true, nargs: 2,
          describe: 'value range for continuous data, default 0 1' })
        .option('vocab', { type: 'number',
          describe: 'vocabulary size, default max id + 1' }),
    )
    .demandCommand(1)
    .strict()
    .parseSync();

  const command = argv._[0];
  try {
    if (command === 'export-model') {
      const manifest = readManifest(argv.manifest as string);
      const model = await exportModel(argv.checkpoint as string, manifest);
      writeModelJson(model, argv.out as string);
      console.log(`wrote ${argv.out} (${model.lstm.units} units, ` +
        `${model.n_steps} steps, ${model.input_kind} input)`);
    } else if (command === 'export-seeds') {
      const written = exportSeeds(argv.data as string, argv.out as string, {
        nSteps: argv['n-steps'] as number,
        count: argv.count as number,
        padId: argv['pad-id'] as number,
        clamp: argv.clamp as [number, number] | undefined,
        vocabSize: argv.vocab as number | undefined,
      });
      console.log(`wrote ${written} seeds to ${argv.out}`);
    }
  } catch (e) {
    if (e instanceof ExportError) {
      console.error(`lstm-export: error: ${e.message}`);
      return 1;
    }
    throw e;
  }
  return 0;
}

main().then(code => { process.exitCode = code; });
