import * as fs from 'fs';
import * as path from 'path';
import * as tf from '@tensorflow/tfjs';
import { saveCheckpoint } from './io.js';

/**
 * Build the toy checkpoint the tests export: a 6-step, 3-feature LSTM
 * classifier with seeded initializers, saved alongside a small validation
 * dataset and the model's own predictions on it. Training is out of
 * scope; the exporter's round-trip contract is weight-agnostic.
 *
 * Rerunning reproduces the same files, so the fixtures can live in the
 * repository and drift shows up as a diff.
 */

export const N_STEPS = 6;
export const INPUT_DIM = 3;
export const UNITS = 5;
export const CLASSES = 3;

export function buildToyModel(): tf.LayersModel {
  const model = tf.sequential();
  model.add(tf.layers.lstm({
    inputShape: [N_STEPS, INPUT_DIM],
    units: UNITS,
    activation: 'tanh',
    recurrentActivation: 'sigmoid',
    kernelInitializer: tf.initializers.glorotUniform({ seed: 41 }),
    recurrentInitializer: tf.initializers.orthogonal({ seed: 42, gain: 1 }),
    biasInitializer: tf.initializers.randomNormal({ seed: 43, stddev: 0.1 }),
  }));
  model.add(tf.layers.dense({
    units: CLASSES,
    activation: 'softmax',
    kernelInitializer: tf.initializers.glorotUniform({ seed: 44 }),
    biasInitializer: tf.initializers.zeros(),
  }));
  return model;
}

export function validationBatch(count: number): number[][][] {
  const tensor = tf.randomUniform([count, N_STEPS, INPUT_DIM], 0, 1, 'float32', 77);
  const data = tensor.arraySync() as number[][][];
  tensor.dispose();
  return data;
}

export async function writeFixtures(dir: string): Promise<void> {
  const model = buildToyModel();
  await saveCheckpoint(model, path.join(dir, 'toy_checkpoint'));

  const batch = validationBatch(5);
  const outputs = (model.predict(tf.tensor3d(batch)) as tf.Tensor).arraySync();

  const lines = batch.map(values => JSON.stringify({ values }));
  fs.writeFileSync(path.join(dir, 'validation.jsonl'), lines.join('\n') + '\n');
  fs.writeFileSync(path.join(dir, 'expected_outputs.json'),
    JSON.stringify(outputs) + '\n');

  fs.writeFileSync(path.join(dir, 'manifest.json'),
    JSON.stringify({ task: 'classification', n_steps: N_STEPS }) + '\n');
  console.log(`checkpoint and validation data written under ${dir}`);
}

const isMain = process.argv[1] !== undefined
  && path.resolve(process.argv[1]) === new URL(import.meta.url).pathname;
if (isMain) {
  const dir = process.argv[2] ?? path.join(path.dirname(new URL(import.meta.url).pathname), '..', 'fixtures');
  writeFixtures(dir).catch(e => { console.error(e); process.exitCode = 1; });
}
