import * as fs from 'fs';
import * as tf from '@tensorflow/tfjs';
import {
  CANONICAL_ACTIVATIONS,
  CanonicalDense,
  CanonicalGate,
  CanonicalModel,
} from './canonical.js';
import { loadCheckpoint } from './io.js';

export class ExportError extends Error {}

export interface ExportManifest {
  task: 'classification' | 'regression';
  n_steps: number;
  /** Name of the LSTM layer to export; optional when the model has exactly one. */
  lstm_layer?: string;
}

export function readManifest(path: string): ExportManifest {
  const doc = JSON.parse(fs.readFileSync(path, 'utf-8'));
  if (doc.task !== 'classification' && doc.task !== 'regression') {
    throw new ExportError(`manifest task must be classification or regression, got ${JSON.stringify(doc.task)}`);
  }
  if (!Number.isInteger(doc.n_steps) || doc.n_steps < 1) {
    throw new ExportError(`manifest n_steps must be a positive integer, got ${JSON.stringify(doc.n_steps)}`);
  }
  if (doc.lstm_layer !== undefined && typeof doc.lstm_layer !== 'string') {
    throw new ExportError('manifest lstm_layer must be a layer name');
  }
  return { task: doc.task, n_steps: doc.n_steps, lstm_layer: doc.lstm_layer };
}

function toArray(t: tf.Tensor): number[] {
  return Array.from(t.dataSync());
}

/**
 * Split the framework's fused LSTM kernels into named gates.
 *
 * The fused kernel is (inputDim x 4*units) with gate blocks in the order
 * input | forget | candidate | output along the columns; the recurrent
 * kernel is (units x 4*units) in the same order. The canonical format
 * wants each gate as (units x inputDim) acting left on the step input,
 * which is the transpose of the corresponding block.
 */
function splitGates(
  kernel: tf.Tensor, recurrent: tf.Tensor, bias: tf.Tensor, units: number,
): { input: CanonicalGate; forget: CanonicalGate; candidate: CanonicalGate; output: CanonicalGate } {
  const [inputDim, fourU] = kernel.shape as [number, number];
  if (fourU !== 4 * units || recurrent.shape[0] !== units || bias.shape[0] !== 4 * units) {
    throw new ExportError(
      `gate dimension mismatch: kernel ${kernel.shape}, recurrent ${recurrent.shape}, ` +
      `bias ${bias.shape} against ${units} units`);
  }
  const k = kernel.dataSync();
  const r = recurrent.dataSync();
  const b = bias.dataSync();

  const block = (offset: number): CanonicalGate => {
    const wInput: number[] = [];
    for (let u = 0; u < units; u++) {
      for (let d = 0; d < inputDim; d++) {
        wInput.push(k[d * fourU + offset + u]);
      }
    }
    const wHidden: number[] = [];
    for (let u = 0; u < units; u++) {
      for (let h = 0; h < units; h++) {
        wHidden.push(r[h * fourU + offset + u]);
      }
    }
    return {
      w_input: wInput,
      w_hidden: wHidden,
      bias: Array.from(b.slice(offset, offset + units)),
    };
  };

  return {
    input: block(0),
    forget: block(units),
    candidate: block(2 * units),
    output: block(3 * units),
  };
}

function denseToCanonical(layer: tf.layers.Layer): CanonicalDense {
  const config = layer.getConfig() as { activation?: string; useBias?: boolean };
  const activation = config.activation ?? 'linear';
  if (!CANONICAL_ACTIVATIONS.has(activation)) {
    throw new ExportError(
      `dense layer ${layer.name} uses unsupported activation ${activation}`);
  }
  const weights = layer.getWeights();
  const kernel = weights[0]; // (in, out)
  const [inDim, outDim] = kernel.shape as [number, number];
  const bias = weights.length > 1 ? toArray(weights[1]) : new Array(outDim).fill(0);
  // canonical wants (rows=out x cols=in) acting left, so transpose
  const k = kernel.dataSync();
  const flat: number[] = [];
  for (let o = 0; o < outDim; o++) {
    for (let i = 0; i < inDim; i++) {
      flat.push(k[i * outDim + o]);
    }
  }
  return { rows: outDim, cols: inDim, weights: flat, bias, activation };
}

export async function exportModel(
  checkpointDir: string, manifest: ExportManifest,
): Promise<CanonicalModel> {
  const model = await loadCheckpoint(checkpointDir);

  const layers = model.layers.filter(l => l.getClassName() !== 'InputLayer');
  const lstmLayers = layers.filter(l => l.getClassName() === 'LSTM');

  let lstm: tf.layers.Layer;
  if (manifest.lstm_layer !== undefined) {
    const named = layers.find(l => l.name === manifest.lstm_layer);
    if (!named) {
      throw new ExportError(`no layer named ${manifest.lstm_layer} in the checkpoint`);
    }
    if (named.getClassName() !== 'LSTM') {
      throw new ExportError(
        `layer ${manifest.lstm_layer} is a ${named.getClassName()}, not an LSTM`);
    }
    lstm = named;
  } else if (lstmLayers.length === 1) {
    lstm = lstmLayers[0];
  } else {
    throw new ExportError(
      `checkpoint has ${lstmLayers.length} LSTM layers; name one in the manifest`);
  }

  const lstmConfig = lstm.getConfig() as {
    units: number; activation: string; recurrentActivation: string; useBias?: boolean;
  };
  if (lstmConfig.recurrentActivation !== 'sigmoid') {
    throw new ExportError(
      `LSTM recurrent activation must be sigmoid, got ${lstmConfig.recurrentActivation} ` +
      '(retrain or rebuild the layer; hardSigmoid gates do not match the engine)');
  }
  if (lstmConfig.activation !== 'tanh') {
    throw new ExportError(`LSTM activation must be tanh, got ${lstmConfig.activation}`);
  }

  const lstmIndex = layers.indexOf(lstm);
  const pre: CanonicalDense[] = [];
  const post: CanonicalDense[] = [];
  let embedding: tf.layers.Layer | null = null;

  layers.forEach((layer, index) => {
    if (layer === lstm) return;
    const kind = layer.getClassName();
    if (kind === 'Embedding') {
      if (index !== 0) {
        throw new ExportError('an embedding layer must come first');
      }
      embedding = layer;
      return;
    }
    if (kind !== 'Dense') {
      throw new ExportError(`unsupported layer type ${kind} (${layer.name})`);
    }
    (index < lstmIndex ? pre : post).push(denseToCanonical(layer));
  });
  if (post.length === 0) {
    throw new ExportError('no dense layer after the LSTM; the engine needs an output head');
  }

  const [kernel, recurrentKernel, bias] = lstm.getWeights();
  const units = lstmConfig.units;
  const gates = splitGates(kernel, recurrentKernel, bias, units);
  const lstmInputDim = kernel.shape[0] as number;

  // dimension chain: raw input -> pre layers -> lstm -> post layers
  let dim = pre.length > 0 ? pre[0].cols : lstmInputDim;
  for (const layer of pre) {
    if (layer.cols !== dim) {
      throw new ExportError(`pre-layer expects ${layer.cols} inputs, chain carries ${dim}`);
    }
    dim = layer.rows;
  }
  if (dim !== lstmInputDim) {
    throw new ExportError(`LSTM expects ${lstmInputDim} inputs, chain carries ${dim}`);
  }
  dim = units;
  for (const layer of post) {
    if (layer.cols !== dim) {
      throw new ExportError(`post-layer expects ${layer.cols} inputs, chain carries ${dim}`);
    }
    dim = layer.rows;
  }

  const out: CanonicalModel = {
    format_version: 1,
    task: manifest.task,
    input_kind: embedding ? 'token' : 'continuous',
    n_steps: manifest.n_steps,
    pre_layers: pre,
    lstm: {
      units,
      input_dim: lstmInputDim,
      forget: gates.forget,
      input: gates.input,
      candidate: gates.candidate,
      output: gates.output,
    },
    post_layers: post,
  };
  if (embedding) {
    const table = (embedding as tf.layers.Layer).getWeights()[0]; // (vocab, dim)
    const [vocab, embDim] = table.shape as [number, number];
    out.token_embedding = { vocab, dim: embDim, weights: toArray(table) };
  }
  return out;
}

export function writeModelJson(model: CanonicalModel, outPath: string): void {
  fs.writeFileSync(outPath, JSON.stringify(model) + '\n');
}
