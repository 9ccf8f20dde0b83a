import * as fs from 'fs';
import * as path from 'path';
import * as tf from '@tensorflow/tfjs';

/**
 * File-based save/load for tfjs LayersModels.
 *
 * Plain @tensorflow/tfjs ships no file:// handlers (those live in the
 * node binding), so checkpoints here are a directory holding the same
 * two files a browser download produces: model.json with the topology
 * and weights manifest, and weights.bin with the raw weight buffer.
 */

interface ManifestEntry {
  paths: string[];
  weights: tf.io.WeightsManifestEntry[];
}

interface CheckpointJson {
  format: string;
  generatedBy: string;
  modelTopology: {};
  weightsManifest: ManifestEntry[];
}

export function saveHandler(dir: string): tf.io.IOHandler {
  return {
    async save(artifacts: tf.io.ModelArtifacts): Promise<tf.io.SaveResult> {
      fs.mkdirSync(dir, { recursive: true });
      const doc: CheckpointJson = {
        format: 'layers-model',
        generatedBy: 'lstm-export',
        modelTopology: artifacts.modelTopology as {},
        weightsManifest: [
          { paths: ['weights.bin'], weights: artifacts.weightSpecs ?? [] },
        ],
      };
      fs.writeFileSync(path.join(dir, 'model.json'), JSON.stringify(doc));
      const data = artifacts.weightData as ArrayBuffer;
      fs.writeFileSync(path.join(dir, 'weights.bin'), Buffer.from(data));
      return {
        modelArtifactsInfo: {
          dateSaved: new Date(),
          modelTopologyType: 'JSON',
        },
      };
    },
  };
}

export function loadHandler(dir: string): tf.io.IOHandler {
  return {
    async load(): Promise<tf.io.ModelArtifacts> {
      const docPath = path.join(dir, 'model.json');
      if (!fs.existsSync(docPath)) {
        throw new Error(`checkpoint has no model.json: ${dir}`);
      }
      const doc = JSON.parse(fs.readFileSync(docPath, 'utf-8')) as CheckpointJson;
      const manifest = doc.weightsManifest ?? [];
      const specs: tf.io.WeightsManifestEntry[] = [];
      const buffers: Buffer[] = [];
      for (const entry of manifest) {
        specs.push(...entry.weights);
        for (const rel of entry.paths) {
          buffers.push(fs.readFileSync(path.join(dir, rel)));
        }
      }
      const blob = Buffer.concat(buffers);
      return {
        modelTopology: doc.modelTopology,
        weightSpecs: specs,
        weightData: blob.buffer.slice(
          blob.byteOffset, blob.byteOffset + blob.byteLength),
      };
    },
  };
}

export async function loadCheckpoint(dir: string): Promise<tf.LayersModel> {
  return await tf.loadLayersModel(loadHandler(dir));
}

export async function saveCheckpoint(model: tf.LayersModel, dir: string): Promise<void> {
  await model.save(saveHandler(dir));
}
