/**
 * The canonical file formats the testing engine consumes.
 *
 * The shapes here mirror the engine's model JSON schema (format_version 1)
 * and its seeds JSON-lines records. Weight matrices are stored flat in
 * row-major order; gate matrices are (units x input_dim), dense layers
 * (rows x cols) acting left on a column vector.
 */

export interface CanonicalGate {
  w_input: number[];
  w_hidden: number[];
  bias: number[];
}

export interface CanonicalDense {
  rows: number;
  cols: number;
  weights: number[];
  bias: number[];
  activation: string;
}

export interface CanonicalModel {
  format_version: 1;
  task: 'classification' | 'regression';
  input_kind: 'continuous' | 'token';
  n_steps: number;
  pre_layers: CanonicalDense[];
  lstm: {
    units: number;
    input_dim: number;
    forget: CanonicalGate;
    input: CanonicalGate;
    candidate: CanonicalGate;
    output: CanonicalGate;
  };
  post_layers: CanonicalDense[];
  token_embedding?: {
    vocab: number;
    dim: number;
    weights: number[];
  };
}

export interface ContinuousSeedInput {
  kind: 'continuous';
  values: number[][];
  clamp: [number, number];
}

export interface TokenSeedInput {
  kind: 'token';
  ids: number[];
  vocab_size: number;
  pad_id: number;
}

export interface SeedRecord {
  input: ContinuousSeedInput | TokenSeedInput;
  label: number | null;
}

export const CANONICAL_ACTIVATIONS = new Set([
  'linear', 'relu', 'sigmoid', 'tanh', 'softmax',
]);
