/**
 * Typed-array bridge to the cpawarp closed-form warping kernel.
 *
 * Each call serializes a request to JSON, runs the Python CLI's `kernel`
 * endpoint synchronously, and parses the JSON reply into Float64Arrays.
 * The CLI prints floats with 17 significant digits, so every value
 * round-trips bit-exactly; parity (not performance) is the contract.
 */

import { spawnSync } from "node:child_process";

/** Raised for malformed inputs (wrong shapes, unknown ops, bad files). */
export class ArgumentError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ArgumentError";
  }
}

/** Raised when the kernel reports a numeric failure. */
export class KernelNumericError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "KernelNumericError";
  }
}

export interface BridgeOptions {
  /** Interpreter used to launch the kernel (env CPAWARP_PYTHON wins). */
  python?: string;
}

export interface FieldSpec {
  cells: number;
  zeroBoundary?: boolean;
  theta: ArrayLike<number>;
  t?: number;
  squarings?: number;
}

export interface Matrix {
  rows: number;
  cols: number;
  data: Float64Array;
}

export interface AlignConfig {
  n_cells?: number;
  zero_boundary?: boolean;
  lambda_sigma?: number;
  lambda_smooth?: number;
  n_layers?: number;
  n_squarings?: number;
  learning_rate?: number;
  lr_decay?: string;
  epochs?: number;
  seed?: number;
}

export interface AlignResult {
  /** One warp-coefficient stack per signal: [n, layers, d]. */
  thetas: Float64Array;
  thetasShape: [number, number, number];
  /** Aligned signals, row-major [n, t]. */
  aligned: Matrix;
  lossData: Float64Array;
  lossReg: Float64Array;
}

function pythonBin(options?: BridgeOptions): string {
  return process.env.CPAWARP_PYTHON ?? options?.python ?? "python3";
}

/** Run one kernel request through the CLI and parse the JSON response. */
export function runKernel(request: object, options?: BridgeOptions): any {
  const proc = spawnSync(pythonBin(options), ["-m", "cpawarp", "kernel"], {
    input: JSON.stringify(request),
    encoding: "utf8",
    maxBuffer: 1 << 28,
  });
  if (proc.error) {
    throw new ArgumentError(`failed to launch kernel: ${proc.error.message}`);
  }
  if (proc.status === 4) {
    throw new KernelNumericError(proc.stderr.trim());
  }
  if (proc.status !== 0) {
    throw new ArgumentError(proc.stderr.trim() || `kernel exited with ${proc.status}`);
  }
  return JSON.parse(proc.stdout);
}

function fieldRequest(op: string, spec: FieldSpec): Record<string, unknown> {
  if (!Number.isInteger(spec.cells) || spec.cells < 1) {
    throw new ArgumentError(`cells must be a positive integer, got ${spec.cells}`);
  }
  return {
    op,
    cells: spec.cells,
    zero_boundary: spec.zeroBoundary ?? false,
    theta: Array.from(spec.theta),
    t: spec.t ?? 1.0,
    squarings: spec.squarings ?? 0,
  };
}

/** Warp a batch of points by the flow of the coefficient vector. */
export function integrateGrid(
  spec: FieldSpec & { points: ArrayLike<number> },
  options?: BridgeOptions,
): Float64Array {
  const req = { ...fieldRequest("integrate_grid", spec), points: Array.from(spec.points) };
  return Float64Array.from(runKernel(req, options).phi);
}

/** Jacobian of the warped points w.r.t. every coefficient. */
export function gradGrid(
  spec: FieldSpec & { points: ArrayLike<number> },
  options?: BridgeOptions,
): Matrix {
  const req = { ...fieldRequest("grad_grid", spec), points: Array.from(spec.points) };
  const resp = runKernel(req, options);
  const [rows, cols] = resp.shape as [number, number];
  return { rows, cols, data: Float64Array.from((resp.grad as number[][]).flat()) };
}

/** One seeded draw from the smoothness prior over warp coefficients. */
export function samplePrior(
  spec: {
    cells: number;
    zeroBoundary?: boolean;
    lambdaSigma: number;
    lambdaSmooth: number;
    seed: number;
  },
  options?: BridgeOptions,
): Float64Array {
  const resp = runKernel(
    {
      op: "sample_prior",
      cells: spec.cells,
      zero_boundary: spec.zeroBoundary ?? false,
      lambda_sigma: spec.lambdaSigma,
      lambda_smooth: spec.lambdaSmooth,
      seed: spec.seed,
    },
    options,
  );
  return Float64Array.from(resp.theta);
}

/** Resample a uniformly sampled signal through the warp of the coefficients. */
export function warpSignal(
  spec: FieldSpec & { signal: ArrayLike<number> },
  options?: BridgeOptions,
): Float64Array {
  const req = { ...fieldRequest("warp_signal", spec), signal: Array.from(spec.signal) };
  return Float64Array.from(runKernel(req, options).warped);
}

/** Jointly align a batch of signals; rows are signals on a shared grid. */
export function alignJoint(
  spec: { signals: ArrayLike<number>[]; labels?: ArrayLike<number>; config?: AlignConfig },
  options?: BridgeOptions,
): AlignResult {
  const rows = spec.signals.length;
  if (rows === 0) {
    throw new ArgumentError("signals must be a nonempty array of rows");
  }
  const width = spec.signals[0].length;
  for (const row of spec.signals) {
    if (row.length !== width) {
      throw new ArgumentError("all signal rows must share one length");
    }
  }
  const resp = runKernel(
    {
      op: "align_joint",
      signals: spec.signals.map((r) => Array.from(r)),
      labels: spec.labels ? Array.from(spec.labels) : null,
      config: spec.config ?? {},
    },
    options,
  );
  const thetas = resp.thetas as number[][][];
  const n = thetas.length;
  const layers = thetas[0].length;
  const d = thetas[0][0].length;
  const aligned = resp.aligned as number[][];
  return {
    thetas: Float64Array.from(thetas.flat(2)),
    thetasShape: [n, layers, d],
    aligned: {
      rows: aligned.length,
      cols: aligned[0].length,
      data: Float64Array.from(aligned.flat()),
    },
    lossData: Float64Array.from(resp.loss_data),
    lossReg: Float64Array.from(resp.loss_reg),
  };
}
