/**
 * Parity suite: every bridged call must produce values exactly equal to the
 * primary library's own output, fetched independently through the CLI's
 * file-based interface.  20 seeded cases across integrate_grid, grad_grid
 * and align_joint, plus install-and-import smoke checks.
 */

import { execFileSync } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import {
  ArgumentError,
  alignJoint,
  gradGrid,
  integrateGrid,
  samplePrior,
  warpSignal,
} from "../src/index.js";

const PYTHON = process.env.CPAWARP_PYTHON ?? "python3";

/** Reference path: the CLI reads a request file and writes a response file. */
function referenceKernel(request: object): any {
  const dir = mkdtempSync(join(tmpdir(), "cpawarp-"));
  const reqPath = join(dir, "request.json");
  const outPath = join(dir, "response.json");
  writeFileSync(reqPath, JSON.stringify(request));
  execFileSync(PYTHON, ["-m", "cpawarp", "kernel", "--request", reqPath, "--out", outPath]);
  return JSON.parse(readFileSync(outPath, "utf8"));
}

/** Deterministic case generator (no RNG dependencies in the test). */
function caseTheta(seed: number, d: number): number[] {
  const theta: number[] = [];
  for (let j = 0; j < d; j++) {
    theta.push(Math.sin(1 + seed * 7.13 + j * 2.71) * 0.4);
  }
  return theta;
}

function linspace(n: number): number[] {
  return Array.from({ length: n }, (_, i) => i / (n - 1));
}

interface Case {
  seed: number;
  cells: number;
  zeroBoundary: boolean;
  d: number;
  squarings: number;
}

function makeCase(seed: number): Case {
  const cells = [4, 10, 16][seed % 3];
  const zeroBoundary = seed % 2 === 0;
  return {
    seed,
    cells,
    zeroBoundary,
    d: cells + (zeroBoundary ? -1 : 1),
    squarings: seed % 4 === 3 ? 4 : 0,
  };
}

describe("integrate_grid parity", () => {
  for (let seed = 0; seed < 8; seed++) {
    const c = makeCase(seed);
    it(`case ${seed} (cells=${c.cells}, zb=${c.zeroBoundary}, N=${c.squarings})`, () => {
      const theta = caseTheta(seed, c.d);
      const points = linspace(40 + seed);
      const bridged = integrateGrid({
        cells: c.cells,
        zeroBoundary: c.zeroBoundary,
        theta,
        points,
        squarings: c.squarings,
      });
      const reference = referenceKernel({
        op: "integrate_grid",
        cells: c.cells,
        zero_boundary: c.zeroBoundary,
        theta,
        points,
        squarings: c.squarings,
      });
      expect(Array.from(bridged)).toEqual(reference.phi);
    });
  }
});

describe("grad_grid parity", () => {
  for (let seed = 8; seed < 14; seed++) {
    const c = makeCase(seed);
    it(`case ${seed} (cells=${c.cells}, zb=${c.zeroBoundary})`, () => {
      const theta = caseTheta(seed, c.d);
      const points = linspace(25);
      const bridged = gradGrid({
        cells: c.cells,
        zeroBoundary: c.zeroBoundary,
        theta,
        points,
        squarings: c.squarings,
      });
      const reference = referenceKernel({
        op: "grad_grid",
        cells: c.cells,
        zero_boundary: c.zeroBoundary,
        theta,
        points,
        squarings: c.squarings,
      });
      expect(bridged.rows).toBe(reference.shape[0]);
      expect(bridged.cols).toBe(reference.shape[1]);
      expect(Array.from(bridged.data)).toEqual((reference.grad as number[][]).flat());
    });
  }
});

describe("align_joint parity", () => {
  for (let seed = 14; seed < 17; seed++) {
    it(`case ${seed}`, () => {
      const t = 16;
      const signals = [0, 1, 2].map((i) =>
        linspace(t).map((x) => Math.sin(2 * Math.PI * (x + 0.03 * i + 0.05 * seed))),
      );
      const config = { n_cells: 4, epochs: 3, seed, learning_rate: 0.05 };
      const labels = seed % 2 === 0 ? [0, 0, 1] : undefined;
      const bridged = alignJoint({ signals, labels, config });
      const reference = referenceKernel({
        op: "align_joint",
        signals,
        labels: labels ?? null,
        config,
      });
      expect(Array.from(bridged.thetas)).toEqual((reference.thetas as number[][][]).flat(2));
      expect(Array.from(bridged.aligned.data)).toEqual((reference.aligned as number[][]).flat());
      expect(Array.from(bridged.lossData)).toEqual(reference.loss_data);
      expect(Array.from(bridged.lossReg)).toEqual(reference.loss_reg);
    });
  }
});

describe("sample_prior and warp_signal parity", () => {
  for (let seed = 17; seed < 20; seed++) {
    const c = makeCase(seed);
    it(`case ${seed}`, () => {
      const drawn = samplePrior({
        cells: c.cells,
        zeroBoundary: c.zeroBoundary,
        lambdaSigma: 0.5,
        lambdaSmooth: 0.5,
        seed,
      });
      const refTheta = referenceKernel({
        op: "sample_prior",
        cells: c.cells,
        zero_boundary: c.zeroBoundary,
        lambda_sigma: 0.5,
        lambda_smooth: 0.5,
        seed,
      });
      expect(Array.from(drawn)).toEqual(refTheta.theta);

      const signal = linspace(32).map((x) => Math.cos(2 * Math.PI * x));
      const warped = warpSignal({
        cells: c.cells,
        zeroBoundary: c.zeroBoundary,
        theta: drawn,
        signal,
      });
      const refWarped = referenceKernel({
        op: "warp_signal",
        cells: c.cells,
        zero_boundary: c.zeroBoundary,
        theta: Array.from(drawn),
        signal,
      });
      expect(Array.from(warped)).toEqual(refWarped.warped);
    });
  }
});

describe("smoke", () => {
  it("imports and warps the identity", () => {
    const points = [0, 0.25, 0.5, 0.75, 1];
    const phi = integrateGrid({
      cells: 4,
      zeroBoundary: true,
      theta: new Float64Array(3),
      points,
    });
    expect(phi).toBeInstanceOf(Float64Array);
    expect(Array.from(phi)).toEqual(points);
  });

  it("rejects a wrong-length theta with an argument error naming d", () => {
    expect(() =>
      integrateGrid({ cells: 4, zeroBoundary: true, theta: [1], points: [0.5] }),
    ).toThrowError(/dimension is 3/);
    expect(() =>
      integrateGrid({ cells: 4, zeroBoundary: true, theta: [1], points: [0.5] }),
    ).toThrowError(ArgumentError);
  });

  it("rejects ragged signal batches locally", () => {
    expect(() => alignJoint({ signals: [[1, 2, 3], [1, 2]] })).toThrowError(ArgumentError);
  });
});
